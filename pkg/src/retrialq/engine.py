"""Discrete-event simulation of the busy-server / orbit / loss process.

The state is ``(q1, q2, q3)``: busy servers, orbit occupancy and cumulative
losses.  Arrivals and retrials come from exogenous point processes; the
retrial process is free-running, so an epoch that finds the orbit empty
(or all servers busy) changes nothing.  Service is one exponential clock at
rate ``q1 * mu``, redrawn whenever ``q1`` changes.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import _kernel as K
from .processes import (
    ARRIVAL,
    RETRIAL,
    SERVICE,
    PointProcessSpec,
    ProcessKind,
    RngStream,
    increments,
    log_survival_ratio,
)

CHUNK = 1 << 16
FIRST_CHUNK = 1 << 8
DEFAULT_WARMUP_FRACTION = 0.05
EVENT_NAMES = ("arrival", "retrial", "service")


class InvariantViolation(RuntimeError):
    """Internal state left its admissible range or broke conservation."""


@dataclass(frozen=True)
class SystemConfig:
    n: int
    mu: float
    arrival: PointProcessSpec
    retrial: PointProcessSpec
    horizon: float | None = None
    arrival_budget: int | None = None
    warmup: float | None = None
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        if (self.horizon is None) == (self.arrival_budget is None):
            raise ValueError("exactly one of horizon and arrival_budget must be given")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.arrival_budget is not None:
            if self.arrival_budget < 1:
                raise ValueError("arrival_budget must be positive")
            if not self.arrival.fires:
                raise ValueError("an arrival budget needs a positive arrival rate")
        if self.warmup is not None and self.warmup < 0:
            raise ValueError("warmup must be nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    def with_n(self, n: int) -> SystemConfig:
        return dataclasses.replace(self, n=n)

    def resolved_warmup(self, warmup: float | None = None) -> float:
        if warmup is None:
            warmup = self.warmup
        if warmup is not None:
            return float(warmup)
        if self.horizon is not None:
            return DEFAULT_WARMUP_FRACTION * self.horizon
        return DEFAULT_WARMUP_FRACTION * self.arrival_budget / self.arrival.rate


@dataclass(frozen=True)
class SystemState:
    q1: int = 0
    q2: int = 0
    q3: int = 0
    clock: float = 0.0
    next_arrival: float | None = None
    next_retrial: float | None = None
    next_service: float | None = None


@dataclass(eq=False)
class TrajectoryStats:
    """Time and event integrals accumulated over a measurement window."""

    n: int
    elapsed: float = 0.0
    int_q1: float = 0.0
    occupation: np.ndarray = None
    arrivals_at: np.ndarray = None
    retrials_at: np.ndarray = None
    total_arrivals: int = 0
    total_losses: int = 0
    total_completions: int = 0
    log_weight: float = 0.0

    def __post_init__(self):
        shape = (self.n + 1, 2)
        if self.occupation is None:
            self.occupation = np.zeros(shape)
        if self.arrivals_at is None:
            self.arrivals_at = np.zeros(shape, dtype=np.int64)
        if self.retrials_at is None:
            self.retrials_at = np.zeros(shape, dtype=np.int64)

    def copy(self) -> TrajectoryStats:
        return dataclasses.replace(
            self,
            occupation=self.occupation.copy(),
            arrivals_at=self.arrivals_at.copy(),
            retrials_at=self.retrials_at.copy(),
        )

    def __add__(self, other: TrajectoryStats) -> TrajectoryStats:
        if other.n != self.n:
            raise ValueError("cannot merge statistics for different n")
        return TrajectoryStats(
            n=self.n,
            elapsed=self.elapsed + other.elapsed,
            int_q1=self.int_q1 + other.int_q1,
            occupation=self.occupation + other.occupation,
            arrivals_at=self.arrivals_at + other.arrivals_at,
            retrials_at=self.retrials_at + other.retrials_at,
            total_arrivals=self.total_arrivals + other.total_arrivals,
            total_losses=self.total_losses + other.total_losses,
            total_completions=self.total_completions + other.total_completions,
            log_weight=self.log_weight + other.log_weight,
        )

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "elapsed": self.elapsed,
            "int_q1": self.int_q1,
            "occupation": self.occupation.tolist(),
            "arrivals_at": self.arrivals_at.tolist(),
            "retrials_at": self.retrials_at.tolist(),
            "total_arrivals": self.total_arrivals,
            "total_losses": self.total_losses,
            "total_completions": self.total_completions,
            "log_weight": self.log_weight,
        }


def merge(stats: list[TrajectoryStats]) -> TrajectoryStats:
    """Sum statistics; the operation is associative and order-independent."""
    if not stats:
        raise ValueError("nothing to merge")
    total = stats[0].copy()
    for s in stats[1:]:
        total = total + s
    return total


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str
    pre: tuple[int, int]
    post: tuple[int, int]
    loss: bool

    def as_dict(self) -> dict:
        return {
            "time": self.time,
            "kind": self.kind,
            "pre": list(self.pre),
            "post": list(self.post),
            "loss": self.loss,
        }


class Simulation:
    """One trajectory of the system, advanced by the compiled event loop.

    ``measuring`` controls whether elapsed time and events are added to the
    statistics; the importance-sampling log-weight always covers the whole
    trajectory.
    """

    def __init__(self, config: SystemConfig, replication: int = 0,
                 state: SystemState | None = None, chunk: int = CHUNK):
        self.config = config
        self.replication = replication
        self.chunk = chunk
        # buffers start small and double, so short runs stay cheap
        self._sizes = [min(FIRST_CHUNK, chunk)] * 3
        self.measuring = True
        seed = config.seed
        self._streams = [RngStream.for_replication(seed, replication, k) for k in (ARRIVAL, RETRIAL, SERVICE)]
        a, d = config.arrival, config.retrial
        self._params = np.zeros(K.N_PARAM)
        self._params[K.P_N] = config.n
        self._params[K.P_MU] = config.mu
        self._params[K.P_LAM] = a.rate
        self._params[K.P_LAM_S] = a.sampling_rate
        self._params[K.P_DELTA] = d.rate
        self._params[K.P_A_DET] = float(a.kind is ProcessKind.DETERMINISTIC)
        self._params[K.P_D_DET] = float(d.kind is ProcessKind.DETERMINISTIC)
        self._params[K.P_WEIGHTED] = float(a.is_weighted)

        shape = (config.n + 1, 2)
        self._occ = np.zeros(shape)
        self._arr = np.zeros(shape, dtype=np.int64)
        self._ret = np.zeros(shape, dtype=np.int64)
        self._fs = np.zeros(K.N_FLOAT)
        self._si = np.zeros(K.N_INT, dtype=np.int64)
        self._pos = np.zeros(3, dtype=np.int64)
        self._bufs = [self._draw(k) for k in (ARRIVAL, RETRIAL, SERVICE)]
        self._init_state(state or SystemState())

    def _spec(self, k: int) -> PointProcessSpec | None:
        return (self.config.arrival, self.config.retrial, None)[k]

    def _draw(self, k: int) -> np.ndarray:
        size = self._sizes[k]
        self._sizes[k] = min(2 * size, self.chunk)
        if k == SERVICE:
            return self._streams[k].generator.standard_exponential(size)
        spec = self._spec(k)
        if spec.kind is ProcessKind.DETERMINISTIC or not spec.fires:
            # consumed only through the epoch counter; keep the buffer non-empty
            return np.full(1, 1.0 / spec.rate if spec.fires else np.inf)
        return increments(spec, self._streams[k], size)

    def _take(self, k: int) -> float:
        if self._pos[k] >= self._bufs[k].size:
            self._refill(k)
        v = self._bufs[k][self._pos[k]]
        self._pos[k] += 1
        return float(v)

    def _refill(self, k: int):
        self._bufs[k] = self._draw(k)
        self._pos[k] = 0

    def _init_state(self, s: SystemState):
        n = self.config.n
        if not (0 <= s.q1 <= n and s.q2 in (0, 1) and s.q3 >= 0):
            raise InvariantViolation(f"inconsistent initial state {s}")
        fs, si = self._fs, self._si
        si[K.I_Q1], si[K.I_Q2], si[K.I_Q3] = s.q1, s.q2, s.q3
        # customers present at the start count as arrivals for conservation
        si[K.I_ARRIVALS] = s.q1 + s.q2 + s.q3
        fs[K.F_CLOCK] = s.clock
        a, d = self.config.arrival, self.config.retrial

        if s.next_arrival is not None:
            fs[K.F_NEXT_A] = s.next_arrival
            fs[K.F_INC_A] = s.next_arrival - s.clock
        elif not a.fires:
            fs[K.F_NEXT_A] = np.inf
        elif a.kind is ProcessKind.DETERMINISTIC:
            fs[K.F_NEXT_A] = s.clock + 1.0 / a.rate
        else:
            fs[K.F_INC_A] = self._take(ARRIVAL)
            fs[K.F_NEXT_A] = s.clock + fs[K.F_INC_A]
        if s.next_retrial is not None:
            fs[K.F_NEXT_D] = s.next_retrial
        elif not d.fires:
            fs[K.F_NEXT_D] = np.inf
        elif d.kind is ProcessKind.DETERMINISTIC:
            fs[K.F_NEXT_D] = s.clock + 1.0 / d.rate
        else:
            fs[K.F_NEXT_D] = s.clock + self._take(RETRIAL)
        if s.next_service is not None:
            fs[K.F_NEXT_S] = s.next_service
        elif s.q1 > 0:
            fs[K.F_NEXT_S] = s.clock + self._take(SERVICE) / (s.q1 * self.config.mu)
        else:
            fs[K.F_NEXT_S] = np.inf
        # deterministic epochs are k / rate measured from the clock origin
        if a.kind is ProcessKind.DETERMINISTIC and a.fires:
            si[K.I_K_A] = round(fs[K.F_NEXT_A] * a.rate)
        if d.kind is ProcessKind.DETERMINISTIC and d.fires:
            si[K.I_K_D] = round(fs[K.F_NEXT_D] * d.rate)

    # -- driving the kernel -------------------------------------------------

    def _advance(self, stop_time: float, stop_arrivals: int = -1, max_events: int = 1 << 62) -> int:
        while True:
            code = K.advance(
                self._fs, self._si, self._params, self._occ, self._arr, self._ret,
                self._bufs[0], self._bufs[1], self._bufs[2], self._pos,
                float(stop_time), int(stop_arrivals), int(max_events), self.measuring,
            )
            if code == K.REFILL:
                for k in range(3):
                    if self._pos[k] >= self._bufs[k].size:
                        self._refill(k)
                continue
            if code == K.VIOLATION:
                raise InvariantViolation(
                    f"state {self.state} broke 0 <= q1 <= n or the conservation law "
                    f"(arrivals={self._si[K.I_ARRIVALS]}, completions={self._si[K.I_COMPLETIONS]})"
                )
            return code

    def advance_to(self, t: float) -> None:
        """Run every event with epoch <= t, then move the clock to t."""
        self._advance(t)

    def advance_arrivals(self, count: int) -> None:
        """Run until ``count`` more arrivals have occurred."""
        self._advance(np.inf, self._si[K.I_ARRIVALS] + count)

    def step(self) -> EventRecord:
        """Apply exactly one transition at the earliest pending event."""
        pre = (int(self._si[K.I_Q1]), int(self._si[K.I_Q2]))
        code = self._advance(np.inf, max_events=1)
        if code == K.IDLE:
            raise RuntimeError("no pending event")
        return EventRecord(
            time=float(self._fs[K.F_CLOCK]),
            kind=EVENT_NAMES[self._si[K.I_LAST_KIND]],
            pre=pre,
            post=(int(self._si[K.I_Q1]), int(self._si[K.I_Q2])),
            loss=bool(self._si[K.I_LAST_LOSS]),
        )

    def events(self, until: float) -> Iterator[EventRecord]:
        while self.next_event_time <= until:
            yield self.step()
        self.advance_to(until)

    @property
    def next_event_time(self) -> float:
        return float(min(self._fs[K.F_NEXT_A], self._fs[K.F_NEXT_D], self._fs[K.F_NEXT_S]))

    @property
    def state(self) -> SystemState:
        fs, si = self._fs, self._si
        return SystemState(
            q1=int(si[K.I_Q1]),
            q2=int(si[K.I_Q2]),
            q3=int(si[K.I_Q3]),
            clock=float(fs[K.F_CLOCK]),
            next_arrival=float(fs[K.F_NEXT_A]),
            next_retrial=float(fs[K.F_NEXT_D]),
            next_service=float(fs[K.F_NEXT_S]) if si[K.I_Q1] > 0 else None,
        )

    @property
    def completions(self) -> int:
        """All-time service completions (the conservation law uses these)."""
        return int(self._si[K.I_COMPLETIONS])

    @property
    def arrivals(self) -> int:
        return int(self._si[K.I_ARRIVALS])

    def trajectory_log_weight(self) -> float:
        """Log-likelihood ratio of the path on ``[0, clock]``, censored last increment included."""
        a = self.config.arrival
        lw = float(self._fs[K.F_LOGW])
        if a.is_weighted:
            last_arrival = self._fs[K.F_NEXT_A] - self._fs[K.F_INC_A]
            lw += float(log_survival_ratio(a.rate, a.sampling_rate, self._fs[K.F_CLOCK] - last_arrival))
        return lw

    @property
    def stats(self) -> TrajectoryStats:
        fs, si = self._fs, self._si
        return TrajectoryStats(
            n=self.config.n,
            elapsed=float(fs[K.F_ELAPSED]),
            int_q1=float(fs[K.F_INT_Q1]),
            occupation=self._occ.copy(),
            arrivals_at=self._arr.copy(),
            retrials_at=self._ret.copy(),
            total_arrivals=int(si[K.I_M_ARRIVALS]),
            total_losses=int(si[K.I_M_LOSSES]),
            total_completions=int(si[K.I_M_COMPLETIONS]),
            log_weight=self.trajectory_log_weight(),
        )

    def reset_stats(self) -> None:
        self._occ[:] = 0
        self._arr[:] = 0
        self._ret[:] = 0
        self._fs[K.F_ELAPSED] = 0.0
        self._fs[K.F_INT_Q1] = 0.0
        self._si[K.I_M_ARRIVALS] = 0
        self._si[K.I_M_LOSSES] = 0
        self._si[K.I_M_COMPLETIONS] = 0


def _check_window(config: SystemConfig, warmup: float) -> None:
    if warmup < 0:
        raise ValueError("warmup must be nonnegative")
    if config.horizon is not None and not config.horizon > warmup:
        raise ValueError("empty measurement window")


def run(config: SystemConfig, warmup: float | None = None, replication: int = 0,
        on_event: Callable[[EventRecord], None] | None = None) -> TrajectoryStats:
    """Simulate from the empty system and return post-warmup statistics.

    With ``on_event`` every transition is reported as an :class:`EventRecord`
    (slow: one kernel call per event).
    """
    warmup = config.resolved_warmup(warmup)
    _check_window(config, warmup)
    sim = Simulation(config, replication)
    sim.measuring = False
    if on_event is None:
        sim.advance_to(warmup)
        sim.measuring = True
        if config.horizon is not None:
            sim.advance_to(config.horizon)
        else:
            sim.advance_arrivals(config.arrival_budget)
        return sim.stats

    for ev in sim.events(warmup):
        on_event(ev)
    sim.measuring = True
    if config.horizon is not None:
        for ev in sim.events(config.horizon):
            on_event(ev)
    else:
        target = sim.arrivals + config.arrival_budget
        while sim.arrivals < target:
            on_event(sim.step())
    return sim.stats


def replicate(config: SystemConfig, warmup: float | None = None, threads: int = 1) -> list[TrajectoryStats]:
    """Independent replications, ordered by replication index."""
    reps = range(config.replications)
    if threads <= 1 or config.replications == 1:
        return [run(config, warmup, r) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: run(config, warmup, r), reps))


def run_batches(config: SystemConfig, batches: int, warmup: float | None = None,
                replication: int = 0) -> list[TrajectoryStats]:
    """Split one long post-warmup window into ``batches`` consecutive windows."""
    if batches < 1:
        raise ValueError("batches must be positive")
    warmup = config.resolved_warmup(warmup)
    _check_window(config, warmup)
    sim = Simulation(config, replication)
    sim.measuring = False
    sim.advance_to(warmup)
    sim.measuring = True
    out = []
    prev_lw = sim.trajectory_log_weight()
    for b in range(1, batches + 1):
        sim.reset_stats()
        if config.horizon is not None:
            sim.advance_to(warmup + (config.horizon - warmup) * b / batches)
        else:
            sim.advance_arrivals(config.arrival_budget // batches + (b <= config.arrival_budget % batches))
        s = sim.stats
        lw = s.log_weight
        s.log_weight = lw - prev_lw
        prev_lw = lw
        out.append(s)
    return out


def empirical_rate(stats: TrajectoryStats) -> float:
    return stats.total_arrivals / stats.elapsed if stats.elapsed > 0 else math.nan
