"""Arrival and retrial point processes.

A process is described by a :class:`PointProcessSpec` and driven by an
:class:`RngStream`.  Poisson processes may carry a ``proposal_rate``: the
increments are then sampled at the proposal rate and every increment
contributes a log-likelihood-ratio term back to the nominal rate.

Stream derivation (stable across versions): the generator of stream
``stream_id`` under root ``seed`` is
``PCG64(SeedSequence(seed, spawn_key=(stream_id,)))``.  The engine assigns
``stream_id = 3 * replication + k`` with ``k = 0`` (arrivals), ``1``
(retrials), ``2`` (service).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

ARRIVAL, RETRIAL, SERVICE = 0, 1, 2
STREAMS_PER_REPLICATION = 3


class ProcessKind(str, Enum):
    POISSON = "poisson"
    DETERMINISTIC = "deterministic"
    RENEWAL = "renewal"


RENEWAL_DISTRIBUTIONS = ("uniform", "gamma")


@dataclass(frozen=True)
class PointProcessSpec:
    """Law of the inter-event times of a stationary point process.

    ``rate`` is the long-run event rate.  For ``renewal`` processes the
    ``distribution`` is ``"uniform"`` (on ``[0, 2/rate]``) or ``"gamma"``
    (with ``shape``; scale chosen so the mean is ``1/rate``).  A zero rate
    describes a process that never fires.
    """

    kind: ProcessKind = ProcessKind.POISSON
    rate: float = 1.0
    distribution: str | None = None
    shape: float | None = None
    proposal_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcessKind(self.kind))
        if not (self.rate >= 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be a finite nonnegative number, got {self.rate!r}")
        if self.proposal_rate is not None:
            if self.kind is not ProcessKind.POISSON:
                raise ValueError("proposal_rate is only allowed for poisson processes")
            if not (self.proposal_rate > 0.0 and math.isfinite(self.proposal_rate)):
                raise ValueError(f"proposal_rate must be positive, got {self.proposal_rate!r}")
            if self.rate == 0.0:
                raise ValueError("proposal_rate requires a positive nominal rate")
        if self.kind is ProcessKind.RENEWAL:
            if self.distribution not in RENEWAL_DISTRIBUTIONS:
                raise ValueError(
                    f"renewal distribution must be one of {RENEWAL_DISTRIBUTIONS}, "
                    f"got {self.distribution!r}"
                )
            if self.distribution == "gamma" and not (self.shape and self.shape > 0):
                raise ValueError("gamma renewal requires a positive shape")
        elif self.distribution is not None:
            raise ValueError(f"distribution is only meaningful for renewal kind, not {self.kind.value}")

    @property
    def sampling_rate(self) -> float:
        return self.proposal_rate if self.proposal_rate is not None else self.rate

    @property
    def is_weighted(self) -> bool:
        return self.proposal_rate is not None and self.proposal_rate != self.rate

    @property
    def fires(self) -> bool:
        return self.rate > 0.0


@dataclass
class RngStream:
    """Independent, reproducible random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    @classmethod
    def for_replication(cls, seed: int, replication: int, process: int) -> RngStream:
        return cls(seed, STREAMS_PER_REPLICATION * replication + process)


def increments(spec: PointProcessSpec, stream: RngStream, size: int) -> np.ndarray:
    """Draw ``size`` consecutive inter-event times."""
    if not spec.fires:
        return np.full(size, np.inf)
    rate = spec.sampling_rate
    if spec.kind is ProcessKind.DETERMINISTIC:
        return np.full(size, 1.0 / rate)
    gen = stream.generator
    if spec.kind is ProcessKind.POISSON:
        return gen.standard_exponential(size) / rate
    if spec.distribution == "uniform":
        return gen.uniform(0.0, 2.0 / rate, size)
    return gen.gamma(spec.shape, 1.0 / (spec.shape * rate), size)


def next_increment(spec: PointProcessSpec, stream: RngStream) -> float:
    """Time until the next event of the process."""
    return float(increments(spec, stream, 1)[0])


def log_likelihood_ratio(nominal_rate, proposal_rate, increment):
    """Log of the density ratio of an exponential increment, nominal over proposal.

    Summed over a trajectory's increments this gives the trajectory
    log-weight.  Works elementwise on arrays.
    """
    return math.log(nominal_rate / proposal_rate) + (proposal_rate - nominal_rate) * np.asarray(increment)


def log_survival_ratio(nominal_rate, proposal_rate, elapsed):
    """Log-ratio of exponential survival functions for a censored last increment."""
    return (proposal_rate - nominal_rate) * np.asarray(elapsed)
