"""Search for the smallest server count whose loss proportion is at most alpha.

The loss curve is taken to be nonincreasing in ``n``.  The search seeds its
upper end with a closed-form bound (treating every retrial as a fresh
arrival), bisects, and doubles the upper end if the seed turns out to be
infeasible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Protocol

from . import markov
from .bounds import InterarrivalLST, erlang_b, gi_loss
from .engine import SystemConfig, replicate
from .estimators import LossEstimate, Method, aggregate, estimate

FEASIBLE, INFEASIBLE, UNDECIDED = "feasible", "infeasible", "undecided"
OPTIMAL, INCONCLUSIVE = "optimal", "inconclusive"
MAX_BOUND_N = 100_000


class Evaluator(Protocol):
    kind: str

    def __call__(self, n: int, effort: int = 1) -> LossEstimate: ...


@dataclass(frozen=True)
class Probe:
    n: int
    value: float
    halfwidth: float
    evaluator: str
    effort: int
    verdict: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SearchTrace:
    alpha: float
    n_lower: int
    n_upper: int
    probes: list[Probe] = field(default_factory=list)
    result: int | None = None
    status: str = OPTIMAL
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_lower": self.n_lower,
            "n_upper": self.n_upper,
            "probes": [p.as_dict() for p in self.probes],
            "result": self.result,
            "status": self.status,
            "message": self.message,
        }

    @property
    def probed(self) -> list[int]:
        return [p.n for p in self.probes]


def upper_bound_servers(lam: float, delta: float, mu: float, alpha: float,
                        arrival_kind: str = "poisson") -> int:
    """Smallest n whose closed-form loss at input rate ``lam + delta`` is <= alpha."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    rate = lam + delta
    if arrival_kind == "poisson":
        loss = lambda n: erlang_b(rate / mu, n)
    elif arrival_kind == "deterministic":
        lst = InterarrivalLST.deterministic(1.0 / rate)
        loss = lambda n: gi_loss(lst, mu, n)
    else:
        raise ValueError(f"no closed-form bound for arrival kind {arrival_kind!r}")
    n = 1
    while loss(n) > alpha:
        n += 1
        if n > MAX_BOUND_N:
            raise RuntimeError("bound search did not terminate")
    return n


def classify(est: LossEstimate, alpha: float) -> str:
    if est.raw_value + est.halfwidth <= alpha:
        return FEASIBLE
    if est.raw_value - est.halfwidth > alpha:
        return INFEASIBLE
    return UNDECIDED


def minimal_servers(evaluator: Evaluator, alpha: float, n_lower: int, n_upper: int,
                    max_effort: int = 8) -> SearchTrace:
    """Bisection on ``[n_lower, n_upper]`` for the first feasible n.

    ``n_upper`` is treated as a tentative feasible point and verified only if
    every midpoint below it is infeasible; if it fails, the bracket doubles.
    An undecided simulated probe is re-evaluated with doubled effort up to
    ``max_effort``, after which the search stops as inconclusive.
    """
    if not 1 <= n_lower <= n_upper:
        raise ValueError("need 1 <= n_lower <= n_upper")
    trace = SearchTrace(alpha, n_lower, n_upper)
    verdicts: dict[int, str] = {}
    kind = getattr(evaluator, "kind", "custom")

    def probe(n: int) -> str | None:
        if n in verdicts:
            return verdicts[n]
        effort = 1
        while True:
            est = evaluator(n, effort)
            v = classify(est, alpha)
            trace.probes.append(Probe(n, est.raw_value, est.halfwidth, kind, effort, v))
            if v != UNDECIDED:
                verdicts[n] = v
                return v
            if effort * 2 > max_effort:
                trace.status = INCONCLUSIVE
                trace.message = f"inconclusive at n={n}"
                return None
            effort *= 2

    lo, hi = n_lower, n_upper
    while True:
        while hi - lo > 1:
            mid = lo + (hi - lo) // 2
            v = probe(mid)
            if v is None:
                return trace
            if v == FEASIBLE:
                hi = mid
            else:
                lo = mid
        # lo is infeasible unless it is the untested lower end
        if lo not in verdicts:
            v = probe(lo)
            if v is None:
                return trace
            if v == FEASIBLE:
                hi = lo
                break
        if hi != lo:
            v = probe(hi)
            if v is None:
                return trace
            if v == FEASIBLE:
                break
        if 2 * hi > MAX_BOUND_N:
            trace.status = INCONCLUSIVE
            trace.message = f"no feasible n up to {hi}"
            return trace
        lo, hi = hi, 2 * hi
        trace.n_upper = hi
    trace.result = hi
    trace.status = OPTIMAL
    return trace


class MarkovEvaluator:
    """Exact loss for Poisson arrivals and retrials."""

    kind = "markov"

    def __init__(self, lam: float, delta: float, mu: float):
        self.lam, self.delta, self.mu = lam, delta, mu

    def __call__(self, n: int, effort: int = 1) -> LossEstimate:
        f = markov.loss_markov(markov.stationary(self.lam, self.delta, self.mu, n),
                               self.lam, self.delta, self.mu).direct
        return LossEstimate(Method.ANALYTIC, min(max(f, 0.0), 1.0), 0.0, 1, 1.0, f, f < 0)


class SimulationEvaluator:
    """Replicated simulation; effort multiplies the replication count."""

    kind = "simulation"

    def __init__(self, config: SystemConfig, method: Method = Method.SDN10,
                 empirical_rate: bool = False, threads: int = 1,
                 on_estimate: Callable[[int, LossEstimate], None] | None = None):
        self.config = config
        self.method = Method(method)
        self.empirical_rate = empirical_rate
        self.threads = threads
        self.on_estimate = on_estimate

    def __call__(self, n: int, effort: int = 1) -> LossEstimate:
        cfg = dataclasses.replace(self.config, n=n, replications=self.config.replications * effort)
        runs = replicate(cfg, threads=self.threads)
        lam = cfg.arrival.rate
        vals = [estimate(s, self.method, lam, cfg.mu, self.empirical_rate) for s in runs]
        est = aggregate(vals, [s.log_weight for s in runs], self.method)
        if self.on_estimate is not None:
            self.on_estimate(n, est)
        return est
