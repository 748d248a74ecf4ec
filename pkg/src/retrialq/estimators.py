"""Loss-proportion estimators, balance residuals and replication aggregation.

Three finite-horizon estimators of the long-run loss proportion are
provided.  ``loss_sdn8`` works from the time-average number of busy
servers and needs no loss events at all; ``loss_sdn9`` counts arrivals at
full occupancy net of successful retrials; ``loss_sdn10`` is the direct
ratio of losses to arrivals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats as st
from scipy.special import logsumexp

from .engine import TrajectoryStats, merge


class Method(str, Enum):
    SDN8 = "sdn8"
    SDN9 = "sdn9"
    SDN10 = "sdn10"
    ANALYTIC = "analytic"


SIMULATION_METHODS = (Method.SDN8, Method.SDN9, Method.SDN10)


@dataclass(frozen=True)
class LossEstimate:
    method: Method
    value: float
    halfwidth: float
    replications: int
    effective_sample_size: float
    raw_value: float
    clamped: bool = False

    @property
    def lower(self) -> float:
        return self.raw_value - self.halfwidth

    @property
    def upper(self) -> float:
        return self.raw_value + self.halfwidth

    def covers(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def as_dict(self) -> dict:
        return {
            "method": Method(self.method).value,
            "value": self.value,
            "raw_value": self.raw_value,
            "halfwidth": self.halfwidth,
            "replications": self.replications,
            "effective_sample_size": self.effective_sample_size,
            "clamped": self.clamped,
        }


@dataclass(frozen=True)
class ResidualReport:
    """Balance residuals (LHS - RHS) and term magnitudes, indexed ``[i, j]``."""

    residual: np.ndarray
    scale: np.ndarray

    def relative(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.abs(self.residual) / self.scale
        return np.where(self.scale > 0, r, 0.0)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))


def _require_rate(lam: float) -> None:
    if not lam > 0:
        raise ValueError(f"arrival rate must be positive, got {lam!r}")


def _require_window(stats: TrajectoryStats) -> None:
    if not stats.elapsed > 0:
        raise ValueError("statistics cover no elapsed time")


def loss_sdn8(stats: TrajectoryStats, lam: float, mu: float, empirical_rate: bool = False) -> float:
    """Loss proportion from the mean number of busy servers.

    With ``empirical_rate`` the observed arrival rate replaces ``lam``;
    useful when the configured rate of a non-Poisson input is approximate.
    """
    _require_window(stats)
    if empirical_rate:
        lam = stats.total_arrivals / stats.elapsed
    _require_rate(lam)
    return (lam - mu * stats.int_q1 / stats.elapsed) / lam


def loss_sdn9(stats: TrajectoryStats, lam: float) -> float:
    _require_window(stats)
    _require_rate(lam)
    n = stats.n
    at_full = stats.arrivals_at[n].sum()
    successful_retrials = stats.retrials_at[:n, 1].sum()
    return (at_full - successful_retrials) / stats.elapsed / lam


def loss_sdn10(stats: TrajectoryStats) -> float:
    if stats.total_arrivals <= 0:
        raise ValueError("no arrivals observed")
    return stats.arrivals_at[stats.n, 1] / stats.total_arrivals


def estimate(stats: TrajectoryStats, method: Method, lam: float, mu: float,
             empirical_rate: bool = False) -> float:
    method = Method(method)
    if method is Method.SDN8:
        return loss_sdn8(stats, lam, mu, empirical_rate)
    if method is Method.SDN9:
        return loss_sdn9(stats, lam)
    if method is Method.SDN10:
        return loss_sdn10(stats)
    raise ValueError(f"{method.value} is not a simulation estimator")


def balance_residuals(occupancy: np.ndarray, arrival_freq: np.ndarray, retrial_freq: np.ndarray,
                      mu: float) -> ResidualReport:
    """Residuals of the per-state frequency balance equations.

    ``occupancy[i, j]`` is the long-run fraction of time in state ``(i, j)``;
    ``arrival_freq`` and ``retrial_freq`` are event rates observed in each
    pre-state.  Service enters through its compensator ``i * mu * occupancy``.
    The boundary rows follow the transition structure: state ``(n, 0)`` is
    fed by successful retrials from ``(n - 1, 1)``.
    """
    x, a, d = occupancy, arrival_freq, retrial_freq
    n = x.shape[0] - 1
    res = np.zeros((n + 1, 2))
    scale = np.zeros((n + 1, 2))

    def put(i, j, terms):
        res[i, j] = terms[0] - sum(terms[1:])
        scale[i, j] = max(abs(v) for v in terms)

    for j in (0, 1):
        put(0, j, [mu * x[1, j], a[0, j], j * d[0, j]])
    for i in range(1, n):
        for j in (0, 1):
            lhs = i * mu * x[i, j] - (i + 1) * mu * x[i + 1, j]
            inflow = a[i - 1, j] + (1 - j) * d[i - 1, 1]
            outflow = a[i, j] + j * d[i, 1]
            res[i, j] = lhs - (inflow - outflow)
            scale[i, j] = max(abs(i * mu * x[i, j]), abs((i + 1) * mu * x[i + 1, j]),
                              abs(inflow), abs(outflow))
    res[n, 0] = n * mu * x[n, 0] - (a[n - 1, 0] - a[n, 0] + d[n - 1, 1])
    scale[n, 0] = max(n * mu * x[n, 0], a[n - 1, 0], a[n, 0], d[n - 1, 1])
    put(n, 1, [n * mu * x[n, 1], a[n - 1, 1], a[n, 0]])
    return ResidualReport(res, scale)


def theorem1_residuals(stats: TrajectoryStats, mu: float) -> ResidualReport:
    """Finite-horizon residuals of the frequency balance equations."""
    _require_window(stats)
    t = stats.elapsed
    return balance_residuals(stats.occupation / t, stats.arrivals_at / t, stats.retrials_at / t, mu)


def aggregate(values, log_weights=None, method: Method = Method.SDN10,
              confidence: float = 0.95) -> LossEstimate:
    """Combine per-replication estimates into a point estimate and CI.

    Weights ``exp(log_weight)`` are self-normalized.  The halfwidth uses the
    delta-method variance of the weighted mean, which reduces to the usual
    ``t * s / sqrt(R)`` when all weights are equal.  One replication yields
    an infinite halfwidth.
    """
    v = np.asarray(values, dtype=float)
    r = v.size
    if r == 0:
        raise ValueError("no replications")
    lw = np.zeros(r) if log_weights is None else np.asarray(log_weights, dtype=float)
    if not np.isfinite(lw).any():
        raise ValueError("all importance weights are zero")
    w = np.exp(lw - logsumexp(lw))
    mean = float(np.dot(w, v))
    ess = float(1.0 / np.dot(w, w))
    if r > 1:
        var = r / (r - 1) * float(np.dot(w * w, (v - mean) ** 2))
        half = float(st.t.ppf(0.5 + confidence / 2, r - 1) * math.sqrt(var))
    else:
        half = math.inf
    clamped = min(max(mean, 0.0), 1.0)
    return LossEstimate(
        method=Method(method),
        value=clamped,
        halfwidth=half,
        replications=r,
        effective_sample_size=ess,
        raw_value=mean,
        clamped=clamped != mean,
    )


def estimate_replications(runs: list[TrajectoryStats], lam: float, mu: float,
                          methods=SIMULATION_METHODS, empirical_rate: bool = False,
                          confidence: float = 0.95) -> dict[Method, LossEstimate]:
    """Aggregate each estimator over independent (possibly weighted) replications."""
    lw = [s.log_weight for s in runs]
    out = {}
    for m in methods:
        m = Method(m)
        vals = [estimate(s, m, lam, mu, empirical_rate) for s in runs]
        out[m] = aggregate(vals, lw, m, confidence)
    return out


def batch_means(values, method: Method = Method.SDN10, confidence: float = 0.95) -> LossEstimate:
    """CI from consecutive batches of one long run (batches treated as independent)."""
    return aggregate(values, None, method, confidence)


def residual_standard_errors(batches: list[TrajectoryStats], mu: float) -> tuple[ResidualReport, np.ndarray]:
    """Residuals of the pooled window with batch-means standard errors."""
    pooled = theorem1_residuals(merge(batches), mu)
    per_batch = np.array([theorem1_residuals(b, mu).residual for b in batches])
    se = per_batch.std(axis=0, ddof=1) / math.sqrt(len(batches))
    return pooled, se
