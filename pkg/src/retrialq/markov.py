"""Exact stationary analysis when arrivals and retrials are both Poisson.

The chain lives on states ``(i, j)``, ``i = 0..n`` busy servers and
``j in {0, 1}`` orbit occupancy, flattened as ``2 * i + j``.  Transitions:

* arrival (rate ``lam``): ``(i, j) -> (i + 1, j)`` for ``i < n``;
  ``(n, 0) -> (n, 1)``; at ``(n, 1)`` the customer is lost;
* service (rate ``i * mu``): ``(i, j) -> (i - 1, j)``;
* retrial (rate ``delta``): ``(i, 1) -> (i + 1, 0)`` for ``i < n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .estimators import ResidualReport, balance_residuals


def state_index(i: int, j: int) -> int:
    return 2 * i + j


@dataclass(frozen=True)
class BalanceSystem:
    lam: float
    delta: float
    mu: float
    n: int
    generator: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class StationaryDistribution:
    p: np.ndarray  # shape (n + 1, 2)

    @property
    def n(self) -> int:
        return self.p.shape[0] - 1

    def busy_marginal(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def mean_busy(self) -> float:
        return float(np.arange(self.n + 1) @ self.busy_marginal())


class MarkovLosses(NamedTuple):
    direct: float
    balance: float
    occupancy: float

    def max_discrepancy(self) -> float:
        return max(self) - min(self)


def _check_rates(lam, delta, mu, n):
    if not (lam > 0 and delta >= 0 and mu > 0):
        raise ValueError(f"need lam > 0, delta >= 0, mu > 0; got {lam}, {delta}, {mu}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")


def generator_matrix(lam: float, delta: float, mu: float, n: int) -> np.ndarray:
    size = 2 * (n + 1)
    q = np.zeros((size, size))
    for i in range(n + 1):
        for j in (0, 1):
            s = state_index(i, j)
            if i < n:
                q[s, state_index(i + 1, j)] += lam
            elif j == 0:
                q[s, state_index(n, 1)] += lam
            if i > 0:
                q[s, state_index(i - 1, j)] += i * mu
            if j == 1 and i < n:
                q[s, state_index(i + 1, 0)] += delta
    q[np.diag_indices(size)] = -q.sum(axis=1)
    return q


def build_balance_system(lam: float, delta: float, mu: float, n: int) -> BalanceSystem:
    """Global balance ``p Q = 0`` with the last equation replaced by ``sum p = 1``."""
    _check_rates(lam, delta, mu, n)
    q = generator_matrix(lam, delta, mu, n)
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(a.shape[0])
    b[-1] = 1.0
    return BalanceSystem(lam, delta, mu, n, q, a, b)


def solve_stationary(system: BalanceSystem, tol: float = 1e-10) -> StationaryDistribution:
    try:
        x = np.linalg.solve(system.matrix, system.rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"balance system is singular: {exc}") from None
    if np.any(x < -1e-12):
        raise ValueError(f"solution has negative mass {x.min():.3e}")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    flow = x @ system.generator
    out = np.abs(x) * np.abs(np.diag(system.generator))
    scale = max(float(out.max()), 1.0)
    if np.abs(flow).max() > tol * scale:
        raise ValueError(f"balance residual {np.abs(flow).max():.3e} exceeds tolerance")
    return StationaryDistribution(x.reshape(system.n + 1, 2))


def stationary(lam: float, delta: float, mu: float, n: int) -> StationaryDistribution:
    return solve_stationary(build_balance_system(lam, delta, mu, n))


def loss_markov(dist: StationaryDistribution, lam: float, delta: float, mu: float) -> MarkovLosses:
    """Loss proportion three ways: direct, arrival/retrial balance, busy-server occupancy."""
    p = dist.p
    n = dist.n
    direct = float(p[n, 1])
    balance = float((lam * p[n].sum() - delta * p[:n, 1].sum()) / lam)
    occupancy = float(1.0 - mu / lam * dist.mean_busy())
    return MarkovLosses(direct, balance, occupancy)


def stationary_residuals(dist: StationaryDistribution, lam: float, delta: float, mu: float) -> ResidualReport:
    """Frequency-balance residuals with Poisson event rates ``lam * p`` and ``delta * p``."""
    return balance_residuals(dist.p, lam * dist.p, delta * dist.p, mu)


# -- literal variant of the balance equations --------------------------------

def literal_corollary_rows(lam: float, delta: float, mu: float, n: int) -> np.ndarray:
    """Coefficient rows of the literal equation variant, one per state.

    Two row families differ from the transition structure: the ``(i, 1)`` rows carry
    ``-P[i, 1]`` without the retrial rate, and the ``(n, 0)`` row is fed by
    ``delta * P[n, 1]`` instead of ``delta * P[n - 1, 1]``.
    """
    _check_rates(lam, delta, mu, n)
    size = 2 * (n + 1)
    rows = np.zeros((size, size))
    for j in (0, 1):
        r = rows[state_index(0, j)]
        r[state_index(1, j)] += mu
        r[state_index(0, j)] -= lam + j * delta
    for i in range(1, n):
        for j in (0, 1):
            r = rows[state_index(i, j)]
            r[state_index(i, j)] += i * mu + lam
            r[state_index(i + 1, j)] -= (i + 1) * mu
            r[state_index(i - 1, j)] -= lam
            r[state_index(i - 1, 1)] -= (1 - j) * delta
            r[state_index(i, 1)] += j * 1.0
    r = rows[state_index(n, 0)]
    r[state_index(n, 0)] += n * mu + lam
    r[state_index(n - 1, 0)] -= lam
    r[state_index(n, 1)] -= delta
    r = rows[state_index(n, 1)]
    r[state_index(n, 1)] += n * mu
    r[state_index(n - 1, 1)] -= lam
    r[state_index(n, 0)] -= lam
    return rows


@dataclass(frozen=True)
class LiteralSolution:
    dist: StationaryDistribution
    losses: MarkovLosses
    residual_norm: float


def solve_literal_corollary(lam: float, delta: float, mu: float, n: int) -> LiteralSolution:
    """Least-squares solution of the literal equations plus normalization.

    The literal system is inconsistent (it has only the zero solution), so
    no exact distribution exists; ``residual_norm`` reports how far the
    best fit is from satisfying it.
    """
    rows = literal_corollary_rows(lam, delta, mu, n)
    a = np.vstack([rows, np.ones(rows.shape[1])])
    b = np.zeros(a.shape[0])
    b[-1] = 1.0
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    dist = StationaryDistribution(x.reshape(n + 1, 2))
    return LiteralSolution(dist, loss_markov(dist, lam, delta, mu), float(np.linalg.norm(rows @ x)))
