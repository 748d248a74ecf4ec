"""Closed-form loss probabilities for pure loss systems.

``erlang_b`` is the M/M/n/0 blocking probability; ``gi_loss`` handles
renewal input through the interarrival transform ``r_j = E[exp(-j mu X)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp


@dataclass(frozen=True)
class InterarrivalLST:
    """Laplace-Stieltjes transform of an interarrival law at ``s = j * mu``.

    ``kind`` is ``"exponential"`` (parameter ``rate``) or
    ``"deterministic"`` (parameter ``mean``).
    """

    kind: str
    rate: float | None = None
    mean: float | None = None

    def __post_init__(self):
        if self.kind == "exponential":
            if not (self.rate and self.rate > 0):
                raise ValueError("exponential LST needs a positive rate")
        elif self.kind == "deterministic":
            if not (self.mean and self.mean > 0):
                raise ValueError("deterministic LST needs a positive mean")
        else:
            raise ValueError(f"unknown LST kind {self.kind!r}")

    @classmethod
    def exponential(cls, rate: float) -> InterarrivalLST:
        return cls("exponential", rate=rate)

    @classmethod
    def deterministic(cls, mean: float) -> InterarrivalLST:
        return cls("deterministic", mean=mean)

    def evaluate_at(self, s: float) -> float:
        return math.exp(self.log_r(s))

    def log_r(self, s: float) -> float:
        if self.kind == "exponential":
            return math.log(self.rate / (self.rate + s))
        return -s * self.mean

    def log_odds(self, s: float) -> float:
        """``log((1 - r) / r)`` evaluated without cancellation."""
        if self.kind == "exponential":
            return math.log(s / self.rate)
        x = s * self.mean
        return math.log(math.expm1(x))


def erlang_b(rho: float, n: int) -> float:
    """Blocking probability of M/M/n/0 with offered load ``rho``."""
    if not rho > 0:
        raise ValueError(f"offered load must be positive, got {rho!r}")
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    b = 1.0
    for k in range(1, int(n) + 1):
        b = rho * b / (k + rho * b)
    return b


def gi_loss(lst: InterarrivalLST, mu: float, n: int) -> float:
    """Blocking probability of GI/M/n/0, sums accumulated in log space."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    n = int(n)
    log_terms = np.empty(n + 1)
    log_prod = 0.0
    log_terms[0] = 0.0
    for i in range(1, n + 1):
        r = lst.evaluate_at(i * mu)
        if not 0.0 < r < 1.0:
            raise ValueError("degenerate LST")
        log_prod += lst.log_odds(i * mu)
        log_terms[i] = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1) + log_prod
    return float(math.exp(-logsumexp(log_terms)))
