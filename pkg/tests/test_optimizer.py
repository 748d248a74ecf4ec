import math

import pytest

from retrialq.engine import SystemConfig
from retrialq.estimators import LossEstimate, Method
from retrialq.optimizer import (
    FEASIBLE,
    INFEASIBLE,
    UNDECIDED,
    MarkovEvaluator,
    SimulationEvaluator,
    classify,
    minimal_servers,
    upper_bound_servers,
)
from retrialq.processes import PointProcessSpec


class Table:
    """Evaluator over a fixed loss curve with an optional halfwidth schedule."""

    kind = "table"

    def __init__(self, loss, halfwidth=lambda n, effort: 0.0):
        self.loss, self.halfwidth, self.calls = loss, halfwidth, []

    def __call__(self, n, effort=1):
        self.calls.append((n, effort))
        f = self.loss(n)
        return LossEstimate(Method.ANALYTIC, f, self.halfwidth(n, effort), 1, 1.0, f)


def geometric(n):
    return 0.5**n


def test_classify_uses_interval_ends():
    est = lambda v, h: LossEstimate(Method.SDN10, v, h, 10, 10.0, v)
    assert classify(est(0.5e-4, 0.4e-4), 1e-4) == FEASIBLE
    assert classify(est(2e-4, 0.5e-4), 1e-4) == INFEASIBLE
    assert classify(est(1e-4, 0.5e-4), 1e-4) == UNDECIDED


@pytest.mark.parametrize("alpha,expected", [(0.2, 3), (0.5**10, 10), (0.3, 2), (0.99, 1)])
def test_bisection_finds_first_feasible(alpha, expected):
    trace = minimal_servers(Table(geometric), alpha, 1, 40)
    assert trace.result == expected and trace.status == "optimal"


def test_probes_are_logarithmic_and_not_repeated():
    ev = Table(geometric)
    trace = minimal_servers(ev, 0.5**37, 1, 64)
    assert trace.result == 37
    assert len(ev.calls) <= math.ceil(math.log2(64)) + 2
    assert len(set(trace.probed)) == len(trace.probed)


def test_search_is_deterministic():
    a = minimal_servers(Table(geometric), 1e-3, 1, 30).as_dict()
    b = minimal_servers(Table(geometric), 1e-3, 1, 30).as_dict()
    assert a == b


def test_alpha_one_accepts_a_single_server():
    assert minimal_servers(MarkovEvaluator(10, 2, 1), 1.0, 1, 1).result == 1


def test_lower_end_feasible():
    assert minimal_servers(Table(geometric), 0.9, 1, 8).result == 1


def test_bracket_doubles_when_upper_end_fails():
    trace = minimal_servers(Table(geometric), 0.5**20, 1, 8)
    assert trace.result == 20 and trace.n_upper >= 20


def test_undecided_probe_escalates_then_gives_up():
    ev = Table(geometric, halfwidth=lambda n, effort: 1.0)
    trace = minimal_servers(ev, 0.01, 1, 16, max_effort=8)
    assert trace.status == "inconclusive" and trace.result is None
    assert [e for _, e in ev.calls] == [1, 2, 4, 8]


def test_escalation_resolves_when_effort_shrinks_interval():
    ev = Table(geometric, halfwidth=lambda n, effort: 0.004 / effort)
    trace = minimal_servers(ev, 0.5**6 + 0.002, 1, 16)
    assert trace.result == 6
    assert any(p.effort > 1 for p in trace.probes)


def test_no_feasible_n_is_inconclusive():
    trace = minimal_servers(Table(lambda n: 1.0), 0.5, 1, 4)
    assert trace.status == "inconclusive"


def test_invalid_bracket():
    with pytest.raises(ValueError):
        minimal_servers(Table(geometric), 0.1, 5, 2)


def test_markov_search_example_one():
    bound = upper_bound_servers(10, 2, 1, 1e-4)
    trace = minimal_servers(MarkovEvaluator(10, 2, 1), 1e-4, 1, bound)
    assert bound == 27
    assert trace.result == 23
    assert trace.probed == [14, 20, 23, 21, 22]


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_bound_needs_proper_alpha(alpha):
    with pytest.raises(ValueError):
        upper_bound_servers(10, 2, 1, alpha)


def test_bound_rejects_renewal_input():
    with pytest.raises(ValueError):
        upper_bound_servers(10, 2, 1, 0.01, "renewal")


def test_simulation_evaluator_scales_replications_with_effort():
    seen = []
    cfg = SystemConfig(n=1, mu=1.0, arrival=PointProcessSpec("poisson", 3.0),
                       retrial=PointProcessSpec("poisson", 1.0), horizon=50.0, replications=4)
    ev = SimulationEvaluator(cfg, on_estimate=lambda n, e: seen.append((n, e.replications)))
    ev(3, effort=2)
    assert seen == [(3, 8)]


def test_simulation_search_matches_exact_search_on_easy_target():
    cfg = SystemConfig(n=1, mu=1.0, arrival=PointProcessSpec("poisson", 3.0),
                       retrial=PointProcessSpec("poisson", 1.0), horizon=2000.0, replications=10, seed=4)
    exact = minimal_servers(MarkovEvaluator(3, 1, 1), 0.05, 1, 10).result
    trace = minimal_servers(SimulationEvaluator(cfg), 0.05, 1, 10, max_effort=16)
    assert trace.status == "optimal"
    assert trace.result == exact
