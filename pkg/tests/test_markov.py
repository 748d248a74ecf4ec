import itertools

import numpy as np
import pytest

from oracles import erlang_distribution, power_iteration, transition_rates
from retrialq.markov import (
    StationaryDistribution,
    build_balance_system,
    generator_matrix,
    literal_corollary_rows,
    loss_markov,
    solve_literal_corollary,
    solve_stationary,
    state_index,
    stationary,
    stationary_residuals,
)

EX1 = dict(lam=10.0, delta=2.0, mu=1.0)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("lam,delta,mu", [(10, 2, 1), (1, 0.5, 1), (0.3, 4.0, 2.0)])
def test_matches_power_iteration(n, lam, delta, mu):
    got = stationary(lam, delta, mu, n).p
    assert np.abs(got - power_iteration(lam, delta, mu, n)).max() < 1e-10


def test_generator_matches_transition_list_and_rows_sum_to_zero():
    lam, delta, mu, n = 3.0, 0.7, 1.3, 4
    q = generator_matrix(lam, delta, mu, n)
    assert np.allclose(q.sum(axis=1), 0.0, atol=1e-12)
    expected = np.zeros_like(q)
    for ((a, b), r) in transition_rates(lam, delta, mu, n).items():
        expected[state_index(*a), state_index(*b)] = r
    off = ~np.eye(q.shape[0], dtype=bool)
    assert np.array_equal(q[off], expected[off])


def test_system_shape_and_normalization_row():
    sys = build_balance_system(10, 2, 1, 1)
    assert sys.matrix.shape == (4, 4)
    assert np.all(sys.matrix[-1] == 1.0)
    assert sys.rhs.tolist() == [0, 0, 0, 1]


def test_distribution_invariants():
    p = stationary(**EX1, n=14).p
    assert p.shape == (15, 2)
    assert p.min() >= 0
    assert abs(p.sum() - 1) < 1e-10


def test_without_retrials_orbit_absorbs_and_busy_marginal_is_erlang():
    # with delta = 0 the first blocked customer never leaves the orbit,
    # so the chain settles on j = 1 where Q1 behaves as M/M/n/0
    lam, mu, n = 3.0, 1.0, 2
    p = stationary(lam, 0.0, mu, n).p
    assert np.abs(p - power_iteration(lam, 0.0, mu, n)).max() < 1e-10
    assert np.abs(p[:, 0]).max() < 1e-12
    assert np.abs(p[:, 1] - erlang_distribution(lam / mu, n)).max() < 1e-12


def test_tiny_arrival_rate_concentrates_on_empty_state():
    p = stationary(1e-8, 2.0, 1.0, 5).p
    assert p[0, 0] == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("lam,delta,n", list(itertools.product([1.0, 10.0], [0.5, 2.0], [1, 5, 14, 24])))
def test_three_loss_formulas_agree(lam, delta, n):
    f = loss_markov(stationary(lam, delta, 1.0, n), lam, delta, 1.0)
    assert f.max_discrepancy() < 1e-10


@pytest.mark.parametrize("lam,delta,mu", [(10, 2, 1), (2, 1, 3)])
def test_single_server_losses_match_oracle_loss_rate(lam, delta, mu):
    p = power_iteration(lam, delta, mu, 1)
    f = loss_markov(stationary(lam, delta, mu, 1), lam, delta, mu)
    for value in f:
        assert value == pytest.approx(p[1, 1], abs=1e-10)


def test_direct_loss_zero_when_last_state_empty():
    p = np.zeros((3, 2))
    p[0, 0] = 1.0
    assert loss_markov(StationaryDistribution(p), 1.0, 1.0, 1.0).direct == 0.0


def test_loss_strictly_decreasing_in_servers():
    f = [loss_markov(stationary(**EX1, n=n), **EX1).direct for n in range(1, 31)]
    assert all(a > b for a, b in zip(f, f[1:]))


@pytest.mark.parametrize("n", [1, 3, 14])
def test_frequency_residuals_vanish_at_stationarity(n):
    res = stationary_residuals(stationary(**EX1, n=n), **EX1)
    assert res.max_abs() < 1e-10


def test_example_one_reference_values():
    # values of the corrected system; see the README for the comparison
    f = {n: loss_markov(stationary(**EX1, n=n), **EX1).direct for n in range(14, 25)}
    assert f[14] == pytest.approx(0.0425916, abs=1e-6)
    # smallest n with loss <= 1e-4
    assert f[23] <= 1e-4 < f[22]


def test_singular_system_rejected():
    sys = build_balance_system(1, 1, 1, 2)
    bad = sys.matrix.copy()
    bad[-1] = 0.0
    with pytest.raises(ValueError, match="singular"):
        solve_stationary(type(sys)(sys.lam, sys.delta, sys.mu, sys.n, sys.generator, bad, sys.rhs))


@pytest.mark.parametrize("args", [(0, 1, 1, 2), (1, -1, 1, 2), (1, 1, 0, 2), (1, 1, 1, 0), (1, 1, 1, 1.5)])
def test_bad_parameters_rejected(args):
    with pytest.raises(ValueError):
        build_balance_system(*args)


def test_literal_rows_have_no_probability_solution():
    rows = literal_corollary_rows(**EX1, n=6)
    # full rank: only the zero vector satisfies the homogeneous equations
    assert np.linalg.matrix_rank(rows) == rows.shape[0]
    sol = solve_literal_corollary(**EX1, n=6)
    assert sol.residual_norm > 1e-3


def test_literal_rows_differ_from_generator_only_where_documented():
    lam, delta, mu, n = 10.0, 2.0, 1.0, 5
    lit = literal_corollary_rows(lam, delta, mu, n)
    # generator balance written as "outflow minus inflow" rows
    q = generator_matrix(lam, delta, mu, n)
    bal = -q.T
    # the literal rows mix the two sign conventions
    same = [min(np.abs(lit[k] - bal[k]).max(), np.abs(lit[k] + bal[k]).max()) < 1e-12 for k in range(len(lit))]
    differing = {k for k, ok in enumerate(same) if not ok}
    assert differing == {state_index(i, 1) for i in range(1, n)} | {state_index(n, 0)}
