import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smpstop.errors import BudgetOverflowError, ModelError, NumericalError
from smpstop.model import RegularityWitness, find_regularity_witness
from smpstop.moments import compute_moments
from smpstop.solver import (
    MONOTONE_TOL,
    bellman_apply,
    brute_force_optimum,
    compute_iteration_budget,
    continuation_value,
    evaluate_hitting_rule,
    uncorrected_iteration_budget,
    value_iterate,
    value_sequence,
)
from support import exponential_model, random_model

EXPECTED = np.array([147.6923, 222.5641, 400.0])


def test_expected_values_are_a_fixed_point(maintenance, maintenance_moments):
    tv = bellman_apply(maintenance_moments, maintenance, EXPECTED)
    np.testing.assert_allclose(tv, EXPECTED, atol=5e-4)


def test_zero_input(maintenance, maintenance_moments):
    tv = bellman_apply(maintenance_moments, maintenance, np.zeros(3))
    expected = np.minimum(maintenance.terminal_cost, maintenance.cost_rate * maintenance_moments.m0)
    np.testing.assert_array_equal(tv, expected)


def test_continuation_at_state_three(maintenance, maintenance_moments):
    cont = continuation_value(maintenance_moments, maintenance, EXPECTED)
    by_hand = 80 / 1.05 + (0.1 * 147.6923 + 0.1 * 222.5641 + 0.8 * 400) / 1.05
    assert cont[2] == pytest.approx(by_hand, abs=1e-9)
    assert round(cont[2]) == 416


def test_bundled_value_iteration(maintenance, maintenance_moments):
    vf = value_iterate(maintenance, maintenance_moments, tol=1e-12)
    assert vf.converged
    assert vf.iterations <= 200
    assert vf.sup_diff <= 1e-12
    np.testing.assert_allclose(vf.values, EXPECTED, atol=5e-4)
    # the exact fixed point of the hitting rule of {3}, solved by hand: V1 = 1920/13
    assert vf.values[0] == pytest.approx(1920 / 13, abs=1e-9)


def test_zero_terminal_cost_gives_zero():
    m = exponential_model(3, 0.1, [1, 2, 3], 0.0, 1.0)
    vf = value_iterate(m, compute_moments(m))
    np.testing.assert_array_equal(vf.values, 0.0)
    assert vf.iterations == 0  # V_0 = T(0) is already the fixed point


def test_zero_running_cost_gives_zero():
    m = exponential_model(3, 0.1, 0.0, [5, 6, 7], 1.0)
    np.testing.assert_array_equal(value_iterate(m, compute_moments(m)).values, 0.0)


def test_iteration_cap_reports_nonconvergence(maintenance, maintenance_moments):
    vf = value_iterate(maintenance, maintenance_moments, tol=1e-12, max_iters=5)
    assert not vf.converged
    assert vf.iterations == 5
    assert vf.error_bound > 1e-12


def test_trace_rows(maintenance, maintenance_moments):
    vf = value_iterate(maintenance, maintenance_moments, tol=1e-8, record_trace=True)
    assert len(vf.trace) == vf.iterations + 1
    g = maintenance_moments.gamma_tight
    for n, diff, bound in vf.trace:
        assert bound == pytest.approx(g / (1 - g) * diff)


def test_value_sequence_matches_iterate(maintenance, maintenance_moments):
    seq = value_sequence(maintenance, maintenance_moments, 30)
    vf = value_iterate(maintenance, maintenance_moments, tol=0.0, max_iters=30)
    np.testing.assert_array_equal(seq[-1], vf.values)
    assert len(seq) == 31


@pytest.mark.parametrize("seed", range(15))
def test_a_posteriori_bound(seed):
    model = random_model(seed)
    mom = compute_moments(model)
    ref = value_iterate(model, mom, tol=1e-13)
    for n in (1, 5, 20):
        vf = value_iterate(model, mom, tol=0.0, max_iters=n)
        assert np.max(np.abs(vf.values - ref.values)) <= vf.error_bound + 1e-9


@pytest.mark.parametrize("seed", range(15))
def test_values_bounded(seed):
    model = random_model(seed)
    vf = value_iterate(model, compute_moments(model))
    assert np.all(vf.values >= 0)
    assert np.all(vf.values <= model.terminal_cost + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_operator_is_monotone(seed, draw):
    model = random_model(seed)
    mom = compute_moments(model)
    rng = np.random.default_rng(draw)
    v = rng.uniform(0, 500, model.n_states)
    w = v + rng.uniform(0, 100, model.n_states)
    assert np.all(bellman_apply(mom, model, v) <= bellman_apply(mom, model, w))


def test_budget_matches_direct_loop(maintenance):
    w = RegularityWitness(1.0, math.exp(-2), maintenance.beta)
    const = 80 / 0.05 + 400 + 1
    assert const == 2001
    n = compute_iteration_budget(maintenance, w, 1e-8)
    # oracle: multiply gamma until the bound crosses epsilon
    one_minus = math.exp(-2) * (1 - math.exp(-0.025))
    term, k = w.gamma ** 2 / one_minus * const, 0
    while term > 1e-8:
        term *= w.gamma
        k += 1
    assert n == k


def test_budget_zero_when_constant_small():
    m = exponential_model(2, 1.0, 0.0, 0.0, 1.0)
    w = find_regularity_witness(m)
    assert compute_iteration_budget(m, w, 2.0) == 0


def test_budget_zero_when_gamma_is_zero_limit():
    m = exponential_model(2, 1.0, 1e-6, 1e-6, 1.0)
    assert compute_iteration_budget(m, RegularityWitness(0.5, 1.0, 1e9), 1.0) == 0


def test_budget_overflow(maintenance):
    w = RegularityWitness(1e-4, 1e-3, maintenance.beta)
    with pytest.raises(BudgetOverflowError):
        compute_iteration_budget(maintenance, w, 1e-12)


def test_uncorrected_budget_undefined_on_bundled_model(maintenance):
    w = find_regularity_witness(maintenance, delta=1.0)
    assert math.exp(-2) - math.exp(-0.025) < 0
    assert uncorrected_iteration_budget(maintenance, w, 1e-8) is None


def test_hitting_rule_bundled(maintenance, maintenance_moments):
    vf = evaluate_hitting_rule(maintenance, maintenance_moments, {2})
    np.testing.assert_allclose(vf.values, EXPECTED, atol=5e-4)


def test_hitting_everything_is_g(maintenance, maintenance_moments):
    vf = evaluate_hitting_rule(maintenance, maintenance_moments, range(3))
    np.testing.assert_array_equal(vf.values, maintenance.terminal_cost)


def test_never_stopping_geometric_series():
    p = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0], [0.1, 0.1, 0.8]])
    m = exponential_model(3, 1.0, 1.0, 9.0, 1.0, p=p)
    mom = compute_moments(m)
    vf = evaluate_hitting_rule(m, mom, ())
    np.testing.assert_allclose(vf.values, 1.0, atol=1e-14)
    # oracle: long iteration of the continuation map without the min
    v = np.zeros(3)
    for _ in range(200):
        v = continuation_value(mom, m, v)
    np.testing.assert_allclose(vf.values, v, atol=1e-12)


def test_brute_force_bundled(maintenance, maintenance_moments):
    best, argmin = brute_force_optimum(maintenance, maintenance_moments)
    vf = value_iterate(maintenance, maintenance_moments, tol=1e-12)
    np.testing.assert_allclose(best.values, vf.values, atol=1e-8)
    assert argmin == frozenset({2})


def test_brute_force_zero_terminal_cost():
    m = exponential_model(3, 0.2, [1, 2, 3], 0.0, 1.0)
    best, argmin = brute_force_optimum(m, compute_moments(m))
    np.testing.assert_array_equal(best.values, 0.0)
    np.testing.assert_array_equal(evaluate_hitting_rule(m, compute_moments(m), argmin).values, 0.0)


def test_brute_force_random_four_states():
    model = random_model(11, n_min=4, n_max=4)
    mom = compute_moments(model)
    best, argmin = brute_force_optimum(model, mom)
    vf = value_iterate(model, mom, tol=1e-13)
    np.testing.assert_allclose(best.values, vf.values, atol=1e-8)
    np.testing.assert_allclose(evaluate_hitting_rule(model, mom, argmin).values, vf.values, atol=1e-8)


def test_brute_force_size_guard():
    m = exponential_model(21, 0.1, 1.0, 1.0, 1.0)
    with pytest.raises(ModelError):
        brute_force_optimum(m, compute_moments(m))


def test_monotonicity_violation_is_detected(maintenance, maintenance_moments, monkeypatch):
    import smpstop.solver as solver

    real = solver.bellman_apply
    calls = iter(range(10**6))

    def broken(moments, model, values):
        out = real(moments, model, values)
        return out - 1e-6 if next(calls) == 60 else out

    monkeypatch.setattr(solver, "bellman_apply", broken)
    with pytest.raises(NumericalError):
        solver.value_iterate(maintenance, maintenance_moments, tol=1e-12)
    assert MONOTONE_TOL == 1e-14
