import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from smpstop.distributions import Deterministic, Empirical, Exponential, Weibull
from smpstop.errors import QuadratureError
from smpstop.model import PER_STATE, KernelSpec, Model, find_regularity_witness
from smpstop.moments import (
    QuadratureConfig,
    closed_form_moments,
    compute_moments,
    contraction_modulus,
    stieltjes_moments,
)
from support import random_model


def scipy_moments(dist, beta):
    """Independent oracle: adaptive quadrature of both integrals."""
    upper = dist.tail_cutoff() * 2
    pts = sorted(set(dist.breakpoints()) | set(dist.atoms()))
    pts = [p for p in pts if 0 < p < upper] or None
    m0, _ = integrate.quad(lambda t: math.exp(-beta * t) * (1 - float(dist.cdf(t))), 0, upper,
                           points=pts, limit=500, epsabs=1e-13, epsrel=1e-13)
    # integration by parts: int e^{-bt} dF = beta * int e^{-bt} F(t) dt over [0, inf)
    lap = 1.0 - beta * m0
    return m0, lap


def test_state_three_of_bundled_model(maintenance_moments):
    m = maintenance_moments
    assert m.m0[2] == pytest.approx(1 / 1.05, abs=1e-12)
    np.testing.assert_allclose(m.m1[2], [0.1 / 1.05, 0.1 / 1.05, 0.8 / 1.05], atol=1e-12)
    np.testing.assert_allclose(m.m1[2], [0.0952381, 0.0952381, 0.7619048], atol=5e-8)


def test_state_one_of_bundled_model(maintenance_moments):
    m = maintenance_moments
    assert m.m0[0] == pytest.approx(6.6666667, abs=5e-8)
    assert m.m1[0].sum() == pytest.approx(0.1 / 0.15, abs=1e-12)


def test_bundled_contraction_modulus(maintenance, maintenance_moments):
    assert contraction_modulus(maintenance_moments) == pytest.approx(2 / 2.05, abs=1e-15)
    assert maintenance_moments.gamma_tight <= find_regularity_witness(maintenance).gamma


def test_one_row_modulus():
    m = Model(("a",), 0.3, np.array([1.0]), np.array([1.0]),
              KernelSpec(np.array([[1.0]]), PER_STATE, (Exponential(2.0),)))
    assert contraction_modulus(compute_moments(m)) == pytest.approx(2.0 / 2.3, abs=1e-15)


@given(st.floats(0.01, 3.0), st.floats(0.01, 10.0))
def test_deterministic_identity_is_exact(beta, d):
    m0, lap = closed_form_moments(Deterministic(d), beta)
    assert abs(beta * m0 + lap - 1.0) <= 1e-14


@pytest.mark.parametrize("dist", [
    Exponential(0.1), Exponential(2.0), Exponential(1.0), Exponential(3.0),
    Deterministic(0.2), Deterministic(1.0), Deterministic(3.0),
])
@pytest.mark.parametrize("beta", [0.02, 0.05, 0.5])
def test_quadrature_matches_closed_form(dist, beta):
    exact = closed_form_moments(dist, beta)
    approx = stieltjes_moments(dist, beta)
    assert approx[0] == pytest.approx(exact[0], abs=1e-9)
    assert approx[1] == pytest.approx(exact[1], abs=1e-9)


@pytest.mark.parametrize("dist", [
    Weibull(0.7, 3.0), Weibull(1.5, 0.3), Weibull(3.0, 2.0), Weibull(1.0, 1.0),
    Empirical((0.5, 1.0, 2.5), (0.2, 0.2, 1.0)),
    Empirical((0.3, 2.0), (0.6, 1.0)),
])
@pytest.mark.parametrize("beta", [0.02, 0.2, 0.5])
def test_quadrature_matches_independent_oracle(dist, beta):
    approx = stieltjes_moments(dist, beta)
    oracle = scipy_moments(dist, beta)
    assert approx[0] == pytest.approx(oracle[0], abs=1e-9)
    assert approx[1] == pytest.approx(oracle[1], abs=1e-9)


def test_weibull_shape_one_is_exponential():
    beta = 0.07
    approx = stieltjes_moments(Weibull(1.0, 2.0), beta)
    exact = closed_form_moments(Exponential(0.5), beta)
    np.testing.assert_allclose(approx, exact, atol=1e-9)


@pytest.mark.parametrize("seed", range(25))
def test_identity_on_random_models(seed):
    model = random_model(seed)
    m = compute_moments(model)
    assert np.all(np.abs(m.identity_residual()) <= 1e-9)
    assert np.all((m.m0 >= 0) & (m.m0 <= 1 / model.beta))
    assert np.all(m.m1 >= 0)
    assert m.gamma_tight < 1
    assert m.gamma_tight <= find_regularity_witness(model).gamma


@pytest.mark.parametrize("seed", range(6))
def test_forced_quadrature_agrees_on_random_models(seed):
    model = random_model(seed)
    a = compute_moments(model)
    b = compute_moments(model, force_quadrature=True)
    np.testing.assert_allclose(b.m0, a.m0, atol=1e-9 / model.beta)
    np.testing.assert_allclose(b.m1, a.m1, atol=1e-9)


def test_closed_form_identity_tight(maintenance_moments):
    assert np.max(np.abs(maintenance_moments.identity_residual())) <= 1e-14


def test_unreachable_tolerance_raises():
    with pytest.raises(QuadratureError):
        stieltjes_moments(Weibull(0.8, 2.0), 0.03, QuadratureConfig(tol=1e-16, max_refine=8))


def test_moments_are_read_only(maintenance_moments):
    with pytest.raises(ValueError):
        maintenance_moments.m1[0, 0] = 0.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.7, 3.0), st.floats(0.3, 3.0), st.floats(0.02, 0.5))
def test_weibull_property_identity(shape, scale, beta):
    m0, lap = stieltjes_moments(Weibull(shape, scale), beta)
    assert abs(beta * m0 + lap - 1) < 1e-9
    assert 0 < lap < 1
