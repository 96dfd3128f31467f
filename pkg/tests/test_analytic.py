import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from osbm.analytic import (
    LaplaceQuery,
    convolve_h,
    g_eval,
    g_printed,
    gauss_kernel,
    h_eval,
    h_laplace,
    laplace_numeric,
    p0_eval,
    quad_checked,
)
from osbm.core import OsbmParams
from osbm.errors import NegativeLevel, NonPositiveLambda, NonPositiveTime, QuadratureNonConvergence

P = OsbmParams(1.0, 2.0, 0.5)


def test_gauss_kernel_normalised():
    mass = integrate.quad(lambda y: gauss_kernel(0.7, 0.3, y), -np.inf, np.inf)[0]
    assert mass == pytest.approx(1.0, abs=1e-12)


def test_h_is_a_probability_density_in_time():
    mass = integrate.quad(lambda s: h_eval(s, 0.8), 0, np.inf, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_h_rejects_bad_arguments():
    with pytest.raises(NegativeLevel):
        h_eval(1.0, -0.1)
    with pytest.raises(NonPositiveTime):
        h_eval(0.0, 1.0)


@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_h_laplace_decays_on_both_sides(lam, x):
    v = float(h_laplace(lam, x, P))
    assert 0.0 < v <= 1.0
    assert v == pytest.approx(float(h_laplace(lam, 2 * x, P)) ** 0.5, rel=1e-12)


def test_h_laplace_matches_numeric_transform():
    for x in (-1.3, 0.5):
        z = x / P.sigma_plus if x >= 0 else -x / P.sigma_minus
        num = laplace_numeric(lambda s: float(h_eval(s, z)), 1.0, 1e-13)
        assert num == pytest.approx(float(h_laplace(1.0, x, P)), abs=1e-9)


def test_sticky_atom_closed_form():
    # sigma = theta = 1, t = 1: g(1, 0) = e^2 erfc(sqrt 2) (independent scipy evaluation)
    p = OsbmParams(1.0, 1.0, 1.0)
    assert float(g_eval(1.0, 0.0, p)) == pytest.approx(math.exp(2) * special.erfc(math.sqrt(2)), rel=1e-14)
    assert float(g_eval(1.0, 0.0, p)) == pytest.approx(0.33620400244634135, rel=1e-14)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("z", [0.0, 0.7, 2.0])
def test_g_laplace_identity(lam, z):
    q = LaplaceQuery(lam, P)
    num = laplace_numeric(lambda s: float(g_eval(s, z, P)), lam, 1e-12)
    assert num == pytest.approx(P.theta * math.exp(-q.gamma * z) / q.rho, abs=1e-9)


def test_printed_g_exponent_fails_the_laplace_identity():
    q = LaplaceQuery(1.0, P)
    num = laplace_numeric(lambda s: float(g_printed(s, 0.5, P)), 1.0, 1e-12)
    assert abs(num - P.theta * math.exp(-q.gamma * 0.5) / q.rho) > 1e-3


@given(st.floats(1e-4, 50.0), st.floats(0.0, 40.0))
def test_g_is_finite_and_bounded_by_theta(s, z):
    v = float(g_eval(s, z, P))
    assert math.isfinite(v)
    assert 0.0 <= v <= P.theta * (1 + 1e-12)


def test_g_extreme_arguments_do_not_overflow():
    p = OsbmParams(1.0, 1.0, 1e6)
    v = float(g_eval(1e4, 0.0, p))
    assert math.isfinite(v) and v > 0


def test_p0_is_sub_markov_and_vanishes_across_zero():
    for x in (-1.0, 0.4):
        side = 1.0 if x > 0 else -1.0
        m = quad_checked(lambda y: float(p0_eval(1.0, x, side * y, P)), 0.0, math.inf, 1e-12)
        assert 0.0 < m < 1.0
        assert float(p0_eval(1.0, x, -side * 0.5, P)) == 0.0
    assert float(p0_eval(1.0, 0.0, 0.3, P)) == 0.0


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_p0_nonnegative(x, y):
    assert float(p0_eval(0.8, x, y, P)) >= 0.0
    assert float(p0_eval(0.8, -x, -y, P)) >= 0.0


@pytest.mark.parametrize("z1,z2", [(0.2, 0.7), (1.5, 0.2), (0.7, 0.7)])
def test_first_passage_convolution(z1, z2):
    assert convolve_h(1.0, z1, z2) == pytest.approx(float(h_eval(1.0, z1 + z2)), abs=1e-10)


def test_lambda_validation():
    with pytest.raises(NonPositiveLambda):
        LaplaceQuery(0.0, P)


def test_quad_checked_reports_non_convergence():
    with pytest.raises(QuadratureNonConvergence) as info:
        quad_checked(lambda x: math.sin(1.0 / x) / x, 1e-8, 1.0, 1e-14)
    assert math.isfinite(info.value.best_estimate)
