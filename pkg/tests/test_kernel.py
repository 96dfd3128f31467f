import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osbm.analytic import laplace_numeric
from osbm.core import OsbmParams
from osbm.errors import NonPositiveTime
from osbm.kernel import (
    exit_prob_at_T,
    killed_resolvent,
    resolvent,
    resolvent_at_zero,
    transition_density,
    transition_kernel,
)

PARAMS = [OsbmParams(1, 1, 1), OsbmParams(1, 2, 0.5), OsbmParams(2, 1, 3)]


@pytest.mark.parametrize("p", PARAMS, ids=str)
@pytest.mark.parametrize("x", [-1.0, 0.0, 0.5])
def test_kernel_mass_is_one(p, x):
    assert transition_kernel(1.0, x, p).total_mass() == pytest.approx(1.0, abs=1e-8)


def test_atom_sticky_case():
    k = transition_kernel(1.0, 0.0, OsbmParams(1, 1, 1))
    assert k.atom_at_zero == pytest.approx(0.33620400244634135, rel=1e-13)


def test_atom_vanishes_in_oscillating_limit():
    assert transition_kernel(1.0, 0.0, OsbmParams(1, 2, 1e6)).atom_at_zero < 1e-3


def test_atom_tends_to_one_for_strong_stickiness():
    assert transition_kernel(1.0, 0.0, OsbmParams(1, 1, 1e-6)).atom_at_zero > 0.999


@given(
    st.floats(0.05, 4.0),
    st.floats(-3.0, 3.0),
    st.floats(-6.0, 6.0),
    st.sampled_from(PARAMS),
)
def test_density_nonnegative(t, x, y, p):
    assert float(transition_density(t, x, y, p)) >= 0.0


def test_cdf_is_monotone_with_atom_jump():
    k = transition_kernel(1.0, 0.0, OsbmParams(1, 2, 0.5))
    ys = np.linspace(-20, 20, 4001)
    c = k.cdf(ys)
    assert np.all(np.diff(c) >= -1e-12)
    assert c[0] == pytest.approx(0.0, abs=1e-6) and c[-1] == pytest.approx(1.0, abs=1e-6)
    jump = k.cdf(0.0) - k.cdf(-1e-12)
    assert jump == pytest.approx(k.atom_at_zero, abs=1e-6)


def test_equal_scales_are_symmetric():
    p = OsbmParams(1.3, 1.3, 0.7)
    ys = np.array([0.1, 0.5, 2.0])
    np.testing.assert_allclose(transition_density(1.0, 0.0, ys, p), transition_density(1.0, 0.0, -ys, p), rtol=1e-13)


def test_non_positive_time():
    with pytest.raises(NonPositiveTime):
        transition_kernel(0.0, 0.0, PARAMS[0])


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("x", [-0.7, 0.0, 0.4])
def test_resolvent_is_laplace_transform_of_kernel(lam, x):
    p = OsbmParams(1, 2, 0.5)
    r = resolvent(lam, x, p)
    for y in (-1.5, -0.1, 0.2, 1.8):
        num = laplace_numeric(lambda s: float(transition_density(s, x, y, p)), lam, 1e-12)
        assert num == pytest.approx(float(r.density(y)), abs=1e-7)
    num_atom = laplace_numeric(lambda s: transition_kernel(s, x, p).atom_at_zero, lam, 1e-12)
    assert num_atom == pytest.approx(r.atom_at_zero, abs=1e-7)


@pytest.mark.parametrize("lam", [0.3, 2.0])
def test_resolvent_mass(lam):
    p = OsbmParams(2, 1, 3)
    for x in (-0.5, 0.0, 1.0):
        assert lam * resolvent(lam, x, p).total_mass() == pytest.approx(1.0, abs=1e-8)


def test_resolvent_negative_branch_decays():
    r = resolvent_at_zero(1.0, OsbmParams(1, 2, 0.5))
    assert float(r.density(-10.0)) < float(r.density(-1.0)) < float(r.density(-0.01))


def test_killed_resolvent_vanishes_on_opposite_side():
    k = killed_resolvent(1.0, 0.5, OsbmParams(1, 2, 0.5))
    assert float(k.density(-0.3)) == 0.0 and float(k.density(0.3)) > 0.0


def test_exit_probability_matches_resolvent_atom():
    p = OsbmParams(1, 2, 0.5)
    for lam in (0.5, 2.0):
        assert exit_prob_at_T(lam, p) == pytest.approx(lam * resolvent_at_zero(lam, p).atom_at_zero, rel=1e-13)
