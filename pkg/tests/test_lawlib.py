import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from osbm.core import OsbmParams
from osbm.errors import NonPositiveHorizon
from osbm.kernel import transition_kernel
from osbm.lawlib import (
    TriQuery,
    joint_density,
    joint_position_localtime,
    localtime_density,
    localtime_occupation_density,
    mirror_triplet,
    occupation_density,
    phi,
    trivariate_density,
    trivariate_mass,
)

P = OsbmParams(1.0, 2.0, 0.5)


@given(st.floats(-3, 3), st.floats(0.01, 2.0), st.floats(0.0, 1.0))
def test_phi_nonnegative_and_supported(y, l, tau):
    v = float(phi(1.0, 0.0, y, l, tau, P))
    assert v >= 0.0
    if tau < l / P.theta:
        assert v == 0.0


def test_phi_zero_at_y_zero():
    assert float(phi(1.0, 0.0, 0.0, 0.2, 0.6, P)) == 0.0


def test_trivariate_density_wraps_phi():
    q = TriQuery(1.0, 0.0, 0.4, 0.2, 0.7)
    assert trivariate_density(q, P) == float(phi(1.0, 0.0, 0.4, 0.2, 0.7, P))


@pytest.mark.parametrize("y", [-0.8, -0.1, 0.3, 1.2])
@pytest.mark.parametrize("l", [0.05, 0.2])
def test_integrating_out_occupation_gives_joint(y, l):
    lo = l / P.theta
    val = integrate.quad(lambda tau: float(phi(1.0, 0.0, y, l, tau, P)), lo, 1.0, epsabs=1e-12, limit=200)[0]
    assert val == pytest.approx(float(joint_density(1.0, 0.0, y, l, P)), abs=1e-8)


def test_localtime_mass_is_one_minus_atom():
    atom = transition_kernel(1.0, 0.0, P).atom_at_zero
    mass = integrate.quad(lambda l: float(localtime_density(1.0, l, P)), 0, P.theta, limit=200)[0]
    assert mass == pytest.approx(1.0 - atom, abs=1e-9)


def test_localtime_is_joint_marginal():
    l = 0.3
    left = integrate.quad(lambda y: float(joint_density(1.0, 0.0, y, l, P)), -np.inf, 0)[0]
    right = integrate.quad(lambda y: float(joint_density(1.0, 0.0, y, l, P)), 0, np.inf)[0]
    assert left + right == pytest.approx(float(localtime_density(1.0, l, P)), abs=1e-9)


def test_occupation_density_integrates_pair_density():
    tau = 0.4
    direct = integrate.quad(
        lambda l: float(localtime_occupation_density(1.0, l, tau, P)), 0, P.theta * tau, limit=200, epsabs=1e-12
    )[0]
    assert occupation_density(1.0, tau, P) == pytest.approx(direct, abs=1e-7)


def test_occupation_forms_agree_for_unit_scales():
    p = OsbmParams(1.0, 1.0, 1.0)
    assert occupation_density(1.0, 0.3, p, form="printed") == pytest.approx(occupation_density(1.0, 0.3, p))


def test_occupation_mass_is_one_minus_atom():
    atom = transition_kernel(1.0, 0.0, P).atom_at_zero
    mass = integrate.quad(lambda tau: occupation_density(1.0, tau, P), 0, 1.0, limit=200, epsabs=1e-10)[0]
    assert mass == pytest.approx(1.0 - atom, abs=1e-6)


def test_occupation_outside_range_is_zero():
    assert occupation_density(1.0, 0.0, P) == 0.0
    assert occupation_density(1.0, 1.0, P) == 0.0


def test_trivariate_mass():
    atom = transition_kernel(1.0, 0.0, P).atom_at_zero
    assert trivariate_mass(1.0, 0.0, P) == pytest.approx(1.0 - atom, abs=1e-4)


def test_joint_value_atom_part():
    v = joint_position_localtime(1.0, 0.5, 0.7, 0.0, P)
    assert v.density == 0.0 and v.atom_at_l0 > 0.0


@given(st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1))
def test_mirror_map_is_an_involution(y, l, g):
    once = mirror_triplet((y, l, g), 1.0, P)
    twice = mirror_triplet(once, 1.0, P)
    assert twice[0] == pytest.approx(y) and twice[1] == pytest.approx(l) and twice[2] == pytest.approx(g)


def test_negative_start_variants_agree_at_zero_start():
    a = phi(1.0, 0.0, 0.3, 0.2, 0.6, P)
    b = phi(1.0, 0.0, 0.3, 0.2, 0.6, P, negative_start="printed")
    assert float(a) == float(b)


def test_bad_horizon():
    with pytest.raises(NonPositiveHorizon):
        localtime_density(0.0, 0.1, P)
