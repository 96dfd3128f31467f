import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osbm.core import (
    CouplingParams,
    OsbmParams,
    PathRecord,
    RngSpec,
    speed_measure,
    validate_coupling,
    validate_params,
    worker_threads,
)
from osbm.errors import (
    DriftGapViolation,
    NonFiniteParameter,
    NonPositiveParameter,
    SigmaRatioViolation,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@given(positive, positive, positive)
def test_r_is_mean_of_inverse_scales(sp, sm, th):
    p = OsbmParams(sp, sm, th)
    assert p.r == pytest.approx(0.5 * (1 / sp + 1 / sm))
    assert validate_params(p) is p
    assert validate_params((sp, sm, th)) == p
    assert validate_params({"sigma_plus": sp, "sigma_minus": sm, "theta": th}) == p


@given(positive, positive, positive)
def test_swapped_is_an_involution(sp, sm, th):
    p = OsbmParams(sp, sm, th)
    assert p.swapped().swapped() == p
    assert p.swapped().r == pytest.approx(p.r)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_non_positive_parameters_rejected(bad):
    with pytest.raises(NonPositiveParameter):
        OsbmParams(bad, 1.0, 1.0)
    with pytest.raises(NonPositiveParameter):
        OsbmParams(1.0, 1.0, bad)


@pytest.mark.parametrize("bad", [math.nan, math.inf, "x"])
def test_non_finite_parameters_rejected(bad):
    with pytest.raises(NonFiniteParameter):
        OsbmParams(1.0, bad, 1.0)


def test_sigma_piecewise():
    p = OsbmParams(1.5, 0.5, 1.0)
    np.testing.assert_array_equal(p.sigma([-1.0, 0.0, 2.0]), [0.5, 1.5, 1.5])


def test_speed_measure_components():
    m = speed_measure(OsbmParams(2.0, 0.5, 4.0))
    assert (m.density_left, m.density_right, m.atom_at_zero) == (4.0, 0.25, 0.25)


def test_coupling_validation():
    base = OsbmParams(1.0, 1.0, 1.0)
    assert validate_coupling(CouplingParams(0.5, -0.5, 0, 0, base))
    with pytest.raises(DriftGapViolation):
        validate_coupling(CouplingParams(1.0, -1.0, 0, 0, base))
    with pytest.raises(SigmaRatioViolation):
        validate_coupling(CouplingParams(0.0, 0.0, 0, 0, OsbmParams(1.5, 1.0, 1.0)))


def test_rng_streams_are_addressed():
    a = RngSpec(7, 3).generator().standard_normal(5)
    b = RngSpec(7, 3).generator().standard_normal(5)
    c = RngSpec(7, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_substreams_are_prefix_stable_and_distinct():
    two = [g.random(4) for g in RngSpec(1, 0).substreams(2)]
    three = [g.random(4) for g in RngSpec(1, 0).substreams(3)]
    np.testing.assert_array_equal(two[0], three[0])
    np.testing.assert_array_equal(two[1], three[1])
    assert not np.allclose(three[0], three[2])


def test_rng_rejects_negative_stream():
    with pytest.raises(NonPositiveParameter):
        RngSpec(0, -1)


def test_path_record_is_read_only_and_consistent():
    rec = PathRecord(0.5, [0.0, 1.0, 0.0], [0, 0, 1], [0, 0.5, 1.0], [True, False, True])
    assert rec.n_steps == 2 and rec.horizon == 1.0
    np.testing.assert_array_equal(rec.t_values, [0.0, 0.5, 1.0])
    assert rec.sticky_time() == 0.5
    with pytest.raises(ValueError):
        rec.x_values[0] = 3.0
    with pytest.raises(ValueError):
        PathRecord(0.5, [0.0, 1.0], [0.0], [0.0, 0.0], [False, False])


def test_worker_threads_env(monkeypatch):
    monkeypatch.setenv("OSBM_THREADS", "3")
    assert worker_threads() == 3
    monkeypatch.setenv("OSBM_THREADS", "zero")
    assert worker_threads() >= 1
