import math

import numpy as np
import pytest
from scipy import stats

from osbm import coupling
from osbm.core import CouplingParams, OsbmParams, RngSpec
from osbm.coupling import (
    build_pair,
    coupling_diagnostics,
    pair_to_csv,
    sample_pairs,
    simulate_Z,
    tanaka_local_time,
)
from osbm.errors import DriftGapViolation, SigmaRatioViolation
from osbm.simulate import SimConfig

C = CouplingParams(0.5, -0.5, 0.3, -0.2, OsbmParams(1.0, 1.5, 1.0))


def _cfg(i=0, dt=1e-2, t_max=1.0):
    return SimConfig(dt=dt, t_max=t_max, rng=RngSpec(17, i))


def test_validation_rejects_bad_pairs():
    with pytest.raises(DriftGapViolation):
        simulate_Z(CouplingParams(2.0, -0.5, 0.0, 0.0, OsbmParams(1, 1, 1)), _cfg())
    with pytest.raises(SigmaRatioViolation):
        sample_pairs(CouplingParams(0.0, 0.0, 0.0, 0.0, OsbmParams(2, 1, 1)), _cfg(), 3)


def test_z_covers_the_horizon_in_alpha():
    z = simulate_Z(C, _cfg())
    assert z.x_values[0] == pytest.approx(C.x1 - C.x2)
    assert np.all(np.diff(z.l_values) >= 0)
    grid = coupling._z_grid(z, C)
    assert grid.alpha_values[-1] > 1.0


def test_pair_shapes_and_start():
    cfg = _cfg(2)
    pair = build_pair(simulate_Z(C, cfg), C, cfg)
    assert pair.n_steps == cfg.n_steps
    assert pair.x_values[0] == C.x1 and pair.xp_values[0] == C.x2
    np.testing.assert_allclose(pair.x_values - pair.xp_values, pair.z_values, atol=1e-12)
    assert np.all(np.diff(pair.a_values) >= 0)
    assert pair.meta["t_increasing"]
    assert np.all(pair.z_values[pair.coincide] == 0.0)


def test_pair_csv_header():
    cfg = _cfg(1, dt=0.25)
    lines = pair_to_csv(build_pair(simulate_Z(C, cfg), C, cfg)).splitlines()
    assert lines[0] == "t,x,xp,z,a,l_diff"
    assert len(lines) == 6


def test_tanaka_local_time_of_simple_paths():
    # return to 0 from above: 0 - 0 - (0 * 1 + 1 * (-1)) = 1
    assert tanaka_local_time([0.0, 1.0, 0.0]) == pytest.approx(1.0)
    # crossing -1 -> 1 in one step: |1| - |-1| - (-1)(2) = 2
    assert tanaka_local_time([-1.0, 1.0]) == pytest.approx(2.0)
    assert tanaka_local_time([0.5, 0.7, 0.2]) == pytest.approx(0.0)


def test_sample_pairs_is_deterministic_and_offsettable():
    cfg = _cfg(0)
    a = sample_pairs(C, cfg, 6)
    b = sample_pairs(C, cfg, 4, first=2)
    np.testing.assert_array_equal(a.x[2:], b.x)
    np.testing.assert_array_equal(a.l_diff[2:], b.l_diff)
    np.testing.assert_array_equal(sample_pairs(C, cfg, 6).a, a.a)
    assert len(sample_pairs(C, cfg, 0)) == 0


def test_skew_sampler_leaves_zero_with_the_right_bias(monkeypatch):
    monkeypatch.setattr(coupling, "_coefficients", lambda c: (0.4, 0.0, 0.0))
    c = CouplingParams(0.0, 0.0, 0.0, 0.0, OsbmParams(1, 1, 1))
    cfg = _cfg(0, dt=0.05)
    draws = [coupling._z_draws(RngSpec(5, i), 20) for i in range(6000)]
    y, dl = coupling._z_block(c, cfg, 20, draws)
    # skew BM from 0: P(Y_1 > 0) = (1 + c_L) / 2 and |Y_1| ~ |N(0, 1)|
    frac = np.mean(y[:, -1] > 0)
    assert abs(frac - 0.7) < 4 * math.sqrt(0.21 / 6000)
    assert stats.kstest(np.abs(y[:, -1]), stats.halfnorm.cdf).pvalue > 1e-3
    assert stats.kstest(dl.sum(axis=1), stats.halfnorm.cdf).pvalue > 1e-3


def test_marginals_are_drifted_brownian_motions():
    s = sample_pairs(C, _cfg(0), 400)
    scale = C.base.sigma_minus
    zx = (s.x - C.x1 - C.beta1) / scale
    zxp = (s.xp - C.x2 - C.beta2) / scale
    assert stats.kstest(zx, "norm").pvalue > 1e-3
    assert stats.kstest(zxp, "norm").pvalue > 1e-3
    assert np.all(s.a <= 2 * C.base.sigma_minus**2 * s.t + 1e-12)


def test_diagnostics_keys_and_targets():
    cfg = _cfg(3)
    pairs = [build_pair(simulate_Z(C, SimConfig(dt=cfg.dt, t_max=1.0, rng=RngSpec(4, 2 * i))), C, cfg, rng=RngSpec(4, 2 * i + 1)) for i in range(40)]
    d = coupling_diagnostics(pairs, C)
    assert d["t"] == pytest.approx(1.0)
    assert d["realized_var_target"] == pytest.approx(C.base.sigma_minus**2)
    assert len(d["standardised_x"]) == 40
    assert np.mean(d["realized_var_x"]) == pytest.approx(d["realized_var_target"], rel=0.1)
    np.testing.assert_allclose(d["scaled_difference"], [q.z_values[-1] / math.sqrt(2) for q in pairs], atol=1e-12)
