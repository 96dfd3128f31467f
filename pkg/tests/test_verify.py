import json
import math

import numpy as np
import pytest
from scipy import stats

from osbm.core import CouplingParams, OsbmParams
from osbm.errors import DriftGapViolation, EmptySample, UnknownSuite
from osbm.kernel import transition_kernel
from osbm.verify import (
    SUITES,
    SuiteConfig,
    VerifyCase,
    VerifyReport,
    convolution_grid,
    kernel_mass_lattice,
    ks_distance,
    ks_two_sample,
    run_suite,
    verify_coupling,
    verify_kernel,
    verify_trivariate,
)


# --------------------------------------------------------------------------
# KS distance


def test_ks_inverse_transform_sample_is_close():
    u = np.random.default_rng(0).random(10_000)
    assert ks_distance(stats.norm.ppf(u), stats.norm.cdf) < 0.02


def test_ks_pure_atom_is_exact():
    assert ks_distance(np.zeros(50), lambda y: np.where(np.asarray(y) >= 0, 1.0, 0.0), atom=1.0) == 0.0


def test_ks_shift_gives_lower_bound():
    x = np.random.default_rng(1).standard_normal(5000) + 1.0
    shift_mass = stats.norm.cdf(0.5) - stats.norm.cdf(-0.5)
    assert ks_distance(x, stats.norm.cdf) >= shift_mass - 0.03


def test_ks_accepts_kernel_values_with_atom():
    k = transition_kernel(1.0, 0.0, OsbmParams(1, 1, 1))
    # all mass at 0: the gap is the continuous mass on either side, (1 - atom) / 2 by symmetry
    assert ks_distance(np.zeros(10), k) == pytest.approx(0.5 * (1 - k.atom_at_zero), abs=1e-6)


def test_ks_empty_sample():
    with pytest.raises(EmptySample):
        ks_distance([], stats.norm.cdf)
    with pytest.raises(EmptySample):
        ks_two_sample([], [1.0])


# --------------------------------------------------------------------------
# report plumbing


def test_case_passes_iff_statistic_below_threshold():
    assert VerifyCase("a", 1.0, 1.0).passed
    assert not VerifyCase("a", 1.0 + 1e-12, 1.0).passed
    assert not VerifyCase("a", math.inf, 0.0).passed


def test_report_json_schema():
    rep = VerifyReport("x", {"a": 1}, 7, [VerifyCase("c", 0.5, 1.0, {"n": np.int64(3), "v": np.array([1.0, 2.0])})])
    rep.adjudications["z"] = "b"
    rep.adjudications["a"] = "c"
    d = json.loads(rep.to_json())
    assert list(d) == ["schema", "suite", "seed", "params", "cases", "adjudications"]
    assert d["schema"] == 1 and d["seed"] == 7
    assert d["cases"][0] == {"name": "c", "statistic": 0.5, "threshold": 1.0, "passed": True, "details": {"n": 3, "v": [1.0, 2.0]}}
    assert list(d["adjudications"]) == ["a", "z"]
    assert rep.summary_lines() == ["PASS c: 0.5 <= 1.0"]


def test_unknown_suite():
    assert set(SUITES) == {"kernel", "trivariate", "coupling", "analytic", "all"}
    with pytest.raises(UnknownSuite):
        run_suite("unknown")


def test_zero_paths_become_failed_cases():
    rep = run_suite("kernel", SuiteConfig(n_paths=0))
    failed = [c for c in rep.cases if not c.passed]
    assert {c.name for c in failed} == {"mc_timechange", "mc_euler"}
    assert all("EmptySample" in c.details["error"] for c in failed)
    assert rep.case("kernel_mass").passed


# --------------------------------------------------------------------------
# suites at small budgets


def test_kernel_suite_small_is_deterministic():
    a = verify_kernel(OsbmParams(1, 2, 0.5), n_paths=1000, seed=3, dt=1e-2)
    b = verify_kernel(OsbmParams(1, 2, 0.5), n_paths=1000, seed=3, dt=1e-2)
    assert a.to_json() == b.to_json()
    for key in ("g_exponent", "p0_sign", "fourth_case"):
        assert any(key in k for k in a.adjudications)


def test_kernel_suite_in_the_oscillating_limit():
    rep = verify_kernel(OsbmParams(1, 1, 1e6), n_paths=3000, seed=5, dt=1e-2)
    for engine in ("timechange", "euler"):
        d = rep.case(f"mc_atom_{engine}").details
        assert d["atom"] < 1e-3
        assert d["sticky_fraction"] < 1e-3 + 3 * math.sqrt(1e-3 * (1 - 1e-3) / 3000)
    assert rep.passed


def test_trivariate_suite_small():
    rep = verify_trivariate(OsbmParams(1, 2, 0.5), n_paths=2000, seed=1, dt=1e-2)
    names = [c.name for c in rep.cases]
    for name in ("trivariate_mass", "marginalisation", "support", "localtime_marginal", "occupation_marginal", "mirror_map"):
        assert name in names
    assert rep.case("support").statistic == 0.0
    for key in ("localtime_marginal", "occupation_marginal", "occupation_constants", "trivariate_negative_start"):
        assert key in rep.adjudications


def test_coupling_suite_small():
    c = CouplingParams(0.5, -0.5, 0.0, 0.0, OsbmParams(1, 1, 1))
    rep = verify_coupling(c, n_pairs=300, seed=2, dt=1e-2)
    names = {case.name for case in rep.cases}
    assert {"marginal_x_ks", "realized_variance_x", "local_time_identity", "difference_osbm_ks"} <= names
    with pytest.raises(DriftGapViolation):
        verify_coupling(CouplingParams(1.0, -1.0, 0.0, 0.0, OsbmParams(1, 1, 1)), n_pairs=10)


def test_analytic_helpers():
    errs = kernel_mass_lattice()
    assert len(errs) == 36
    assert max(errs.values()) < 1e-6
    assert convolution_grid() < 1e-6
    rep = run_suite("analytic")
    assert rep.passed, rep.summary_lines()
