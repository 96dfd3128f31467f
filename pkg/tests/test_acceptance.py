"""Acceptance criteria 1-11, each at its stated tolerance and sample size.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import hashlib
import json
import math
import os
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from osbm.core import CouplingParams, OsbmParams, RngSpec
from osbm.kernel import transition_kernel
from osbm.lawlib import joint_density, phi, trivariate_mass
from osbm.simulate import SimConfig, sample_terminal
from osbm.verify import (
    convolution_grid,
    kernel_mass_lattice,
    laplace_bridge,
    verify_coupling,
    verify_kernel,
    verify_trivariate,
)
from scipy import integrate

SEED = 42
ORACLE_ATOM = math.exp(2.0) * math.erfc(math.sqrt(2.0))


def test_01_kernel_mass_lattice(acceptance):
    start = time.perf_counter()
    errs = kernel_mass_lattice()
    elapsed = time.perf_counter() - start
    worst = max(errs.values())
    ok = len(errs) == 36 and worst < 1e-6 and elapsed < 10.0
    assert acceptance(1, ok, f"kernel mass over {len(errs)} lattice points, max error {worst:.2e} < 1e-6, {elapsed:.1f}s < 10s")


def test_02_resolvent_bridge(acceptance):
    start = time.perf_counter()
    worst = {}
    for triple in ((1.0, 2.0, 0.5), (1.0, 1.0, 1.0), (2.0, 1.0, 3.0)):
        for x in (0.0, 0.7, -0.6):
            worst[(triple, x)] = max(laplace_bridge(OsbmParams(*triple), x).values())
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    ok = top < 1e-5 and elapsed < 60.0
    assert acceptance(2, ok, f"Laplace transform of Q_t vs R_lam, max error {top:.2e} < 1e-5, {elapsed:.1f}s < 60s")


def test_03_monte_carlo_kernel(acceptance):
    start = time.perf_counter()
    rep = verify_kernel(OsbmParams(1.0, 2.0, 0.5), t=1.0, x=0.0, n_paths=50_000, seed=SEED, dt=1e-3)
    elapsed = time.perf_counter() - start
    parts, ok = [], elapsed < 120.0
    for engine in ("timechange", "euler"):
        ks = rep.case(f"mc_ks_{engine}").statistic
        z = rep.case(f"mc_atom_{engine}").statistic
        ok = ok and ks < 0.015 and z < 3.0
        parts.append(f"{engine} KS {ks:.4f} < 0.015, atom {z:.2f} SE < 3")
    assert acceptance(3, ok, "; ".join(parts) + f"; {elapsed:.0f}s < 120s")


def test_04_sticky_case_atom(acceptance):
    p = OsbmParams(1.0, 1.0, 1.0)
    atom = transition_kernel(1.0, 0.0, p).atom_at_zero
    n = 100_000
    s = sample_terminal(SimConfig(dt=1e-3, t_max=1.0, rng=RngSpec(SEED, 0)), p, n)
    frac = float(np.mean(s.sticky))
    se = math.sqrt(atom * (1 - atom) / n)
    z = abs(frac - atom) / se
    ok = abs(atom - ORACLE_ATOM) < 1e-12 and z < 3.0
    assert acceptance(
        4, ok, f"atom {atom:.12f} vs e^2 erfc(sqrt 2) = {ORACLE_ATOM:.12f}; MC {frac:.4f} at {z:.2f} SE < 3 (N={n})"
    )


def test_05_convolution(acceptance):
    start = time.perf_counter()
    err = convolution_grid()
    elapsed = time.perf_counter() - start
    ok = err < 1e-6 and elapsed < 5.0
    assert acceptance(5, ok, f"h convolution on 3x3 grid, max error {err:.2e} < 1e-6, {elapsed:.2f}s < 5s")


def test_06_trivariate_marginalisation(acceptance):
    p = OsbmParams(1.0, 2.0, 0.5)
    t = 1.0
    worst = 0.0
    for y in (-1.5, -0.5, 0.2, 0.8, 1.7):
        for l in (0.05, 0.15, 0.25, 0.35, 0.45):
            val, _ = integrate.quad(lambda tau: float(phi(t, 0.0, y, l, tau, p)), l / p.theta, t, epsabs=1e-13, epsrel=1e-12, limit=200)
            worst = max(worst, abs(val - float(joint_density(t, 0.0, y, l, p))))
    atom = transition_kernel(t, 0.0, p).atom_at_zero
    mass_err = abs(trivariate_mass(t, 0.0, p) - (1.0 - atom))
    ok = worst < 1e-6 and mass_err < 1e-4
    assert acceptance(6, ok, f"int phi dtau vs joint density on 5x5 grid {worst:.2e} < 1e-6; triple mass error {mass_err:.2e} < 1e-4")


def test_07_mirror_map(acceptance):
    rep = verify_trivariate(OsbmParams(1.0, 2.0, 0.5), t=1.0, n_paths=50_000, seed=SEED, dt=1e-3)
    ks = rep.case("mirror_map").details["ks"]
    ok = max(ks.values()) < 0.02
    text = ", ".join(f"{k} {v:.4f}" for k, v in ks.items())
    assert acceptance(7, ok, f"two-sample KS of mapped vs direct triplets (N=5e4 each): {text} < 0.02")


def test_08_marginal_adjudication(acceptance):
    rep = verify_trivariate(OsbmParams(1.0, 1.0, 1.0), t=1.0, n_paths=50_000, seed=SEED, dt=1e-3, mirror=False)
    parts, ok = [], True
    for case, key in (("localtime_marginal", "localtime_marginal"), ("occupation_marginal", "occupation_marginal")):
        ks = rep.case(case).details["ks"]
        matching = [h for h in ("full", "restricted") if ks[h] < 0.02]
        ok = ok and len(matching) == 1 and key in rep.adjudications
        parts.append(f"{case}: full {ks['full']:.4f}, restricted {ks['restricted']:.4f} -> {matching}")
    assert acceptance(8, ok, "; ".join(parts))


def test_09_coupling(acceptance):
    c = CouplingParams(0.5, -0.5, 0.0, 0.0, OsbmParams(1.0, 1.0, 1.0))
    start = time.perf_counter()
    rep = verify_coupling(c, t=1.0, n_pairs=20_000, seed=SEED, dt=1e-3)
    elapsed = time.perf_counter() - start
    ks_x = rep.case("marginal_x_ks").statistic
    rv = rep.case("realized_variance_x").statistic
    red = rep.case("difference_osbm_ks")
    lt = rep.case("local_time_identity").statistic
    ok = (
        ks_x < 0.02
        and rv < 3.0
        and red.details["drifts"] == [0.0, 0.0]
        and red.statistic < 0.02
        and lt < 0.10
        and elapsed < 180.0
    )
    assert acceptance(
        9,
        ok,
        f"KS(X) {ks_x:.4f} < 0.02, RV {rv:.2f} SE < 3, equal-drift difference KS {red.statistic:.4f} < 0.02, "
        f"local time median rel. error {lt:.3f} < 0.10, {elapsed:.0f}s < 180s",
    )


def test_10_martingale_invariants(acceptance):
    p = OsbmParams(1.0, 2.0, 0.5)
    x0 = 0.3
    n = 100_000
    s = sample_terminal(SimConfig(dt=1e-3, t_max=1.0, x0=x0, rng=RngSpec(SEED, 0)), p, n)
    terms = {
        "X - x": s.x - x0,
        "X^2 - A - x^2": s.x**2 - s.a - x0**2,
        "|X| - theta * sticky - |x|": np.abs(s.x) - p.theta * s.sticky_time - abs(x0),
    }
    zs = {k: float(v.mean() / (v.std(ddof=1) / math.sqrt(n))) for k, v in terms.items()}
    ok = all(abs(z) < 4.0 for z in zs.values())
    assert acceptance(10, ok, ", ".join(f"{k}: {z:+.2f} SE" for k, z in zs.items()) + " (all within 4)")


def _osbm_command() -> list[str]:
    exe = shutil.which("osbm")
    return [exe] if exe else [sys.executable, "-m", "osbm"]


def test_11_cli_determinism(acceptance, tmp_path):
    digests, codes = [], []
    for threads in ("1", "2"):
        report = tmp_path / f"report_{threads}.json"
        env = {**os.environ, "OSBM_THREADS": threads}
        proc = subprocess.run(
            _osbm_command() + ["verify", "--suite", "all", "--seed", str(SEED), "--report", str(report)],
            env=env,
            capture_output=True,
            text=True,
        )
        codes.append(proc.returncode)
        data = report.read_bytes()
        digests.append(hashlib.sha256(data).hexdigest())
        json.loads(data)
    ok = digests[0] == digests[1] and codes == [0, 0]
    assert acceptance(11, ok, f"exit codes {codes}, report sha256 {digests[0][:12]} vs {digests[1][:12]}")
