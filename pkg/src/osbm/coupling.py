"""Sticky coupling of two drifted Brownian motions.

The difference process ``Z`` solves

    Z_t = sqrt(2) B_t + c_L L_t(Z) + c_G Gamma_t(Z) + c_t t,

with ``c_L = (beta1 - beta2) / (2 theta)``,
``c_G = (beta1 - beta2)(1/sigma_+^2 - 1/sigma_-^2)`` and
``c_t = (beta1 - beta2) / sigma_-^2``.  Without the last two terms
``Y = Z / sqrt(2)`` is a skew Brownian motion ``Y = B + c_L L(Y)``, i.e. it
leaves 0 upwards with probability ``(1 + c_L)/2``; it is simulated exactly
as ``|W|`` with excursion signs drawn at each visit to 0, and the two
absolutely continuous drift terms are added per step.  ``L(Z) = sqrt(2) L(Y)``.

The pair is then assembled through the time change
``alpha = t/sigma_-^2 + (1/sigma_+^2 - 1/sigma_-^2) Gamma(Z) + L(Z)/(2 theta)``,
``A = alpha^(-1)``, ``T_t = 2 sigma_-^2 t - A_t`` and an independent Brownian
motion ``B'``:

    X = (Z'_T + Z_A) / 2,    X' = (Z'_T - Z_A) / 2,
    Z'_T = sqrt(2) B'_T + (beta1 + beta2) t + x1 + x2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import CouplingParams, PathRecord, RngSpec, _readonly, validate_coupling
from .simulate import SimConfig, Structure, TimeChangeGrid, _grid, _invert, _record_structure, draw_structure, midpoint_structure

__all__ = [
    "CoupledPaths",
    "PairSummary",
    "simulate_Z",
    "build_pair",
    "coupling_diagnostics",
    "sample_pairs",
    "tanaka_local_time",
    "pair_to_csv",
]

SQRT2 = math.sqrt(2.0)
PAIR_CHUNK = 1024


@dataclass(frozen=True)
class CoupledPaths:
    """``X``, ``X'``, ``Z_A = X - X'``, ``A`` and ``L(X - X')`` on the grid ``k * dt``.

    ``coincide`` flags grid times at which ``X = X'``.
    """

    dt: float
    x_values: np.ndarray
    xp_values: np.ndarray
    z_values: np.ndarray
    a_values: np.ndarray
    l_diff_values: np.ndarray
    coincide: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("x_values", "xp_values", "z_values", "a_values", "l_diff_values", "coincide"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        n = len(self.x_values)
        if any(len(getattr(self, k)) != n for k in ("xp_values", "z_values", "a_values", "l_diff_values", "coincide")):
            raise ValueError("CoupledPaths arrays must all have the same length")

    @property
    def n_steps(self) -> int:
        return len(self.x_values) - 1

    @property
    def t_values(self) -> np.ndarray:
        return np.arange(len(self.x_values)) * self.dt

    def coincidence_time(self) -> float:
        return float(self.dt * np.count_nonzero(self.coincide[:-1]))


def _coefficients(c: CouplingParams):
    p = c.base
    gap = c.beta1 - c.beta2
    c_l = gap / (2.0 * p.theta)
    c_g = gap * (1.0 / p.sigma_plus**2 - 1.0 / p.sigma_minus**2)
    c_t = gap / p.sigma_minus**2
    return c_l, c_g, c_t


def _z_steps(c: CouplingParams, cfg: SimConfig) -> int:
    # alpha grows at rate >= 1/max(sigma)^2 along Z
    smax2 = max(c.base.sigma_plus, c.base.sigma_minus) ** 2
    return int(math.ceil(smax2 * cfg.t_max / cfg.dt)) + 2


def _z_draws(rng: RngSpec, n: int):
    gen = rng.substreams(2)[0]
    return gen.standard_normal(n), gen.random(n), gen.random(n + 1)


def _z_structure(c: CouplingParams, cfg: SimConfig, y, dl_y, rngs) -> Structure:
    """Excursion structure of the steps of ``Y`` that visit 0; zero-set time
    above 0 has scale ``p_up dL`` as for the skew motion."""
    p_up = 0.5 * (1.0 + _coefficients(c)[0])
    gens = [r.substreams(3)[2] for r in rngs]
    return draw_structure(y[:, :-1], y[:, 1:], dl_y, cfg.dt, gens, p_up=p_up)


def _z_block(c: CouplingParams, cfg: SimConfig, n: int, draws):
    """``Y = Z / sqrt(2)`` and the local time of ``Y`` per step, one row per path."""
    xi = np.stack([d[0] for d in draws])
    uu = np.stack([d[1] for d in draws])
    coins = np.stack([d[2] for d in draws])
    m = xi.shape[0]
    dt = cfg.dt
    rdt = math.sqrt(dt)
    c_l, c_g, c_t = _coefficients(c)
    p_up = 0.5 * (1.0 + c_l)
    y = np.empty((m, n + 1))
    dl = np.empty((m, n))
    y0 = (c.x1 - c.x2) / SQRT2
    y[:, 0] = y0
    sign = np.where(y0 > 0, 1.0, np.where(y0 < 0, -1.0, np.where(coins[:, 0] < p_up, 1.0, -1.0)))
    r = np.full(m, abs(y0))
    for k in range(n):
        drift = (c_g * (sign > 0) + c_t) * dt / SQRT2
        w = r + rdt * xi[:, k] + sign * drift
        span = np.sqrt((w - r) ** 2 - 2.0 * dt * np.log1p(-uu[:, k]))
        ell = np.maximum(0.0, span - r - np.abs(w))
        hit = ell > 0
        sign = np.where(hit, np.where(coins[:, k + 1] < p_up, 1.0, -1.0), sign)
        r = np.abs(w)
        y[:, k + 1] = sign * r
        dl[:, k] = ell
    return y, dl


def simulate_Z(c: CouplingParams, cfg: SimConfig) -> PathRecord:
    """The difference process ``Z`` on its own clock, long enough to invert ``alpha`` up to ``cfg.t_max``.

    ``x_values`` is ``Z``, ``l_values`` its symmetric local time at 0 and
    ``gamma_values`` its time in ``[0, inf)``.
    """
    validate_coupling(c)
    n = _z_steps(c, cfg)
    y, dl = _z_block(c, cfg, n, [_z_draws(cfg.rng, n)])
    st = _z_structure(c, cfg, y, dl, [cfg.rng])
    return _z_record(cfg, y[0], dl[0], Structure(*(v[0] for v in st)))


def _z_record(cfg: SimConfig, y: np.ndarray, dl_y: np.ndarray, st: Structure) -> PathRecord:
    pos = st.t1 * (y[:-1] >= 0) + st.t_pos + st.t3 * (y[1:] >= 0)
    return PathRecord(
        dt=cfg.dt,
        x_values=SQRT2 * y,
        l_values=np.concatenate([[0.0], np.cumsum(SQRT2 * dl_y)]),
        gamma_values=np.concatenate([[0.0], np.cumsum(pos)]),
        sticky_flags=np.zeros(len(y), dtype=bool),
        meta={"process": "Z", "zero_band": cfg.zero_band, "structure": _record_structure(st)},
    )


def _z_grid(z: PathRecord, c: CouplingParams) -> TimeChangeGrid:
    p = c.base
    y = np.asarray(z.x_values) / SQRT2
    dl_z = np.diff(np.asarray(z.l_values))
    rec = z.meta.get("structure")
    st = Structure(*(np.asarray(rec[k]) for k in Structure._fields)) if rec else midpoint_structure(dl_z.shape, z.dt)
    # the sticky stretch is dL(Z)/(2 theta) = dL(Y)/(sqrt(2) theta), so L(Y)
    # grows at sqrt(2) theta per unit of alpha there
    return _grid(y, dl_z / SQRT2, z.dt, p, st, theta=SQRT2 * p.theta)


def _pair_rng(cfg: SimConfig) -> RngSpec:
    return cfg.rng.child(cfg.rng.stream_index + 1)


def build_pair(z: PathRecord, c: CouplingParams, cfg: SimConfig, rng: RngSpec | None = None) -> CoupledPaths:
    """Assemble ``(X, X')`` on the grid ``k * cfg.dt`` up to ``cfg.t_max``.

    ``rng`` drives ``B'`` and the bridge fill of ``Z`` between its grid
    points; it defaults to the stream after ``cfg.rng``.
    """
    validate_coupling(c)
    p = c.base
    gen_fill, gen_b = (rng or _pair_rng(cfg)).substreams(2)
    times = np.arange(cfg.n_steps + 1) * cfg.dt
    grid = _z_grid(z, c)
    y_a, l_y, _, sticky, a = _invert(grid, times, gen_fill)
    z_a = SQRT2 * y_a
    big_t = 2.0 * p.sigma_minus**2 * times - a
    d_t = np.diff(big_t)
    b_prime = np.concatenate([[0.0], np.cumsum(np.sqrt(d_t) * gen_b.standard_normal(len(d_t)))])
    z_prime = SQRT2 * b_prime + (c.beta1 + c.beta2) * times + c.x1 + c.x2
    x = 0.5 * (z_prime + z_a)
    xp = 0.5 * (z_prime - z_a)
    x[0], xp[0] = c.x1, c.x2
    return CoupledPaths(
        dt=cfg.dt,
        x_values=x,
        xp_values=xp,
        z_values=z_a,
        a_values=a,
        l_diff_values=SQRT2 * l_y,
        coincide=sticky | (z_a == 0.0),
        meta={"t_increasing": bool(np.all(d_t > 0))},
    )


def tanaka_local_time(d: np.ndarray) -> float:
    """Symmetric local time at 0 of a sampled path from Tanaka's formula,
    ``|D_t| - |D_0| - sum sgn(D_k) (D_(k+1) - D_k)`` with ``sgn(0) = 0``."""
    d = np.asarray(d, dtype=float)
    return float(abs(d[-1]) - abs(d[0]) - np.sum(np.sign(d[:-1]) * np.diff(d)))


@dataclass(frozen=True)
class PairSummary:
    """Per-pair functionals of a batch of coupled paths at horizon ``t``."""

    t: float
    x: np.ndarray
    xp: np.ndarray
    a: np.ndarray
    l_diff: np.ndarray
    l_tanaka: np.ndarray
    coincidence_time: np.ndarray
    realized_var_x: np.ndarray
    realized_var_diff: np.ndarray
    n_steps: int

    def __len__(self) -> int:
        return len(self.x)


def _summarise(pair: CoupledPaths) -> np.ndarray:
    x, xp, d = pair.x_values, pair.xp_values, pair.z_values
    return np.array(
        [
            x[-1],
            xp[-1],
            pair.a_values[-1],
            pair.l_diff_values[-1],
            tanaka_local_time(d),
            pair.coincidence_time(),
            float(np.sum(np.diff(x) ** 2)),
            float(np.sum(np.diff(d) ** 2)),
        ]
    )


def _pair_chunk(c: CouplingParams, cfg: SimConfig, pairs: range) -> np.ndarray:
    n = _z_steps(c, cfg)
    rngs = [cfg.rng.child(2 * i) for i in pairs]
    y, dl = _z_block(c, cfg, n, [_z_draws(r, n) for r in rngs])
    st = _z_structure(c, cfg, y, dl, rngs)
    out = np.empty((len(pairs), 8))
    for j, i in enumerate(pairs):
        z = _z_record(cfg, y[j], dl[j], Structure(*(v[j] for v in st)))
        out[j] = _summarise(build_pair(z, c, cfg, rng=cfg.rng.child(2 * i + 1)))
    return out


def sample_pairs(c: CouplingParams, cfg: SimConfig, n_pairs: int, first: int = 0) -> PairSummary:
    """Summaries of ``n_pairs`` coupled pairs; pair ``i`` uses streams ``2i`` and ``2i+1``."""
    validate_coupling(c)
    idx = range(first, first + int(n_pairs))
    parts = [_pair_chunk(c, cfg, idx[i : i + PAIR_CHUNK]) for i in range(0, len(idx), PAIR_CHUNK)]
    data = np.concatenate(parts) if parts else np.empty((0, 8))
    return PairSummary(cfg.n_steps * cfg.dt, *data.T, n_steps=cfg.n_steps)


def coupling_diagnostics(pairs: CoupledPaths | Sequence[CoupledPaths], c: CouplingParams) -> dict:
    """Path functionals that the coupling must reproduce.

    Returns the standardised terminal positions of ``X`` and ``X'``, the
    realised variances of ``X`` (target ``sigma_-^2 t``) and of ``X - X'``
    (target ``2 A_t``), the local time of ``X - X'`` both from the
    construction and from Tanaka's formula, ``2 theta`` times the
    coincidence time, and ``(X - X')/sqrt(2)`` at ``t``.
    """
    if isinstance(pairs, CoupledPaths):
        pairs = [pairs]
    p = c.base
    summary = np.array([_summarise(q) for q in pairs]).reshape(-1, 8)
    t = pairs[0].n_steps * pairs[0].dt if pairs else 0.0
    scale = p.sigma_minus * math.sqrt(t) if t > 0 else float("nan")
    return {
        "t": t,
        "standardised_x": (summary[:, 0] - c.x1 - c.beta1 * t) / scale,
        "standardised_xp": (summary[:, 1] - c.x2 - c.beta2 * t) / scale,
        "realized_var_x": summary[:, 6],
        "realized_var_target": p.sigma_minus**2 * t,
        "realized_var_diff": summary[:, 7],
        "two_a": 2.0 * summary[:, 2],
        "l_diff": summary[:, 3],
        "l_tanaka": summary[:, 4],
        "two_theta_coincidence": 2.0 * p.theta * summary[:, 5],
        "scaled_difference": (summary[:, 0] - summary[:, 1]) / SQRT2,
    }


def pair_to_csv(pair: CoupledPaths) -> str:
    """CSV text with header ``t,x,xp,z,a,l_diff``."""
    rows = ["t,x,xp,z,a,l_diff"]
    t = pair.t_values
    for k in range(len(t)):
        rows.append(
            ",".join(
                repr(float(v))
                for v in (t[k], pair.x_values[k], pair.xp_values[k], pair.z_values[k], pair.a_values[k], pair.l_diff_values[k])
            )
        )
    return "\n".join(rows) + "\n"
