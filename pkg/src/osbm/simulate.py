"""Path simulation of the OSBM.

Two engines are provided.

``timechange``
    A Brownian grid with its local time at 0 is turned into the additive
    functional ``alpha`` and inverted.  A Brownian step from ``a`` to ``b``
    that does not visit 0 adds ``dt/sigma^2``.  A step that does is cut at
    its first and last zeros: given ``a, b`` and the step's local time
    ``dL``, the three Brownian durations (first-hit time, zero set, time
    after the last zero) are sampled from their exact conditional law, as is
    the split of the zero set into time above and below 0.  The functional
    then grows as ``[D1 | E1 | S | E2 | D2]``, with ``S = dL/theta`` the
    sticky stretch during which the OSBM sits at 0.  Positions between grid
    points are filled in with Brownian and first-passage bridges so that
    quadratic variation is not lost to interpolation.

``euler``
    A direct discretisation of the sticky SDE.  Away from 0 a Gaussian step
    is taken and a Brownian-bridge crossing test decides whether the path
    reached 0 during the step; a path at 0 leaves with probability
    ``q = min(1, r theta sqrt(pi dt / 2))``, on the positive side with
    probability ``sigma_- / (sigma_+ + sigma_-)``.  Both constants follow
    from the boundary condition ``(theta/2)(f'(0+) - f'(0-)) = G f(0)``
    matched over one step.  When ``r theta sqrt(pi dt / 2) > 1`` a visit
    to 0 is shorter than a step on average, so a detected crossing is
    recorded at 0 only with probability ``1 / (r theta sqrt(pi dt / 2))``
    and otherwise leaves at once.

Local time of the Brownian grid is available through three estimators
(``SimConfig.local_time``):

* ``"bridge"`` (default): exact conditional sampling given the endpoints,
  ``P(dL >= l) = exp(-((|a| + |b| + l)^2 - (b - a)^2) / (2 dt))``;
* ``"occupation"``: ``dt / (2 eps) * 1{|B_k| < eps}`` with ``eps = zero_band``;
* ``"downcrossing"``: ``eps`` times the downcrossings of ``|B|`` from
  ``eps`` to 0.  Returns to 0 are seen only through sign changes on the
  grid, so the estimate is biased low unless ``eps`` is many multiples of
  ``sqrt(dt)``; it is meant for sensitivity checks.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .core import OsbmParams, PathRecord, RngSpec, worker_threads
from .errors import GridExhausted, HorizonExceeded, NonPositiveParameter, ParameterError

__all__ = [
    "SimConfig",
    "TimeChangeGrid",
    "TerminalSample",
    "simulate_bm",
    "alpha_functional",
    "simulate_osbm",
    "simulate_osbm_euler",
    "path_statistics",
    "sample_terminal",
    "path_to_csv",
    "LOCAL_TIME_ESTIMATORS",
    "Structure",
    "draw_structure",
]

LOCAL_TIME_ESTIMATORS = ("bridge", "occupation", "downcrossing")
ENGINES = ("timechange", "euler")
CHUNK = 256
EULER_CHUNK = 4096


@dataclass(frozen=True)
class SimConfig:
    """Grid, horizon, start and random stream of a simulation.

    ``dt`` is both the Brownian grid step and the step of the OSBM output
    grid.  ``zero_band`` defaults to ``sqrt(dt)``.
    """

    dt: float
    t_max: float
    x0: float = 0.0
    zero_band: float | None = None
    rng: RngSpec = field(default_factory=RngSpec)
    local_time: str = "bridge"
    max_bm_steps: int = 50_000_000

    def __post_init__(self) -> None:
        dt, t_max = float(self.dt), float(self.t_max)
        if not (dt > 0 and math.isfinite(dt)):
            raise NonPositiveParameter("dt", self.dt)
        if not (t_max > dt and math.isfinite(t_max)):
            raise ParameterError(f"t_max must exceed dt, got t_max={self.t_max!r}, dt={self.dt!r}")
        band = math.sqrt(dt) if self.zero_band is None else float(self.zero_band)
        if not band > 0:
            raise NonPositiveParameter("zero_band", self.zero_band)
        if self.local_time not in LOCAL_TIME_ESTIMATORS:
            raise ParameterError(f"unknown local-time estimator {self.local_time!r}")
        if not math.isfinite(float(self.x0)):
            raise ParameterError(f"x0 must be finite, got {self.x0!r}")
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t_max", t_max)
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "zero_band", band)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def meta(self) -> dict:
        return {"zero_band": self.zero_band, "local_time": self.local_time}


# --------------------------------------------------------------------------
# Brownian grid and local time


def _sigma(v: np.ndarray, p: OsbmParams) -> np.ndarray:
    return np.where(v >= 0, p.sigma_plus, p.sigma_minus)


def _downcrossing_increments(a: np.ndarray, b: np.ndarray, eps: float, armed: bool) -> np.ndarray:
    """``eps`` per downcrossing of ``|B|`` from ``eps`` to 0, detected on the grid."""
    n = b.shape[-1]
    idx = np.broadcast_to(np.arange(n), b.shape)
    up = np.abs(b) >= eps
    down = (a * b < 0) | (b == 0)
    last_up = np.maximum.accumulate(np.where(up, idx, -1), axis=-1)
    last_down = np.maximum.accumulate(np.where(down, idx, -1), axis=-1)
    pad = np.full(b.shape[:-1] + (1,), -1)
    up_before = np.concatenate([pad, last_up[..., :-1]], axis=-1)
    down_before = np.concatenate([pad, last_down[..., :-1]], axis=-1)
    initially = armed & (up_before == -1) & (down_before == -1)
    valid = down & ((up_before > down_before) | initially)
    return eps * valid


# -log(1 - U) for a double-precision uniform U in [0, 1) never exceeds this.
_MAX_EXP_DRAW = 36.75


def _bridge_local_time(a, b, dt, gen) -> np.ndarray:
    """Local time of Brownian bridges from ``a`` to ``b`` over ``dt``.

    Only steps with ``4 a b < 2 dt * _MAX_EXP_DRAW`` can carry local time;
    a uniform is drawn for exactly those, in order.
    """
    dl = np.zeros(a.shape)
    live = a * b < 0.5 * dt * _MAX_EXP_DRAW
    aa, bb = a[live], b[live]
    span = np.sqrt((bb - aa) ** 2 - 2.0 * dt * np.log1p(-gen.random(aa.size)))
    dl[live] = np.maximum(0.0, span - np.abs(aa) - np.abs(bb))
    return dl


# --------------------------------------------------------------------------
# excursion structure of steps that visit 0

# Gaussian proposals per split; a split that rejects all of them redraws.
_PROPOSALS = 16


class Structure(NamedTuple):
    """Brownian time spent in the pieces of each step.

    A step that visits 0 runs from its start to the first zero (``t1``),
    through the zero set (``t_pos`` above and ``t_neg`` below 0) and from
    the last zero to its end (``t3``).  ``pos_first`` orders the two middle
    pieces.  A step that does not visit 0 is recorded as two halves.
    """

    t1: np.ndarray
    t_pos: np.ndarray
    t_neg: np.ndarray
    t3: np.ndarray
    pos_first: np.ndarray


def midpoint_structure(shape, h: float) -> Structure:
    """Every step split at its midpoint, with an empty zero set."""
    half = np.full(shape, 0.5 * h)
    return Structure(half, np.zeros(shape), np.zeros(shape), half.copy(), np.ones(shape, dtype=bool))


def _passage_split(c1, c2, total, z, u):
    """Split ``total`` into two first-passage times with scales ``c1, c2``.

    The first piece has density proportional to ``h(s, c1) h(total - s, c2)``.
    With ``w`` its fraction, ``c1 sqrt((1-w)/w) - c2 sqrt(w/(1-w))`` is
    ``N(0, total)`` under the weight ``1/(c1 (1-w) + c2 w)``, so Gaussian
    proposals ``z`` are accepted with probability
    ``min(c1, c2) / (c1 (1-w) + c2 w) >= 1/2``.  Returns both pieces and a
    flag marking rows where one of the proposals was accepted.
    """
    q = np.sqrt(total)[:, None] * z
    a = c1[:, None]
    b = c2[:, None]
    disc = np.sqrt(q * q + 4.0 * a * b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # rho = sqrt(w / (1 - w)) is the positive root of b rho^2 + q rho - a
        rho = np.where(q > 0, 2.0 * a / (q + disc), (disc - q) / (2.0 * b))
        r2 = rho * rho
        first = r2 / (1.0 + r2)
        second = 1.0 / (1.0 + r2)
    accept = u * (a * second + b * first) < np.minimum(a, b)
    j = np.argmax(accept, axis=1)
    rows = np.arange(len(c1))
    ok = accept[rows, j]
    f, s = first[rows, j], second[rows, j]
    zero1, zero2 = c1 <= 0, (c2 <= 0) & (c1 > 0)
    f = np.where(zero1, 0.0, np.where(zero2, 1.0, f))
    s = np.where(zero1, 1.0, np.where(zero2, 0.0, s))
    return total * f, total * s, ok | zero1 | zero2


def _split_all(c1, c2, total, z, u, regen):
    f, s, ok = _passage_split(c1, c2, total, z, u)
    for i in np.flatnonzero(~ok):
        gen = regen(i)
        sl = slice(i, i + 1)
        while True:
            f1, s1, ok1 = _passage_split(
                c1[sl], c2[sl], total[sl], gen.standard_normal((1, _PROPOSALS)), gen.random((1, _PROPOSALS))
            )
            if ok1[0]:
                f[i], s[i] = f1[0], s1[0]
                break
    return f, s


def _zero_pieces(a, b, dl, h, z, u, p_up, regen):
    """Piece lengths of steps from ``a`` to ``b`` with local time ``dl > 0``
    or a sign change.

    Given the endpoints and the local time, the first-hit time, the length
    of the zero set and the time after the last zero have density
    proportional to ``h(t1, |a|) h(m, dl) h(t3, |b|)``; two passage splits
    sample it exactly.  Inside the zero set the time above 0 is a further
    split with scales ``p_up dl`` and ``(1 - p_up) dl``.
    """
    k = _PROPOSALS
    ca, cb = np.abs(a), np.abs(b)
    t1, rest = _split_all(ca, dl + cb, np.full(a.shape, float(h)), z[:, :k], u[:, :k], regen)
    mid, t3 = _split_all(dl, cb, rest, z[:, k : 2 * k], u[:, k : 2 * k], regen)
    t_pos, t_neg = _split_all(p_up * dl, (1.0 - p_up) * dl, mid, z[:, 2 * k :], u[:, 2 * k : 3 * k], regen)
    return t1, t_pos, t_neg, t3, u[:, 3 * k] < 0.5


def draw_structure(a, b, dl, h: float, gens, p_up: float = 0.5) -> Structure:
    """Excursion structure of the steps of 2-d arrays ``a -> b``.

    Row ``j`` draws ``3 * _PROPOSALS`` normals and ``3 * _PROPOSALS + 1``
    uniforms per step that visits 0, from ``gens[j]``, followed by the
    rare redraws of its rejected splits.
    """
    out = midpoint_structure(a.shape, h)
    hit = (dl > 0) | (a * b < 0)
    counts = hit.sum(axis=1)
    k = _PROPOSALS
    z = np.concatenate([gens[j].standard_normal((int(c), 3 * k)) for j, c in enumerate(counts)])
    u = np.concatenate([gens[j].random((int(c), 3 * k + 1)) for j, c in enumerate(counts)])
    owner = np.repeat(np.arange(len(counts)), counts)
    pieces = _zero_pieces(a[hit], b[hit], dl[hit], h, z, u, p_up, lambda i: gens[owner[i]])
    for arr, val in zip(out, pieces):
        arr[hit] = val
    return out


def _layout(b, dl, p: OsbmParams, st: Structure, drawn=None, theta: float | None = None) -> dict:
    """Per-step ``alpha`` pieces ``[D1 | E1 | S | E2 | D2]``.

    ``D1``, ``D2`` are the first and last pieces at rates ``1/sigma(B_k)^2``
    and ``1/sigma(B_(k+1))^2``, ``E1``, ``E2`` the two sides of the zero set
    and ``S = dL/theta`` the sticky stretch.  ``b`` includes the start
    column; undrawn steps (``drawn`` False) contribute nothing.
    """
    a_, b_ = b[..., :-1], b[..., 1:]
    inv_p, inv_m = 1.0 / p.sigma_plus**2, 1.0 / p.sigma_minus**2
    d1 = st.t1 * np.where(a_ >= 0, inv_p, inv_m)
    d2 = st.t3 * np.where(b_ >= 0, inv_p, inv_m)
    e_pos = st.t_pos * inv_p
    e_neg = st.t_neg * inv_m
    s = dl / (p.theta if theta is None else theta)
    if drawn is not None:
        d1, d2, e_pos, e_neg, s = (np.where(drawn, v, 0.0) for v in (d1, d2, e_pos, e_neg, s))
    pos = d1 * (a_ >= 0) + e_pos + s + d2 * (b_ >= 0)
    return {"d1": d1, "d2": d2, "e_pos": e_pos, "e_neg": e_neg, "s": s, "pos": pos, "inc": d1 + e_pos + e_neg + s + d2}


class _BrownianRows:
    """Brownian grids from ``x0``, one row per generator pair, grown in blocks,
    together with the per-step decomposition of ``alpha``.

    Row ``j`` draws, per block, ``block`` normals and then one uniform per
    step that can carry bridge local time from ``gens[j][0]``, and the
    excursion structure of its steps that visit 0 from ``gens[j][1]``.  A
    row is only extended while it needs to be, so its content never depends
    on the other rows.  Steps not drawn for a row have ``alpha = inf`` and
    contribute nothing.
    """

    KEYS = ("b", "dl", "t1", "t_pos", "t_neg", "t3", "pos_first", "d1", "d2", "e_pos", "e_neg", "s", "pos", "alpha")

    def __init__(self, cfg: SimConfig, p: OsbmParams | None, gens, block: int):
        self.cfg = cfg
        self.p = p
        self.gens = [tuple(g) for g in gens]
        self.block = int(block)
        m = len(self.gens)
        self.last_b = np.full(m, cfg.x0)
        self.last_alpha = np.zeros(m)
        self.parts: dict[str, list] = {k: [] for k in self.KEYS}
        self.n_steps = 0

    def extend(self, rows: np.ndarray) -> np.ndarray:
        """Draw one more block for ``rows``; returns the new end values of ``alpha``."""
        cfg, dt, nb = self.cfg, self.cfg.dt, self.block
        self.n_steps += nb
        if self.n_steps > cfg.max_bm_steps:
            raise GridExhausted(f"more than {cfg.max_bm_steps} Brownian steps needed")
        m = len(self.gens)
        new_b = np.full((m, nb), np.nan)
        new_dl = np.zeros((m, nb))
        for j in np.flatnonzero(rows):
            gen = self.gens[j][0]
            path = self.last_b[j] + np.cumsum(gen.standard_normal(nb) * math.sqrt(dt))
            if cfg.local_time == "bridge":
                a = np.concatenate([[self.last_b[j]], path[:-1]])
                new_dl[j] = _bridge_local_time(a, path, dt, gen)
            elif cfg.local_time == "occupation":
                a = np.concatenate([[self.last_b[j]], path[:-1]])
                new_dl[j] = (dt / (2.0 * cfg.zero_band)) * (np.abs(a) < cfg.zero_band)
            new_b[j] = path
        b = np.concatenate([self.last_b[:, None], new_b], axis=1)
        if cfg.local_time == "bridge":
            idx = np.flatnonzero(rows)
            st = midpoint_structure((m, nb), dt)
            sub = draw_structure(b[idx, :-1], b[idx, 1:], new_dl[idx], dt, [self.gens[j][1] for j in idx])
            for full, part in zip(st, sub):
                full[idx] = part
        else:
            st = midpoint_structure((m, nb), dt)
        self.parts["b"].append(new_b)
        self.parts["dl"].append(new_dl)
        for key, val in zip(Structure._fields, st):
            self.parts[key].append(val)
        if self.p is not None and cfg.local_time != "downcrossing":
            lay = _layout(b, new_dl, self.p, st, drawn=rows[:, None])
            alpha = self.last_alpha[:, None] + np.cumsum(lay["inc"], axis=1)
            alpha[~rows] = np.inf
            for key in ("d1", "d2", "e_pos", "e_neg", "s", "pos"):
                self.parts[key].append(lay[key])
            self.parts["alpha"].append(alpha)
            self.last_alpha = np.where(rows, alpha[:, -1], self.last_alpha)
        self.last_b = np.where(rows, new_b[:, -1], self.last_b)
        return self.last_alpha

    def finish(self):
        """Concatenated arrays; ``b`` and ``alpha`` include the start column."""
        m = len(self.gens)
        out = {}
        out["b"] = np.concatenate([np.full((m, 1), self.cfg.x0)] + self.parts["b"], axis=1)
        if self.cfg.local_time == "downcrossing":
            b = np.nan_to_num(out["b"], nan=0.0)
            dl = _downcrossing_increments(b[:, :-1], b[:, 1:], self.cfg.zero_band, abs(self.cfg.x0) >= self.cfg.zero_band)
            dl[np.isnan(out["b"][:, 1:])] = 0.0
            out["dl"] = dl
        else:
            out["dl"] = np.concatenate(self.parts["dl"], axis=1)
        out["structure"] = Structure(*(np.concatenate(self.parts[k], axis=1) for k in Structure._fields))
        if self.p is not None and self.parts["alpha"]:
            for key in ("d1", "d2", "e_pos", "e_neg", "s", "pos"):
                out[key] = np.concatenate(self.parts[key], axis=1)
            out["alpha"] = np.concatenate([np.zeros((m, 1))] + self.parts["alpha"], axis=1)
        return out


def _bm_arrays(cfg: SimConfig, n: int, gens):
    """A single Brownian grid with ``n`` steps, its local-time increments and
    excursion structure."""
    src = _BrownianRows(cfg, None, [gens], n)
    src.extend(np.array([True]))
    out = src.finish()
    return out["b"][0], out["dl"][0], Structure(*(v[0] for v in out["structure"]))


def _record_structure(st: Structure) -> dict:
    return {k: np.asarray(v) for k, v in zip(Structure._fields, st)}


def simulate_bm(cfg: SimConfig) -> PathRecord:
    """Standard Brownian motion from ``cfg.x0`` with its symmetric local time at 0.

    ``gamma_values`` is the time spent in ``[0, inf)``: exact inside steps
    that visit 0 (from their sampled excursion structure, stored in
    ``meta["structure"]``) and half a step per endpoint otherwise.
    """
    n = cfg.n_steps
    g_bm, _, g_struct = cfg.rng.substreams(3)
    b, dl, st = _bm_arrays(cfg, n, (g_bm, g_struct))
    pos = st.t1 * (b[:-1] >= 0) + st.t_pos + st.t3 * (b[1:] >= 0)
    return PathRecord(
        dt=cfg.dt,
        x_values=b,
        l_values=np.concatenate([[0.0], np.cumsum(dl)]),
        gamma_values=np.concatenate([[0.0], np.cumsum(pos)]),
        sticky_flags=np.zeros(n + 1, dtype=bool),
        meta={**cfg.meta(), "structure": _record_structure(st)},
    )


# --------------------------------------------------------------------------
# additive functional and its inverse


@dataclass(frozen=True)
class TimeChangeGrid:
    """``alpha`` on the Brownian grid, with its per-step decomposition.

    ``alpha_values[k]`` is the functional at Brownian time ``k * bm_dt``.
    A step that visits 0 splits into ``d1`` (first piece, sign of ``B_k``),
    ``e1`` (first side of the zero set), ``sticky = dL/theta``, ``e2`` and
    ``d2`` (last piece, sign of ``B_(k+1)``); ``structure`` holds the
    matching Brownian times.  Other steps are one diffusive piece
    ``d1 + d2``.
    """

    alpha_values: np.ndarray
    bm_dt: float
    b_values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    sticky: np.ndarray
    dl: np.ndarray
    theta: float
    e_pos: np.ndarray
    e_neg: np.ndarray
    structure: Structure

    @property
    def pinned(self) -> np.ndarray:
        """Steps in which the Brownian path visits 0."""
        a, b = self.b_values[:-1], self.b_values[1:]
        return (self.dl > 0) | (a * b < 0)

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.alpha_values[-1]):
            raise GridExhausted(f"alpha covers [0, {self.alpha_values[-1]!r}), requested {float(np.max(t))!r}")
        k = np.searchsorted(self.alpha_values, t, side="right") - 1
        return k, t - self.alpha_values[k]

    def steps(self, k) -> "_Steps":
        st = self.structure
        return _steps(
            k, self.b_values[k], self.b_values[k + 1], self.d1[k], self.e_pos[k], self.e_neg[k],
            self.sticky[k], self.d2[k], Structure(*(v[k] for v in st)), self.dl[k],
        )

    def a_inverse(self, t):
        """Brownian time ``A_t`` reached at functional level ``t``."""
        k, u = self.locate(t)
        out = _pieces(self.steps(k), u, self.bm_dt, self.theta)["bm_time"]
        return float(out) if out.ndim == 0 else out


def _grid(b, dl, h, p: OsbmParams, st: Structure, theta: float | None = None) -> TimeChangeGrid:
    th = p.theta if theta is None else theta
    lay = _layout(b, dl, p, st, theta=th)
    alpha = np.concatenate([[0.0], np.cumsum(lay["inc"])])
    return TimeChangeGrid(alpha, h, b, lay["d1"], lay["d2"], lay["s"], dl, th, lay["e_pos"], lay["e_neg"], st)


def alpha_functional(bm: PathRecord, p: OsbmParams) -> TimeChangeGrid:
    """``alpha = t/sigma_-^2 + (1/sigma_+^2 - 1/sigma_-^2) Gamma(B) + L(B)/theta`` on the grid.

    Uses the excursion structure in ``bm.meta["structure"]`` when present
    (as recorded by :func:`simulate_bm`) and midpoint splits otherwise.
    """
    b = np.asarray(bm.x_values)
    dl = np.diff(np.asarray(bm.l_values))
    rec = bm.meta.get("structure")
    st = Structure(*(np.asarray(rec[k]) for k in Structure._fields)) if rec else midpoint_structure(dl.shape, bm.dt)
    return _grid(b, dl, bm.dt, p, st)


class _Steps(NamedTuple):
    """Located steps: endpoints, ``alpha`` pieces and Brownian piece lengths."""

    k: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d1: np.ndarray
    e1: np.ndarray
    s: np.ndarray
    e2: np.ndarray
    d2: np.ndarray
    t1: np.ndarray
    te1: np.ndarray
    te2: np.ndarray
    t3: np.ndarray
    pos_first: np.ndarray
    dl: np.ndarray


def _steps(k, a, b, d1, e_pos, e_neg, s, d2, st: Structure, dl) -> _Steps:
    pf = st.pos_first
    return _Steps(
        k, a, b, d1, np.where(pf, e_pos, e_neg), s, np.where(pf, e_neg, e_pos), d2,
        st.t1, np.where(pf, st.t_pos, st.t_neg), np.where(pf, st.t_neg, st.t_pos), st.t3, pf, dl,
    )


def _pieces(st: _Steps, u, h, theta) -> dict:
    """Which piece offset ``u`` of a step's ``alpha`` falls in, and the
    Brownian time, local time and occupation reached there."""
    u = np.asarray(u, dtype=float)
    pinned = (st.dl > 0) | (st.a * st.b < 0)
    pos_a, pos_b = st.a >= 0, st.b >= 0
    widths = np.stack([st.d1, st.e1, st.s, st.e2, st.d2])
    starts = np.cumsum(widths, axis=0) - widths
    piece = np.sum(u[None] >= starts[1:], axis=0)
    pick = lambda arr: np.choose(piece, arr)  # noqa: E731
    width = pick(widths)
    off = u - pick(starts)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(width > 0, np.clip(off / width, 0.0, 1.0), 0.0)
        frac_whole = np.clip(u / (st.d1 + st.d2), 0.0, 1.0)
    lengths = np.stack([st.t1, st.te1, 0.0 * st.t1, st.te2, st.t3])
    t_start = np.cumsum(lengths, axis=0) - lengths
    seg_len = pick(lengths)
    bm_off = np.where(pinned, pick(t_start) + seg_len * frac, h * frac_whole)
    signs = np.stack([pos_a, st.pos_first, np.ones_like(pos_a), ~st.pos_first, pos_b]).astype(float)
    g_start = np.cumsum(widths * signs, axis=0) - widths * signs
    g_part = np.where(pinned, pick(g_start) + off * pick(signs), u * pos_a)
    l_part = np.where(piece == 2, off * theta, np.where(piece > 2, st.dl, 0.0))
    l_part = np.where(pinned, l_part, 0.0)
    return {
        "pinned": pinned,
        "piece": np.where(pinned, piece, -1),
        "bm_time": st.k * h + bm_off,
        "bm_off": bm_off,
        "seg_off": np.where(pinned, seg_len * frac, h * frac_whole),
        "seg_len": np.where(pinned, seg_len, h),
        "l_part": l_part,
        "g_part": g_part,
        "sticky": pinned & (piece == 2) & (st.s > 0),
    }


def _readout(st: _Steps, u, h, l_before, pos_before, theta, fill):
    """Position, local time, occupation, stickiness and Brownian clock at
    offset ``u`` into the ``alpha``-increment of the located steps.

    Between grid points the path is a Brownian bridge across a step that
    avoids 0; the first and last pieces of a step that visits 0 are
    first-passage bridges (norms of 3-d bridges ending or starting at 0)
    and the two sides of the zero set are reflected bridges from 0 to 0.
    ``fill(free, seg, off, seg_len, c0, c1, dim)`` returns Brownian-bridge
    values for coordinate ``dim`` of segment ``seg``.
    """
    q = _pieces(st, u, h, theta)
    piece, whole = q["piece"], ~q["pinned"]
    first, last = piece == 0, piece == 4
    middle = (piece == 1) | (piece == 3)
    passage = first | last
    seg = 5 * st.k + np.maximum(piece, 0)
    off, seg_len = q["seg_off"], q["seg_len"]
    c0 = np.where(whole, st.a, np.where(first, np.abs(st.a), 0.0))
    c1 = np.where(whole, st.b, np.where(last, np.abs(st.b), 0.0))
    x0 = fill(whole | middle | passage, seg, off, seg_len, c0, c1, 0)
    zeros = np.zeros_like(c0)
    x1 = fill(passage, seg, off, seg_len, zeros, zeros, 1)
    x2 = fill(passage, seg, off, seg_len, zeros, zeros, 2)
    radius = np.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    side = np.where(piece == 1, st.pos_first, ~st.pos_first)
    x = np.select(
        [whole, first, last, middle],
        [x0, np.where(st.a >= 0, radius, -radius), np.where(st.b >= 0, radius, -radius), np.where(side, 1.0, -1.0) * np.abs(x0)],
        0.0,
    )
    x = x + 0.0  # no signed zeros at the sticky point
    return x, l_before + q["l_part"], pos_before + q["g_part"], q["sticky"], q["bm_time"]


def _invert(grid: TimeChangeGrid, times: np.ndarray, gen: np.random.Generator):
    """Read ``(X, L, Gamma, sticky, A)`` of the OSBM at sorted times."""
    k, u = grid.locate(times)
    lay_pos = grid.d1 * (grid.b_values[:-1] >= 0) + grid.e_pos + grid.sticky + grid.d2 * (grid.b_values[1:] >= 0)
    l_cum = np.concatenate([[0.0], np.cumsum(grid.dl)])
    pos_cum = np.concatenate([[0.0], np.cumsum(lay_pos)])

    def fill(free, seg, off, seg_len, c0, c1, dim):
        x = np.zeros(len(seg))
        if free.any():
            x[free] = _bridge_fill(seg[free], off[free], seg_len[free], c0[free], c1[free], gen)
        return x

    return _readout(grid.steps(k), u, grid.bm_dt, l_cum[k], pos_cum[k], grid.theta, fill)


def _bridge_fill(seg, s, seg_len, c0, c1, gen):
    """Joint Brownian-bridge values at offsets ``s`` within segments.

    Points are ordered in time; consecutive points in one segment are
    sampled jointly, so the filled-in path has the right covariance.
    """
    m = len(seg)
    if m == 0:
        return np.empty(0)
    new = np.ones(m, dtype=bool)
    new[1:] = seg[1:] != seg[:-1]
    prev = np.where(new, 0.0, np.concatenate([[0.0], s[:-1]]))
    xi = gen.standard_normal(m)
    incr = np.sqrt(np.maximum(s - prev, 0.0)) * xi
    cs = np.cumsum(incr)
    group = np.cumsum(new) - 1
    base = (cs - incr)[new]
    w = cs - base[group]
    last = np.ones(m, dtype=bool)
    last[:-1] = seg[1:] != seg[:-1]
    tail = np.sqrt(np.maximum(seg_len[last] - s[last], 0.0)) * gen.standard_normal(int(last.sum()))
    w_end = (w[last] + tail)[group]
    frac = np.divide(s, seg_len, out=np.zeros(m), where=seg_len > 0)
    return c0 + (c1 - c0) * frac + w - frac * w_end


def _block_size(cfg: SimConfig, p: OsbmParams) -> int:
    # alpha grows at rate >= 1/max(sigma)^2 in Brownian time, so eight
    # blocks of this size always reach t_max; most paths need far fewer.
    smax2 = max(p.sigma_plus, p.sigma_minus) ** 2
    return max(32, int(math.ceil(smax2 * cfg.t_max / (8.0 * cfg.dt))) + 1)


def _cover(cfg: SimConfig, p: OsbmParams, gens, horizon: float):
    """Grow Brownian rows until every row's ``alpha`` passes ``horizon``."""
    src = _BrownianRows(cfg, p, gens, _block_size(cfg, p))
    need = np.ones(len(src.gens), dtype=bool)
    while need.any():
        end = src.extend(need)
        if cfg.local_time == "downcrossing":
            # local time depends on the whole row; recompute alpha from scratch
            out = src.finish()
            alpha = _alpha_from(out["b"], out["dl"], cfg.dt, p)
            end = alpha[np.arange(len(need)), np.sum(~np.isnan(out["b"]), axis=1) - 1]
        need = end <= horizon
    return src.finish()


def _alpha_from(b, dl, h, p):
    drawn = ~np.isnan(b)
    lay = _layout(np.nan_to_num(b), dl, p, midpoint_structure(dl.shape, h), drawn=drawn[:, 1:])
    alpha = np.zeros(b.shape)
    np.cumsum(lay["inc"], axis=1, out=alpha[:, 1:])
    alpha[~drawn] = np.inf
    return alpha


def _timechange_at(cfg: SimConfig, p: OsbmParams, times: np.ndarray, rng: RngSpec):
    g_bm, g_fill, g_struct = rng.substreams(3)
    out = _cover(cfg, p, [(g_bm, g_struct)], float(times[-1]))
    st = Structure(*(v[0] for v in out["structure"]))
    grid = _grid(out["b"][0], out["dl"][0], cfg.dt, p, st)
    return _invert(grid, times, g_fill)


def simulate_osbm(cfg: SimConfig, p: OsbmParams) -> PathRecord:
    """OSBM path on the grid ``k * dt``, ``k = 0..n``, by inverting ``alpha``.

    ``a_values`` holds the Brownian clock ``A_t``.  ``sticky_flags`` marks
    grid times that fall inside a sticky stretch, and the start when it is 0.
    """
    times = np.arange(cfg.n_steps + 1) * cfg.dt
    x, l, g, sticky, a = _timechange_at(cfg, p, times, cfg.rng)
    sticky = sticky | (x == 0.0)
    meta = {**cfg.meta(), "engine": "timechange"}
    return PathRecord(cfg.dt, x, l, np.minimum(g, times), sticky, a_values=a, meta=meta)



# --------------------------------------------------------------------------
# Euler scheme


def _euler_block(p: OsbmParams, x0: float, dt: float, n: int, draws, record: bool):
    """Vectorised Euler scheme over a block of paths.

    ``draws`` is a list of ``(xi, u, v, zeta)`` arrays of length ``n``, one per path.
    """
    xi = np.stack([d[0] for d in draws])
    uu = np.stack([d[1] for d in draws])
    vv = np.stack([d[2] for d in draws])
    ze = np.stack([d[3] for d in draws])
    m = xi.shape[0]
    sp, sm = p.sigma_plus, p.sigma_minus
    rdt = math.sqrt(dt)
    q_raw = p.r * p.theta * math.sqrt(0.5 * math.pi * dt)
    q = min(1.0, q_raw)
    keep = min(1.0, 1.0 / q_raw)
    p_up = sm / (sp + sm)
    x = np.full(m, x0)
    at0_time = np.zeros(m)
    pos_time = np.zeros(m)
    qv = np.zeros(m)
    if record:
        xs = np.empty((m, n + 1))
        h0 = np.empty((m, n + 1))
        gs = np.empty((m, n + 1))
        aa = np.empty((m, n + 1))
        xs[:, 0], h0[:, 0], gs[:, 0], aa[:, 0] = x, 0.0, 0.0, 0.0
    for k in range(n):
        z, u, v = xi[:, k], uu[:, k], vv[:, k]
        at0 = x == 0.0
        sig = np.where(x > 0, sp, sm)
        y = x + sig * rdt * z
        with np.errstate(over="ignore"):
            p_cross = np.where(x * y <= 0, 1.0, np.exp(-2.0 * x * y / (sig * sig * dt)))
        # u / p_cross is a fresh uniform once a crossing is detected
        bounce = np.where(v < p_up, sp * rdt * np.abs(ze[:, k]), -sm * rdt * np.abs(ze[:, k]))
        moved = np.where(u < p_cross, np.where(u < p_cross * keep, 0.0, bounce), y)
        jump = np.where(v < p_up, sp * rdt * np.abs(z), -sm * rdt * np.abs(z))
        left = np.where(u < q, jump, 0.0)
        pos_time += dt * (x >= 0)
        at0_time += dt * at0
        qv += dt * np.where(at0, 0.0, sig * sig)
        x = np.where(at0, left, moved)
        if record:
            xs[:, k + 1], h0[:, k + 1], gs[:, k + 1], aa[:, k + 1] = x, at0_time, pos_time, qv
    if record:
        return xs, h0, gs, aa
    return x, at0_time, pos_time, qv


def _euler_draws(rng: RngSpec, n: int):
    gen = rng.substreams(2)[0]
    return gen.standard_normal(n), gen.random(n), gen.random(n), gen.standard_normal(n)


def simulate_osbm_euler(cfg: SimConfig, p: OsbmParams) -> PathRecord:
    """OSBM path from the Euler discretisation of the sticky SDE.

    The local time is ``theta`` times the time spent at 0 and ``a_values``
    accumulates ``sigma(X)^2 dt`` off 0.
    """
    n = cfg.n_steps
    xs, h0, gs, aa = _euler_block(p, cfg.x0, cfg.dt, n, [_euler_draws(cfg.rng, n)], record=True)
    meta = {**cfg.meta(), "engine": "euler"}
    return PathRecord(cfg.dt, xs[0], p.theta * h0[0], gs[0], xs[0] == 0.0, a_values=aa[0], meta=meta)


# --------------------------------------------------------------------------
# read-out and batches


def path_statistics(path: PathRecord, t: float):
    """``(x_t, l_t, gamma_t, sticky)`` read off the grid, linearly interpolated.

    Between grid points the sticky classification requires both neighbours
    to be flagged.
    """
    t = float(t)
    horizon = path.horizon
    if not (0.0 <= t <= horizon * (1 + 1e-12)):
        raise HorizonExceeded(f"t={t!r} outside [0, {horizon!r}]")
    pos = min(t / path.dt, path.n_steps)
    k = min(int(math.floor(pos)), path.n_steps)
    w = pos - k
    if w <= 1e-9 or k == path.n_steps:
        return (
            float(path.x_values[k]),
            float(path.l_values[k]),
            float(path.gamma_values[k]),
            bool(path.sticky_flags[k]),
        )

    def lerp(v):
        return float((1 - w) * v[k] + w * v[k + 1])

    sticky = bool(path.sticky_flags[k] and path.sticky_flags[k + 1])
    return lerp(path.x_values), lerp(path.l_values), lerp(path.gamma_values), sticky


@dataclass(frozen=True)
class TerminalSample:
    """Per-path values at the horizon ``t`` of a batch.

    ``sticky_time`` is the time spent at 0 up to ``t`` and ``a`` the
    quadratic-variation clock ``A_t``.
    """

    t: float
    x: np.ndarray
    l: np.ndarray
    gamma: np.ndarray
    sticky: np.ndarray
    sticky_time: np.ndarray
    a: np.ndarray
    engine: str

    def __len__(self) -> int:
        return len(self.x)


def _timechange_chunk(cfg, p, t, streams):
    """Terminal values for a block of paths, vectorised across paths.

    Brownian blocks and excursion structures are drawn exactly as in
    :func:`simulate_osbm`, so local time, occupation, stickiness and ``A_t``
    agree with that path; the position is filled from six fresh bridge
    normals instead of the joint fill of a whole grid.  Only running totals
    are kept: each row is finished inside the block where ``alpha`` passes
    ``t``.
    """
    subs = [cfg.rng.child(idx).substreams(3) for idx in streams]
    m = len(subs)
    nb = _block_size(cfg, p)
    dt, th = cfg.dt, p.theta
    root = math.sqrt(dt)
    last_b = np.full(m, cfg.x0)
    last_alpha = np.zeros(m)
    l_cum = np.zeros(m)
    pos_cum = np.zeros(m)
    out = np.empty((m, 6))
    active = np.arange(m)
    steps = 0
    while active.size:
        steps += nb
        if steps > cfg.max_bm_steps:
            raise GridExhausted(f"more than {cfg.max_bm_steps} Brownian steps needed")
        z = np.stack([subs[j][0].standard_normal(nb) for j in active])
        b = np.empty((active.size, nb + 1))
        b[:, 0] = last_b[active]
        b[:, 1:] = z * root
        b[:, 1:] = b[:, :1] + np.cumsum(b[:, 1:], axis=1)
        a_, b_ = b[:, :-1], b[:, 1:]
        if cfg.local_time == "bridge":
            dl = np.zeros(a_.shape)
            live = a_ * b_ < 0.5 * dt * _MAX_EXP_DRAW
            u = np.concatenate([subs[j][0].random(int(c)) for j, c in zip(active, live.sum(axis=1))])
            aa, bb = a_[live], b_[live]
            span = np.sqrt((bb - aa) ** 2 - 2.0 * dt * np.log1p(-u))
            dl[live] = np.maximum(0.0, span - np.abs(aa) - np.abs(bb))
            st = draw_structure(a_, b_, dl, dt, [subs[j][2] for j in active])
        elif cfg.local_time == "occupation":
            dl = (dt / (2.0 * cfg.zero_band)) * (np.abs(a_) < cfg.zero_band)
            st = midpoint_structure(a_.shape, dt)
        else:
            raise ParameterError("the downcrossing estimator is path-dependent; use simulate_osbm")
        lay = _layout(b, dl, p, st)
        alpha = last_alpha[active, None] + np.cumsum(lay["inc"], axis=1)
        done = alpha[:, -1] > t
        if done.any():
            r = np.flatnonzero(done)
            k = np.count_nonzero(alpha[r] <= t, axis=1)
            start = np.where(k > 0, alpha[r, np.maximum(k - 1, 0)], last_alpha[active[r]])
            cols = np.arange(nb)[None, :] < k[:, None]
            l_before = l_cum[active[r]] + np.sum(np.where(cols, dl[r], 0.0), axis=1)
            p_before = pos_cum[active[r]] + np.sum(np.where(cols, lay["pos"][r], 0.0), axis=1)
            xi = np.array([subs[active[j]][1].standard_normal(6) for j in r]).reshape(len(r), 6)

            def fill(free, seg, off, seg_len, c0, c1, dim):
                w = np.sqrt(off) * xi[:, 2 * dim]
                w_end = w + np.sqrt(np.maximum(seg_len - off, 0.0)) * xi[:, 2 * dim + 1]
                frac = np.divide(off, seg_len, out=np.zeros(len(off)), where=seg_len > 0)
                return np.where(free, c0 + (c1 - c0) * frac + w - frac * w_end, 0.0)

            at = (r, k)
            located = _steps(
                k, b[r, k], b[r, k + 1], lay["d1"][at], lay["e_pos"][at], lay["e_neg"][at], lay["s"][at],
                lay["d2"][at], Structure(*(v[at] for v in st)), dl[at],
            )
            x, l, g, sticky, a = _readout(located, t - start, dt, l_before, p_before, th, fill)
            a = a + (steps - nb) * dt  # block offset of the Brownian clock
            out[active[r]] = np.column_stack([x, l, np.minimum(g, t), sticky.astype(float), l / th, a])
        keep = ~done
        idx = active[keep]
        last_b[idx] = b[keep, -1]
        last_alpha[idx] = alpha[keep, -1]
        l_cum[idx] += dl[keep].sum(axis=1)
        pos_cum[idx] += lay["pos"][keep].sum(axis=1)
        active = idx
    return out


def _euler_chunk(cfg, p, t, streams):
    n = int(round(t / cfg.dt))
    draws = [_euler_draws(cfg.rng.child(idx), n) for idx in streams]
    x, h0, g, a = _euler_block(p, cfg.x0, cfg.dt, n, draws, record=False)
    return np.column_stack([x, p.theta * h0, g, (x == 0.0).astype(float), h0, a])


def sample_terminal(
    cfg: SimConfig,
    p: OsbmParams,
    n_paths: int,
    *,
    t: float | None = None,
    engine: str = "timechange",
    threads: int | None = None,
) -> TerminalSample:
    """Terminal statistics of ``n_paths`` independent paths.

    Path ``i`` draws only from stream ``cfg.rng.stream_index + i``, paths are
    processed in fixed chunks and chunk results are stitched in
    order, so the output does not depend on the number of worker threads
    (``OSBM_THREADS``).
    """
    if engine not in ENGINES:
        raise ParameterError(f"unknown engine {engine!r}")
    t = cfg.t_max if t is None else float(t)
    if not 0 < t <= cfg.t_max * (1 + 1e-12):
        raise HorizonExceeded(f"t={t!r} outside (0, {cfg.t_max!r}]")
    n_paths = int(n_paths)
    if n_paths < 0:
        raise NonPositiveParameter("n_paths", n_paths)
    base = cfg.rng.stream_index
    size = CHUNK if engine == "timechange" else EULER_CHUNK
    chunks = [range(base + i, base + min(i + size, n_paths)) for i in range(0, n_paths, size)]
    work = _timechange_chunk if engine == "timechange" else _euler_chunk
    threads = worker_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(chunks) <= 1:
        parts = [work(cfg, p, t, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: work(cfg, p, t, c), chunks))
    data = np.concatenate(parts) if parts else np.empty((0, 6))
    return TerminalSample(
        t=t,
        x=data[:, 0],
        l=data[:, 1],
        gamma=data[:, 2],
        sticky=data[:, 3].astype(bool),
        sticky_time=data[:, 4],
        a=data[:, 5],
        engine=engine,
    )


def path_to_csv(path: PathRecord) -> str:
    """CSV text with header ``t,x,l,gamma,sticky`` and shortest round-trip floats."""
    buf = io.StringIO()
    buf.write("t,x,l,gamma,sticky\n")
    t = path.t_values
    for k in range(len(t)):
        buf.write(
            f"{float(t[k])!r},{float(path.x_values[k])!r},{float(path.l_values[k])!r},"
            f"{float(path.gamma_values[k])!r},{int(bool(path.sticky_flags[k]))}\n"
        )
    return buf.getvalue()


def with_horizon(cfg: SimConfig, t_max: float) -> SimConfig:
    """Copy of ``cfg`` with another horizon."""
    return replace(cfg, t_max=t_max)
