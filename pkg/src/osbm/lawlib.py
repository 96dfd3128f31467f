"""Joint laws of position, local time and occupation time.

Densities return 0 outside their support instead of raising; the sticky
event ``X_t = 0`` is never folded into a density value and is reported as a
separate atom where it matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import SQRT_2PI, _scalar_or_array, p0_eval, quad_checked
from .core import OsbmParams
from .errors import NonPositiveHorizon, QuadratureNonConvergence

__all__ = [
    "TriQuery",
    "JointValue",
    "trivariate_density",
    "phi",
    "joint_position_localtime",
    "joint_density",
    "localtime_density",
    "localtime_occupation_density",
    "occupation_density",
    "mirror_triplet",
    "trivariate_mass",
]


def _horizon(t) -> float:
    t = float(t)
    if not t > 0:
        raise NonPositiveHorizon(t)
    return t


def _h(s, z):
    """First-passage density, extended by 0 to ``s <= 0`` and ``z <= 0``."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    ok = (s > 0) & (z > 0)
    ss = np.where(ok, s, 1.0)
    zz = np.where(ok, z, 0.0)
    return np.where(ok, zz / (SQRT_2PI * ss**1.5) * np.exp(-zz * zz / (2.0 * ss)), 0.0)


@dataclass(frozen=True)
class TriQuery:
    """Point ``(y, l, tau)`` of the law of ``(X_t, L_t, Gamma_t)`` from ``x``."""

    t: float
    x: float
    y: float
    l: float
    tau: float


def phi(t, x, y, l, tau, p: OsbmParams, *, negative_start: str = "strong_markov"):
    """Vectorised joint density of ``(X_t, L_t, Gamma_t)`` started at ``x``.

    Nonzero only on ``0 < l/theta <= tau <= t``, ``y != 0``.  For ``x < 0``
    the first passage to 0 is spent on the negative half-line, so the
    shift ``-x/sigma_-`` enters the ``t - tau`` factor (the default).  With
    ``negative_start="printed"`` it enters the ``tau - l/theta`` factor
    instead; both agree at ``x = 0`` and after integrating out ``tau``.
    """
    t = _horizon(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    l = np.asarray(l, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sp, sm, th = p.sigma_plus, p.sigma_minus, p.theta
    neg_time = t - tau
    pos_time = tau - l / th
    xp = np.maximum(x, 0.0) / sp  # passage spent on the positive side
    xm = np.maximum(-x, 0.0) / sm  # passage spent on the negative side
    if negative_start == "printed":
        xp, xm = xp + xm, 0.0 * xm
    elif negative_start != "strong_markov":
        raise ValueError(f"unknown negative_start variant {negative_start!r}")
    pos_y = (_h(neg_time, l / (2 * sm) + xm) * _h(pos_time, (l / 2 + y) / sp + xp)) / sp**2
    neg_y = (_h(neg_time, (l / 2 - y) / sm + xm) * _h(pos_time, l / (2 * sp) + xp)) / sm**2
    val = np.where(y > 0, pos_y, np.where(y < 0, neg_y, 0.0))
    support = (l > 0) & (l / th <= tau) & (tau <= t)
    return _scalar_or_array(np.where(support, val, 0.0))


def trivariate_density(q: TriQuery, p: OsbmParams) -> float:
    """``phi(t, x, y, l, tau)`` for a single query."""
    return float(phi(q.t, q.x, q.y, q.l, q.tau, p))


@dataclass(frozen=True)
class JointValue:
    """``P^x(X_t in dy, L_t in dl)``: density for ``l > 0`` and the density in
    ``y`` of the ``l = 0`` atom (paths that never reached 0)."""

    density: float
    atom_at_l0: float


def joint_density(t, x, y, l, p: OsbmParams):
    """Vectorised density part of the joint law of ``(X_t, L_t)``, ``0 < l < theta t``."""
    t = _horizon(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    l = np.asarray(l, dtype=float)
    sp, sm, th, r = p.sigma_plus, p.sigma_minus, p.theta, p.r
    shift = np.where(x >= 0, x / sp, -x / sm)
    s = t - l / th
    pos = _h(s, l * r + shift + y / sp) / sp**2
    neg = _h(s, l * r + shift - y / sm) / sm**2
    val = np.where(y > 0, pos, np.where(y < 0, neg, 0.0))
    return _scalar_or_array(np.where((l > 0) & (l < th * t), val, 0.0))


def joint_position_localtime(t: float, x: float, y: float, l: float, p: OsbmParams) -> JointValue:
    t = _horizon(t)
    dens = float(joint_density(t, x, y, l, p)) if l > 0 else 0.0
    atom = float(p0_eval(t, x, y, p))
    return JointValue(dens, atom)


def localtime_density(t, l, p: OsbmParams):
    """Density of ``L_t`` from 0 on ``0 < l < theta t``.

    It integrates to ``1 - P^0(X_t = 0)``: it is the law of ``L_t`` restricted
    to ``{X_t != 0}``.
    """
    t = _horizon(t)
    l = np.asarray(l, dtype=float)
    s = t - l / p.theta
    ok = (l > 0) & (s > 0)
    ss = np.where(ok, s, 1.0)
    val = 2.0 * p.r / np.sqrt(2.0 * np.pi * ss) * np.exp(-((l * p.r) ** 2) / (2.0 * ss))
    return _scalar_or_array(np.where(ok, val, 0.0))


def localtime_occupation_density(t, l, tau, p: OsbmParams):
    """Density of ``(L_t, Gamma_t)`` from 0 on ``{X_t != 0}`` (``y`` integrated out)."""
    t = _horizon(t)
    l = np.asarray(l, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sp, sm, th = p.sigma_plus, p.sigma_minus, p.theta
    a = t - tau
    b = tau - l / th
    ok = (l > 0) & (a > 0) & (b > 0)
    aa = np.where(ok, a, 1.0)
    bb = np.where(ok, b, 1.0)
    pos = _h(aa, l / (2 * sm)) * np.exp(-((l / (2 * sp)) ** 2) / (2 * bb)) / (sp * np.sqrt(2 * np.pi * bb))
    neg = _h(bb, l / (2 * sp)) * np.exp(-((l / (2 * sm)) ** 2) / (2 * aa)) / (sm * np.sqrt(2 * np.pi * aa))
    return _scalar_or_array(np.where(ok, pos + neg, 0.0))


def occupation_density(t: float, tau: float, p: OsbmParams, *, form: str = "derived", tol: float = 1e-8) -> float:
    """Density of ``Gamma_t`` from 0 at ``tau``, restricted to ``{X_t != 0}``.

    ``form="derived"`` integrates the occupation/local-time density obtained
    from the trivariate law; ``form="printed"`` carries the additional
    factors ``1/sigma_+`` and ``1/sigma_-`` on the two terms of the integrand
    as printed (identical when both scales are 1).  The variable
    ``u = l/theta`` runs over ``(0, tau)`` and is substituted by
    ``u = tau - w^2`` so that the ``(tau - u)^(-3/2)`` factor becomes bounded.
    """
    t = _horizon(t)
    tau = float(tau)
    if not 0.0 < tau < t:
        return 0.0
    sp, sm, th = p.sigma_plus, p.sigma_minus, p.theta
    if form == "derived":
        c1 = c2 = 1.0
    elif form == "printed":
        c1, c2 = 1.0 / sp, 1.0 / sm
    else:
        raise ValueError(f"unknown form {form!r}")
    a = t - tau
    pref = th * th / (4.0 * math.pi * sp * sm)

    def integrand(w: float) -> float:
        if w <= 0.0:
            return 0.0
        u = tau - w * w
        if u <= 0.0:
            return 0.0
        e = (th * u) ** 2 * (1.0 / (8.0 * sp * sp * w * w) + 1.0 / (8.0 * sm * sm * a))
        if e > 745.0:
            return 0.0
        return u * (2.0 * c1 * a**-1.5 + 2.0 * c2 * a**-0.5 / (w * w)) * math.exp(-e)

    root = math.sqrt(tau)
    knee = min(root, th * tau / (2.0 * sp))
    pts = [q for q in (0.5 * knee, knee, 2.0 * knee) if 0.0 < q < root]
    return pref * quad_checked(integrand, 0.0, root, tol / max(pref, 1e-300), points=pts)


def mirror_triplet(sample, t: float, p: OsbmParams):
    """``(y, l, gamma) -> (-y, l, t - gamma + l/theta)``.

    Maps statistics of an OSBM with the two scales exchanged, started at 0,
    to statistics with the same law as those of the OSBM with parameters
    ``p``.  Only ``theta`` enters; applying the map twice is the identity.
    """
    y, l, g = (np.asarray(v, dtype=float) for v in sample)
    return (
        _scalar_or_array(-y),
        _scalar_or_array(l),
        _scalar_or_array(t - g + l / p.theta),
    )


def _tensor_mass(t: float, x: float, p: OsbmParams, n: int) -> float:
    th = p.theta
    xg, wg = np.polynomial.legendre.leggauss(n)
    # l = theta t sin^2(a), tau = l/theta + (t - l/theta) sin^2(b); both
    # substitutions absorb the inverse square-root endpoint behaviour.
    half = 0.25 * math.pi
    a = half * (xg + 1.0)
    wa = half * wg
    va = 6.0 * (xg + 1.0)  # y in units of its natural spread, truncated at 12
    wv = 6.0 * wg
    A, B, V = np.meshgrid(a, a, va, indexing="ij")
    W = wa[:, None, None] * wa[None, :, None] * wv[None, None, :]
    l = th * t * np.sin(A) ** 2
    jl = 2.0 * th * t * np.sin(A) * np.cos(A)
    lo = l / th
    span = t - lo
    tau = lo + span * np.sin(B) ** 2
    jt = 2.0 * span * np.sin(B) * np.cos(B)
    pos_spread = p.sigma_plus * np.sqrt(np.maximum(tau - lo, 1e-300))
    neg_spread = p.sigma_minus * np.sqrt(np.maximum(t - tau, 1e-300))
    f_pos = np.asarray(phi(t, x, pos_spread * V, l, tau, p)) * pos_spread
    f_neg = np.asarray(phi(t, x, -neg_spread * V, l, tau, p)) * neg_spread
    return float(np.sum(W * jl * jt * (f_pos + f_neg)))


def trivariate_mass(t: float, x: float, p: OsbmParams, tol: float = 1e-5, order: int = 64) -> float:
    """``int int int phi dy dl dtau`` by tensor Gauss-Legendre quadrature.

    Each coordinate is mapped so that the integrand is smooth; the rule is
    accepted when doubling its order changes the result by at most ``tol``.
    """
    t = _horizon(t)
    coarse = _tensor_mass(t, float(x), p, order)
    fine = _tensor_mass(t, float(x), p, 2 * order)
    if not abs(fine - coarse) <= tol:
        raise QuadratureNonConvergence(fine, abs(fine - coarse), "tensor rule did not settle")
    return fine
