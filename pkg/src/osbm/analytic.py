"""Elementary densities and special functions behind the OSBM formulas.

All evaluators accept scalars or numpy arrays and broadcast.  Quadrature is
delegated to QUADPACK (``scipy.integrate.quad``, adaptive Gauss-Kronrod with
bisection) behind :func:`quad_checked`, which turns an unconverged result
into :class:`~osbm.errors.QuadratureNonConvergence`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import integrate, special

from .core import OsbmParams
from .errors import (
    NegativeLevel,
    NonPositiveLambda,
    NonPositiveTime,
    QuadratureNonConvergence,
)

__all__ = [
    "LaplaceQuery",
    "gauss_kernel",
    "erfc_eval",
    "h_eval",
    "h_laplace",
    "g_eval",
    "g_printed",
    "p0_eval",
    "laplace_numeric",
    "quad_checked",
    "convolve_h",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
MAX_EVALUATIONS = 1_000_000
# e^{-x} underflows to 0 in double precision beyond this.
_EXP_UNDERFLOW = 745.0


def _scalar_or_array(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


def _positive_time(s, exc=NonPositiveTime):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise exc(s if s.ndim == 0 else s[~(s > 0)].ravel()[0])
    return s


def _positive_lambda(lam) -> float:
    lam = float(lam)
    if not lam > 0 or not math.isfinite(lam):
        raise NonPositiveLambda(lam)
    return lam


@dataclass(frozen=True)
class LaplaceQuery:
    """Transform variable ``lam`` with ``gamma = sqrt(2 lam)`` and
    ``rho = lam + gamma * r * theta``."""

    lam: float
    params: OsbmParams
    gamma: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self) -> None:
        lam = _positive_lambda(self.lam)
        gamma = math.sqrt(2.0 * lam)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "rho", lam + gamma * self.params.r * self.params.theta)


def gauss_kernel(s, x, y):
    """Brownian transition density ``(2 pi s)^(-1/2) exp(-(y-x)^2 / 2s)``."""
    s = _positive_time(s)
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-d * d / (2.0 * s)) / np.sqrt(2.0 * np.pi * s))


def erfc_eval(z):
    """Complementary error function (``scipy.special.erfc``)."""
    return _scalar_or_array(special.erfc(np.asarray(z, dtype=float)))


def h_eval(s, z):
    """First-passage density of standard Brownian motion to level ``z >= 0``.

    ``h(s, z) = z / (sqrt(2 pi) s^(3/2)) exp(-z^2 / 2s)``.
    """
    s = _positive_time(s)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise NegativeLevel(z if z.ndim == 0 else z[z < 0].ravel()[0])
    return _scalar_or_array(z / (SQRT_2PI * s**1.5) * np.exp(-z * z / (2.0 * s)))


def h_laplace(lam, x, p: OsbmParams):
    """``E^x exp(-lam T_0)`` for the first hitting time of 0.

    Decays in ``|x|`` on both sides: ``exp(-sqrt(2 lam) |x| / sigma_-)`` for
    ``x < 0`` and ``exp(-sqrt(2 lam) x / sigma_+)`` for ``x >= 0``.
    """
    lam = _positive_lambda(lam)
    x = np.asarray(x, dtype=float)
    scaled = np.where(x < 0, -x / p.sigma_minus, x / p.sigma_plus)
    return _scalar_or_array(np.exp(-math.sqrt(2.0 * lam) * scaled))


def g_eval(s, z, p: OsbmParams):
    """Sticky factor ``g(s, z)``.

    Defined by ``int_0^inf e^{-lam s} g(s, z) ds = theta e^{-gamma z} / rho``
    for ``z >= 0``; in closed form

        g(s, z) = theta exp(2 r theta z + 2 r^2 theta^2 s) erfc(u),
        u = z / sqrt(2 s) + r theta sqrt(2 s).

    Since ``u^2 = z^2/2s + 2 r theta z + 2 r^2 theta^2 s`` this equals
    ``theta exp(-z^2 / 2s) erfcx(u)``, which never forms ``inf * 0``.
    """
    s = _positive_time(s)
    z = np.asarray(z, dtype=float)
    rt = p.r * p.theta
    root = np.sqrt(2.0 * s)
    u = z / root + rt * root
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = p.theta * np.exp(-z * z / (2.0 * s)) * special.erfcx(u)
        # erfcx overflows for u << 0; there erfc(u) ~ 2 and the direct form is safe.
        direct = p.theta * np.exp(2.0 * rt * z + 2.0 * rt * rt * s) * special.erfc(u)
    return _scalar_or_array(np.where(u > -20.0, scaled, direct))


def g_printed(s, z, p: OsbmParams):
    """The sticky factor with the exponent ``theta^2 r s`` exactly as printed.

    Kept only so that verification can show it fails the Laplace identity.
    """
    s = _positive_time(s)
    z = np.asarray(z, dtype=float)
    rt = p.r * p.theta
    root = np.sqrt(2.0 * s)
    u = z / root + rt * root
    with np.errstate(over="ignore", invalid="ignore"):
        v = p.theta * np.exp(2.0 * rt * z + p.theta**2 * p.r * s - u * u) * special.erfcx(u)
    return _scalar_or_array(v)


def p0_eval(t, x, y, p: OsbmParams, *, reflection_sign: float = -1.0):
    """Density of the diffusion killed at its first visit to 0.

    ``p(t sigma^2, x, y) - p(t sigma^2, x, -y)`` when ``x, y`` are strictly on
    the same side of 0 (``sigma`` the scale of that side), 0 otherwise.
    ``reflection_sign=+1`` reproduces the printed sum, used only to
    adjudicate the sign.
    """
    t = _positive_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    var = t * np.where(x < 0, p.sigma_minus, p.sigma_plus) ** 2
    same = ((x > 0) & (y > 0)) | ((x < 0) & (y < 0))
    norm = 1.0 / np.sqrt(2.0 * np.pi * var)
    val = norm * (np.exp(-(y - x) ** 2 / (2.0 * var)) + reflection_sign * np.exp(-(y + x) ** 2 / (2.0 * var)))
    return _scalar_or_array(np.where(same, val, 0.0))


def quad_checked(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    *,
    points: Iterable[float] | None = None,
    rel_tol: float = 1e-12,
    limit: int = 2000,
) -> float:
    """``int_a^b f`` by adaptive Gauss-Kronrod quadrature.

    An infinite upper limit is mapped to ``[0, 1)`` by ``s = a + u / (1 - u)``.
    The result is accepted when QUADPACK converges or its error estimate is
    within ``tol``; otherwise :class:`QuadratureNonConvergence` carries the
    best estimate.
    """
    if a == b:
        return 0.0
    if math.isinf(b):
        if b < 0:
            raise ValueError("only [a, +inf) half-lines are supported")

        def mapped(u: float) -> float:
            if u >= 1.0:
                return 0.0
            w = 1.0 - u
            return f(a + u / w) / (w * w)

        g, lo, hi = mapped, 0.0, 1.0
        if points is not None:
            points = [(q - a) / (1.0 + q - a) for q in points if a < q < math.inf]
    else:
        g, lo, hi = f, a, b
        if points is not None:
            points = [q for q in points if lo < q < hi]
    if points:
        points = sorted(set(points))
    else:
        points = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(
            g,
            lo,
            hi,
            epsabs=tol,
            epsrel=rel_tol,
            limit=limit,
            points=points,
            full_output=1,
        )
    value, err, info = out[0], out[1], out[2]
    ier = 0 if len(out) == 3 else 1
    if info.get("neval", 0) > MAX_EVALUATIONS or (ier and not err <= tol) or not math.isfinite(value):
        raise QuadratureNonConvergence(value, err, out[3] if len(out) > 3 else "")
    return float(value)


def laplace_numeric(f: Callable[[float], float], lam: float, tol: float = 1e-10) -> float:
    """``int_0^inf e^{-lam s} f(s) ds`` by adaptive quadrature.

    The substitution ``s = u^2`` absorbs integrable ``s^(-1/2)`` endpoint
    singularities before the half-line is mapped onto ``[0, 1)``.
    """
    lam = _positive_lambda(lam)

    def integrand(u: float) -> float:
        s = u * u
        if lam * s > _EXP_UNDERFLOW:
            return 0.0
        if s == 0.0:
            return 0.0
        return 2.0 * u * math.exp(-lam * s) * float(f(s))

    # Split where the damping has done most of its work; helps the mapping.
    knee = math.sqrt(1.0 / lam)
    return quad_checked(integrand, 0.0, math.inf, tol, points=[knee, 4.0 * knee])


def convolve_h(t: float, z1: float, z2: float, tol: float = 1e-12) -> float:
    """``int_0^t h(t - s, z1) h(s, z2) ds`` by quadrature."""
    if not t > 0:
        raise NonPositiveTime(t)

    def f(s: float) -> float:
        if s <= 0.0 or s >= t:
            return 0.0
        return float(h_eval(t - s, z1) * h_eval(s, z2))

    return quad_checked(f, 0.0, t, tol, points=[t / 2.0])
