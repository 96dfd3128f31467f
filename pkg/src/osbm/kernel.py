"""One-time-slice laws of the OSBM: transition kernel and resolvents.

Every law is a :class:`KernelValue`: a Lebesgue density in ``y`` plus a
point mass at 0.  Transition kernels carry total mass 1, resolvents ``1/lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .analytic import (
    LaplaceQuery,
    _positive_lambda,
    _positive_time,
    _scalar_or_array,
    g_eval,
    h_laplace,
    p0_eval,
    quad_checked,
)
from .core import OsbmParams
from .errors import NonPositiveLambda, NonPositiveTime

__all__ = [
    "KernelValue",
    "transition_kernel",
    "killed_resolvent",
    "resolvent",
    "resolvent_at_zero",
    "exit_prob_at_T",
    "transition_density",
]


@dataclass(frozen=True)
class KernelValue:
    """Density over ``y`` plus an atom at 0.

    ``scale`` is a length scale for the spread of the density and ``centre``
    the start point; both only guide quadrature.
    """

    density: Callable[[np.ndarray], np.ndarray]
    atom_at_zero: float
    expected_mass: float = 1.0
    centre: float = 0.0
    scale: float = 1.0
    _cdf_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _half_mass(self, side: int, tol: float) -> float:
        f = lambda u: float(self.density(side * u))
        kinks = [abs(self.centre)] if self.centre * side > 0 else []
        kinks += [abs(self.centre) + k * self.scale for k in (1.0, 4.0, 12.0)]
        return quad_checked(f, 0.0, math.inf, tol, points=kinks)

    def density_mass(self, tol: float = 1e-11) -> float:
        """``int density dy`` over ``y != 0``."""
        return self._half_mass(-1, tol) + self._half_mass(+1, tol)

    def total_mass(self, tol: float = 1e-11) -> float:
        return self.density_mass(tol) + self.atom_at_zero

    def cdf(self, y) -> np.ndarray | float:
        """Mixed CDF ``P(Y <= y)`` with the atom folded in as a jump at 0.

        Built once per kernel: cumulative Gauss-Legendre integrals on a fine
        node grid on each half-line, then monotone cubic interpolation.
        """
        if "neg" not in self._cdf_cache:
            self._cdf_cache.update(self._build_cdf())
        y = np.asarray(y, dtype=float)
        neg, pos, lo_mass, reach = (
            self._cdf_cache["neg"],
            self._cdf_cache["pos"],
            self._cdf_cache["left_mass"],
            self._cdf_cache["reach"],
        )
        u = np.minimum(np.abs(y), reach)
        left = lo_mass - neg(u)  # P(Y <= y) for y < 0 is mass of (-inf, y]
        right = lo_mass + self.atom_at_zero + pos(u)
        out = np.where(y < 0, left, right)
        return _scalar_or_array(np.clip(out / self.expected_mass, 0.0, 1.0))

    def _build_cdf(self) -> dict:
        reach = abs(self.centre) + 14.0 * self.scale
        nodes = _cdf_nodes(abs(self.centre), reach, self.scale)
        xg, wg = np.polynomial.legendre.leggauss(12)
        tables = {}
        for side, key in ((-1, "neg"), (1, "pos")):
            a, b = nodes[:-1], nodes[1:]
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            pts = mid[:, None] + half[:, None] * xg[None, :]
            vals = np.asarray(self.density(side * pts), dtype=float)
            cell = (vals * wg[None, :]).sum(axis=1) * half
            cum = np.concatenate([[0.0], np.cumsum(cell)])
            tables[key] = PchipInterpolator(nodes, cum, extrapolate=True)
            tables[key + "_total"] = cum[-1]
        return {
            "neg": tables["neg"],
            "pos": tables["pos"],
            "left_mass": tables["neg_total"],
            "reach": reach,
        }


def _cdf_nodes(kink: float, reach: float, scale: float) -> np.ndarray:
    fine = np.linspace(0.0, reach, 3001)
    # geometric refinement towards 0 where the density may jump
    near = scale * np.geomspace(1e-7, 1.0, 200)
    pieces = [fine, near[near < reach]]
    if 0.0 < kink < reach:
        pieces.append(kink + scale * np.linspace(-0.05, 0.05, 41))
    nodes = np.unique(np.clip(np.concatenate(pieces), 0.0, reach))
    return nodes


def transition_density(t, x, y, p: OsbmParams, *, g=g_eval, p0_sign: float = -1.0):
    """Absolutely continuous part of ``Q_t(x, dy)``.

    Four cases: ``x >= 0, y >= 0``; ``x >= 0, y < 0``; ``x < 0, y < 0`` and
    ``x < 0, y >= 0``.  The last case pairs the coefficient
    ``sigma_+^(-2)`` with ``g(t, -x/sigma_- + y/sigma_+)``.
    """
    t = _positive_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sp, sm = p.sigma_plus, p.sigma_minus
    xp = x >= 0
    yp = y >= 0
    z = np.where(
        xp,
        np.where(yp, (x + y) / sp, x / sp - y / sm),
        np.where(yp, -x / sm + y / sp, -(x + y) / sm),
    )
    coef = np.where(yp, 1.0 / sp**2, 1.0 / sm**2)
    dens = coef * g(t, z, p) + p0_eval(t, x, y, p, reflection_sign=p0_sign)
    return _scalar_or_array(dens)


def _atom(t, x, p: OsbmParams, g=g_eval) -> float:
    z = x / p.sigma_plus if x >= 0 else -x / p.sigma_minus
    return float(g(t, z, p)) / p.theta


def transition_kernel(t: float, x: float, p: OsbmParams) -> KernelValue:
    """``Q_t(x, dy)``: density plus atom ``theta^(-1) g(t, |x|/sigma_(+/-))``."""
    if not t > 0:
        raise NonPositiveTime(t)
    t = float(t)
    x = float(x)
    return KernelValue(
        density=lambda y: transition_density(t, x, y, p),
        atom_at_zero=_atom(t, x, p),
        expected_mass=1.0,
        centre=x,
        scale=max(p.sigma_plus, p.sigma_minus) * math.sqrt(t),
    )


def killed_resolvent(lam: float, x: float, p: OsbmParams) -> KernelValue:
    """``R^0_lam(x, dy)`` of the oscillating motion killed at 0."""
    q = LaplaceQuery(lam, p)
    x = float(x)
    sig = p.sigma_minus if x < 0 else p.sigma_plus

    def density(y):
        y = np.asarray(y, dtype=float)
        same = (y > 0) if x > 0 else (y < 0) if x < 0 else np.zeros_like(y, dtype=bool)
        val = (np.exp(-q.gamma * np.abs(x - y) / sig) - np.exp(-q.gamma * (abs(x) + np.abs(y)) / sig)) / (q.gamma * sig)
        return _scalar_or_array(np.where(same, val, 0.0))

    return KernelValue(density, 0.0, expected_mass=float("nan"), centre=x, scale=sig / q.gamma)


def resolvent_at_zero(lam: float, p: OsbmParams) -> KernelValue:
    """``R_lam(0, dy)``: exponential densities on each half-line, atom ``1/rho``."""
    q = LaplaceQuery(lam, p)
    sp, sm, th = p.sigma_plus, p.sigma_minus, p.theta

    def density(y):
        y = np.asarray(y, dtype=float)
        neg = th / (sm**2 * q.rho) * np.exp(q.gamma * np.minimum(y, 0.0) / sm)
        pos = th / (sp**2 * q.rho) * np.exp(-q.gamma * np.maximum(y, 0.0) / sp)
        return _scalar_or_array(np.where(y < 0, neg, pos))

    return KernelValue(
        density,
        1.0 / q.rho,
        expected_mass=1.0 / q.lam,
        centre=0.0,
        scale=max(sp, sm) / q.gamma,
    )


def resolvent(lam: float, x: float, p: OsbmParams) -> KernelValue:
    """``R_lam(x, .) = R^0_lam(x, .) + E^x[e^{-lam T_0}] R_lam(0, .)``."""
    lam = _positive_lambda(lam)
    x = float(x)
    at_zero = resolvent_at_zero(lam, p)
    if x == 0.0:
        return at_zero
    killed = killed_resolvent(lam, x, p)
    hit = float(h_laplace(lam, x, p))

    def density(y):
        return _scalar_or_array(np.asarray(killed.density(y)) + hit * np.asarray(at_zero.density(y)))

    return KernelValue(
        density,
        hit * at_zero.atom_at_zero,
        expected_mass=1.0 / lam,
        centre=x,
        scale=max(killed.scale, at_zero.scale),
    )


def exit_prob_at_T(lam: float, p: OsbmParams) -> float:
    """``P(X_T = 0)`` from 0 at an independent exponential time of rate ``lam``."""
    q = LaplaceQuery(lam, p)
    return q.lam / q.rho
