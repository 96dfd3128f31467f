"""Parameter records, path records, the speed measure and random streams.

Local times throughout the package are *symmetric* local times at 0, i.e. the
occupation-density normalisation under which the local time of a standard
Brownian motion at time 1 is distributed as |N(0, 1)|.  One-sided (right)
local times of a continuous martingale crossing 0 symmetrically are twice
as small on each side; estimators must not mix the two conventions.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    DriftGapViolation,
    NonFiniteParameter,
    NonPositiveParameter,
    SigmaRatioViolation,
)

__all__ = [
    "OsbmParams",
    "SpeedMeasureView",
    "PathRecord",
    "CouplingParams",
    "RngSpec",
    "validate_params",
    "speed_measure",
    "validate_coupling",
    "worker_threads",
]


def _check_positive(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise NonFiniteParameter(name, value) from None
    if not math.isfinite(value):
        raise NonFiniteParameter(name, value)
    if value <= 0.0:
        raise NonPositiveParameter(name, value)
    return value


@dataclass(frozen=True)
class OsbmParams:
    """Parameters ``(sigma_plus, sigma_minus, theta)`` of an OSBM.

    ``r = (1/sigma_minus + 1/sigma_plus) / 2`` is derived on construction.
    """

    sigma_plus: float
    sigma_minus: float
    theta: float
    r: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        sp = _check_positive("sigma_plus", self.sigma_plus)
        sm = _check_positive("sigma_minus", self.sigma_minus)
        th = _check_positive("theta", self.theta)
        object.__setattr__(self, "sigma_plus", sp)
        object.__setattr__(self, "sigma_minus", sm)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "r", 0.5 * (1.0 / sm + 1.0 / sp))

    def swapped(self) -> "OsbmParams":
        """Parameters of ``-X``: the two diffusion scales exchanged."""
        return OsbmParams(self.sigma_minus, self.sigma_plus, self.theta)

    def sigma(self, x):
        """Diffusion scale at ``x`` (``sigma_minus`` for x < 0)."""
        return np.where(np.asarray(x) < 0, self.sigma_minus, self.sigma_plus)

    def as_dict(self) -> dict[str, float]:
        return {"sigma_plus": self.sigma_plus, "sigma_minus": self.sigma_minus, "theta": self.theta}


def validate_params(p: OsbmParams | Sequence[float] | Mapping[str, float]) -> OsbmParams:
    """Return a validated :class:`OsbmParams` with ``r`` populated.

    Accepts an existing record (returned unchanged, so the call is
    idempotent), a ``(sigma_plus, sigma_minus, theta)`` triple or a mapping
    with those keys.

    Raises
    ------
    NonPositiveParameter, NonFiniteParameter
    """
    if isinstance(p, OsbmParams):
        return p
    if isinstance(p, Mapping):
        return OsbmParams(p["sigma_plus"], p["sigma_minus"], p["theta"])
    sp, sm, th = p
    return OsbmParams(sp, sm, th)


@dataclass(frozen=True)
class SpeedMeasureView:
    """The three components of the speed measure ``m``."""

    density_left: float
    density_right: float
    atom_at_zero: float


def speed_measure(p: OsbmParams) -> SpeedMeasureView:
    return SpeedMeasureView(
        density_left=1.0 / p.sigma_minus**2,
        density_right=1.0 / p.sigma_plus**2,
        atom_at_zero=1.0 / p.theta,
    )


@dataclass(frozen=True)
class CouplingParams:
    """Drifts and starting points of a sticky-coupled pair."""

    beta1: float
    beta2: float
    x1: float
    x2: float
    base: OsbmParams

    def as_dict(self) -> dict[str, Any]:
        return {
            "beta1": self.beta1,
            "beta2": self.beta2,
            "x1": self.x1,
            "x2": self.x2,
            **self.base.as_dict(),
        }


def validate_coupling(c: CouplingParams) -> CouplingParams:
    """Check ``sigma_plus < sqrt(2) sigma_minus`` and ``|beta1 - beta2| < 2 theta``."""
    for name in ("beta1", "beta2", "x1", "x2"):
        if not math.isfinite(float(getattr(c, name))):
            raise NonFiniteParameter(name, getattr(c, name))
    b = c.base
    if not b.sigma_plus < math.sqrt(2.0) * b.sigma_minus:
        raise SigmaRatioViolation(b.sigma_plus, b.sigma_minus)
    if not abs(c.beta1 - c.beta2) < 2.0 * b.theta:
        raise DriftGapViolation(c.beta1, c.beta2, b.theta)
    return c


@dataclass(frozen=True)
class RngSpec:
    """Address of one random stream: ``(master_seed, stream_index)``.

    Streams are Philox (counter-based) generators keyed through
    :class:`numpy.random.SeedSequence` with ``spawn_key=(stream_index,)``,
    so a stream depends only on its address and never on which thread or
    chunk consumes it.
    """

    master_seed: int = 0
    stream_index: int = 0

    def __post_init__(self) -> None:
        if int(self.stream_index) < 0:
            raise NonPositiveParameter("stream_index", self.stream_index)
        object.__setattr__(self, "master_seed", int(self.master_seed) & 0xFFFF_FFFF_FFFF_FFFF)
        object.__setattr__(self, "stream_index", int(self.stream_index))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngSpec":
        return RngSpec(self.master_seed, index)

    def substreams(self, k: int) -> list[np.random.Generator]:
        """``k`` independent generators derived from this stream's address.

        Lets one path draw from separate sources (e.g. increments and
        interpolation) without the draw count of one shifting the other.
        """
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return [np.random.Generator(np.random.Philox(c)) for c in ss.spawn(k)]


def _readonly(a) -> np.ndarray:
    a = np.array(a, copy=True)
    if a.dtype != bool:
        a = a.astype(float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PathRecord:
    """A trajectory on the uniform grid ``k * dt``, ``k = 0..n``.

    ``l_values`` is the symmetric local time at 0, ``gamma_values`` the
    occupation time of ``[0, inf)`` and ``sticky_flags`` marks grid times at
    which the path sits at 0.  ``a_values`` (when present) is the
    quadratic variation clock ``A_t``.  ``meta`` records the zero band and
    the estimator settings that produced the record.
    """

    dt: float
    x_values: np.ndarray
    l_values: np.ndarray
    gamma_values: np.ndarray
    sticky_flags: np.ndarray
    a_values: np.ndarray | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_positive("dt", self.dt)
        for name in ("x_values", "l_values", "gamma_values", "sticky_flags", "a_values"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _readonly(v))
        n = len(self.x_values)
        lengths = {len(self.l_values), len(self.gamma_values), len(self.sticky_flags)}
        if self.a_values is not None:
            lengths.add(len(self.a_values))
        if lengths != {n}:
            raise ValueError("PathRecord arrays must all have the same length")
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_steps(self) -> int:
        return len(self.x_values) - 1

    @property
    def t_values(self) -> np.ndarray:
        return np.arange(len(self.x_values)) * self.dt

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def zero_band(self) -> float | None:
        return self.meta.get("zero_band")

    def sticky_time(self) -> float:
        """Grid estimate of the time spent at 0 (``dt`` per flagged point)."""
        return float(self.dt * np.count_nonzero(self.sticky_flags[:-1]))


def worker_threads() -> int:
    """Worker count: ``OSBM_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("OSBM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
