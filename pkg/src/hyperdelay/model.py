"""Plant parameters, coupling profiles and the open-loop gain classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import PreconditionError


class Profile:
    """A real function on [0, 1], used for the in-domain couplings."""

    def __call__(self, x):
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantProfile(Profile):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("profile value must be finite")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, float(self.value))

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


@dataclass(frozen=True)
class TabulatedProfile(Profile):
    """Samples on a uniform grid over [0, 1], linearly interpolated."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError("tabulated profile needs at least 2 samples")
        if not all(np.isfinite(vals)):
            raise ValueError("profile samples must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.values))

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, np.asarray(self.values))

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


ProfileLike = Union[Profile, float, int, Sequence[float], np.ndarray]


def as_profile(p: ProfileLike) -> Profile:
    if isinstance(p, Profile):
        return p
    if np.isscalar(p):
        return ConstantProfile(float(p))
    return TabulatedProfile(tuple(np.asarray(p, dtype=float).ravel()))


@dataclass(frozen=True)
class PlantConfig:
    """Two heterodirectional transport equations coupled in-domain and at the boundaries.

    ``u`` travels rightward at speed ``lam``, ``v`` leftward at speed ``mu``.
    Boundary conditions are ``u(t,0) = q v(t,0)`` and ``v(t,1) = rho u(t,1) + U(t)``.
    ``sigma_pm`` couples ``v`` into the ``u`` equation, ``sigma_mp`` couples ``u``
    into the ``v`` equation.
    """

    lam: float
    mu: float
    q: float
    rho: float
    sigma_pm: ProfileLike = 0.0
    sigma_mp: ProfileLike = 0.0

    def __post_init__(self):
        for name in ("lam", "mu", "q", "rho"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("transport speeds lam and mu must be positive")
        if self.q == 0:
            raise ValueError("distal reflection q must be nonzero")
        object.__setattr__(self, "sigma_pm", as_profile(self.sigma_pm))
        object.__setattr__(self, "sigma_mp", as_profile(self.sigma_mp))

    @property
    def tau(self) -> float:
        return characteristic_time(self)

    @property
    def open_loop_gain(self) -> float:
        return self.rho * self.q

    @property
    def uncoupled(self) -> bool:
        return self.sigma_pm.is_zero and self.sigma_mp.is_zero

    def replace(self, **changes) -> "PlantConfig":
        fields = dict(lam=self.lam, mu=self.mu, q=self.q, rho=self.rho,
                      sigma_pm=self.sigma_pm, sigma_mp=self.sigma_mp)
        fields.update(changes)
        return PlantConfig(**fields)


def characteristic_time(plant: PlantConfig) -> float:
    """Round-trip transport time ``1/lam + 1/mu``."""
    return 1.0 / plant.lam + 1.0 / plant.mu


class StabilizabilityClass(enum.Enum):
    NOT_DELAY_ROBUSTLY_STABILIZABLE = "not_delay_robustly_stabilizable"
    NO_FINITE_TIME_DELAY_ROBUST = "no_finite_time_delay_robust"
    FINITE_TIME_DELAY_ROBUST = "finite_time_delay_robust"
    CRITICAL_BOUNDARY = "critical_boundary"


def classify_open_loop_gain(rho: float, q: float) -> StabilizabilityClass:
    """Classify delay-robust stabilizability from the open-loop gain ``|rho q|``.

    The thresholds 1/2 and 1 are compared exactly; a gain sitting on either
    threshold is reported as ``CRITICAL_BOUNDARY``.
    """
    if q == 0:
        raise PreconditionError("distal reflection q must be nonzero")
    g = abs(rho * q)
    if g > 1.0:
        return StabilizabilityClass.NOT_DELAY_ROBUSTLY_STABILIZABLE
    if g == 1.0 or g == 0.5:
        return StabilizabilityClass.CRITICAL_BOUNDARY
    if g > 0.5:
        return StabilizabilityClass.NO_FINITE_TIME_DELAY_ROBUST
    return StabilizabilityClass.FINITE_TIME_DELAY_ROBUST


def gain_bound(rho: float, q: float) -> float:
    """Largest admissible ``|K|`` (exclusive) for the partial-cancellation law."""
    if q == 0:
        raise PreconditionError("distal reflection q must be nonzero")
    g = abs(rho * q)
    if g >= 1.0:
        raise PreconditionError(f"|rho q| = {g} >= 1: no admissible gain exists")
    return (1.0 - g) / abs(q)


def check_gain_bound(K: float, rho: float, q: float) -> bool:
    """``|K q| + |rho q| < 1``, compared in that form to avoid rounding at the bound."""
    gain_bound(rho, q)
    return abs(K * q) + abs(rho * q) < 1.0


def check_filter_conditions(a: float, b: float, rho: float, q: float) -> bool:
    """Sufficient conditions on the lead/lag filter ``(1 + a s)/(1 + b s)``."""
    if b <= 0:
        raise PreconditionError("filter time constant b must be positive")
    g = abs(rho * q)
    if g == 0 or g >= 1.0:
        raise PreconditionError(f"filter conditions need 0 < |rho q| < 1, got {g}")
    bound = (1.0 - g) / g
    return a / b < bound and a < bound
