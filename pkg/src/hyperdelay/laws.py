"""Boundary control laws acting at x = 1."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True)
class OpenLoop:
    name = "open_loop"


@dataclass(frozen=True)
class FullCancellation:
    """Backstepping law cancelling the proximal reflection entirely."""

    name = "full_cancellation"


@dataclass(frozen=True)
class PartialCancellation:
    """Backstepping law leaving a reflection ``rho - gain`` in the target system."""

    gain: float
    name = "partial_cancellation"

    def __post_init__(self):
        if not np.isfinite(self.gain):
            raise ValueError("gain must be finite")


@dataclass(frozen=True)
class StaticBoundary:
    """``U(t) = -gain * u(t, 1)``."""

    gain: float
    name = "static_boundary"

    def __post_init__(self):
        if not np.isfinite(self.gain):
            raise ValueError("gain must be finite")


@dataclass(frozen=True)
class Filtered:
    """Lead/lag filtered reflection cancellation, ``U = -rho (1 + a s)/(1 + b s) u(1)``.

    ``rho=None`` uses the plant's proximal reflection.
    """

    a: float
    b: float
    rho: Optional[float] = None
    name = "filtered"

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("filter time constant b must be positive")
        if not np.isfinite(self.a):
            raise ValueError("a must be finite")


ControlLaw = Union[OpenLoop, FullCancellation, PartialCancellation, StaticBoundary, Filtered]

KERNEL_LAWS = (FullCancellation, PartialCancellation)


def needs_kernels(law) -> bool:
    return isinstance(law, KERNEL_LAWS)


def law_from_dict(d: dict) -> ControlLaw:
    kind = str(d.get("type", "open_loop")).lower()
    if kind == "open_loop":
        return OpenLoop()
    if kind == "full_cancellation":
        return FullCancellation()
    if kind == "partial_cancellation":
        return PartialCancellation(float(d["K"]))
    if kind == "static_boundary":
        return StaticBoundary(float(d["K"]))
    if kind == "filtered":
        rho = d.get("rho")
        return Filtered(float(d["a"]), float(d["b"]), None if rho is None else float(rho))
    raise ValueError(f"unknown law type {kind!r}")


def law_to_dict(law: ControlLaw) -> dict:
    out = {"type": law.name}
    if isinstance(law, (PartialCancellation, StaticBoundary)):
        out["K"] = law.gain
    elif isinstance(law, Filtered):
        out.update(a=law.a, b=law.b)
        if law.rho is not None:
            out["rho"] = law.rho
    return out
