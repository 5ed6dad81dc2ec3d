"""Scalar neutral equation with distributed delay satisfied by ``beta(t, 1)``.

The equation has the form::

    beta(t) = sum_i a_i beta(t - tau_i) + sum_j b_j int_0^tau N(nu) beta(t - nu - s_j) dnu

Terms flagged ``feedback`` come from the delayed control and are switched on
only once the first commanded value reaches the plant (``t >= delta``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CommensurabilityError, PreconditionError, UnsupportedLawError
from .kernels import FeedbackGains
from .laws import ControlLaw, Filtered, FullCancellation, OpenLoop, PartialCancellation, StaticBoundary
from .model import PlantConfig


@dataclass(frozen=True)
class PointTerm:
    coefficient: float
    delay: float
    feedback: bool = False


@dataclass(frozen=True)
class DistributedTerm:
    """``weight * int_0^tau N(nu) beta(t - nu - shift) dnu``."""

    weight: float
    shift: float = 0.0
    feedback: bool = False


@dataclass(frozen=True)
class NeutralSpec:
    point_terms: tuple
    tau: float
    delta: float = 0.0
    distributed: tuple = ()
    kernel: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        terms = tuple(sorted(self.point_terms, key=lambda p: p.delay))
        if any(p.delay < 0 for p in terms):
            raise ValueError("delays must be nonnegative")
        object.__setattr__(self, "point_terms", terms)
        if self.kernel is not None:
            ker = np.asarray(self.kernel, dtype=float)
            if ker.ndim != 1 or ker.size < 2 or not np.all(np.isfinite(ker)):
                raise ValueError("kernel samples must be a finite 1-D array")
            object.__setattr__(self, "kernel", ker)
        elif self.distributed:
            raise ValueError("distributed terms need kernel samples")

    @property
    def d_nu(self) -> float:
        return self.tau / (self.kernel.size - 1)

    @property
    def max_delay(self) -> float:
        d = max((p.delay for p in self.point_terms), default=0.0)
        if self.distributed:
            d = max(d, self.tau + max(t.shift for t in self.distributed))
        return d

    def coefficients(self):
        return [(p.coefficient, p.delay) for p in self.point_terms]

    def to_text(self) -> str:
        """Flat ``key = value`` representation, readable by :func:`spec_from_text`."""
        lines = [
            f"neutral.tau = {json.dumps(self.tau)}",
            f"neutral.delta = {json.dumps(self.delta)}",
            "neutral.point_terms = "
            + json.dumps([[p.coefficient, p.delay, p.feedback] for p in self.point_terms]),
            "neutral.distributed = "
            + json.dumps([[d.weight, d.shift, d.feedback] for d in self.distributed]),
        ]
        if self.kernel is not None:
            lines.append("neutral.kernel = " + json.dumps([float(v) for v in self.kernel]))
        return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> NeutralSpec:
    from .config import parse_flat

    d = parse_flat(text)
    kernel = d.get("neutral.kernel")
    return NeutralSpec(
        point_terms=tuple(PointTerm(float(c), float(t), bool(f))
                          for c, t, f in d.get("neutral.point_terms", [])),
        tau=float(d["neutral.tau"]),
        delta=float(d.get("neutral.delta", 0.0)),
        distributed=tuple(DistributedTerm(float(w), float(s), bool(f))
                          for w, s, f in d.get("neutral.distributed", [])),
        kernel=None if kernel is None else np.asarray(kernel, dtype=float),
    )


def reduce_closed_loop(plant: PlantConfig, gains: Optional[FeedbackGains], law: ControlLaw,
                       delta: float = 0.0) -> NeutralSpec:
    """Neutral equation for ``beta(t, 1)`` under ``law`` with actuator delay ``delta``.

    For an uncoupled plant the distributed term vanishes and ``gains`` may be
    omitted.

    Raises
    ------
    UnsupportedLawError
        For the filtered law, and for the static law on a coupled plant.
    """
    if delta < 0:
        raise PreconditionError("delay must be nonnegative")
    tau, q, rho = plant.tau, plant.q, plant.rho
    if isinstance(law, Filtered):
        raise UnsupportedLawError("the filtered closed loop has no reduction of this form")
    kernel = None
    if not plant.uncoupled:
        if gains is None:
            raise PreconditionError("a coupled plant needs feedback gains for the reduction")
        if abs(gains.tau - tau) > 1e-12 * tau:
            raise PreconditionError("gains were computed for a different plant")
        kernel = np.asarray(gains.n_tilde, dtype=float)

    points = [PointTerm(q * rho, tau)]
    dist = [DistributedTerm(-1.0, 0.0)] if kernel is not None else []
    if isinstance(law, OpenLoop):
        pass
    elif isinstance(law, StaticBoundary):
        if kernel is not None:
            raise UnsupportedLawError("the static law is reduced only for an uncoupled plant")
        points.append(PointTerm(-q * law.gain, tau + delta, True))
    elif isinstance(law, (FullCancellation, PartialCancellation)):
        gain = rho if isinstance(law, FullCancellation) else law.gain
        points.append(PointTerm(-q * gain, tau + delta, True))
        if kernel is not None:
            dist.append(DistributedTerm(1.0, delta, True))
    else:
        raise TypeError(f"unknown control law {law!r}")
    return NeutralSpec(tuple(points), tau, delta, tuple(dist), kernel)


@dataclass
class History:
    """Samples of ``beta(s, 1)`` at ``s = -k dt`` for ``k = H, ..., 0`` (ascending time)."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise ValueError("history must be a finite 1-D array")

    @property
    def span(self) -> float:
        return (self.values.size - 1) * self.dt

    @classmethod
    def constant(cls, value: float, span: float, dt: float) -> "History":
        m = int(np.ceil(span / dt - 1e-9))
        return cls(np.full(m + 1, float(value)), dt)

    @classmethod
    def from_transformed(cls, alpha0, beta0, plant: PlantConfig, dt: float,
                         span: Optional[float] = None) -> "History":
        """History generated by transformed initial profiles along the characteristics.

        ``beta(s, 1) = beta0(1 + mu s)`` on ``(-1/mu, 0]`` and
        ``beta(s, 1) = alpha0(lam (-s - 1/mu)) / q`` on ``[-tau, -1/mu]``;
        earlier values repeat the value at ``-tau``.
        """
        alpha0 = np.asarray(alpha0, dtype=float)
        beta0 = np.asarray(beta0, dtype=float)
        lam, mu, q, tau = plant.lam, plant.mu, plant.q, plant.tau
        span = tau if span is None else max(span, tau)
        m = int(np.ceil(span / dt - 1e-9))
        s = -dt * np.arange(m, -1, -1)
        xa = np.linspace(0.0, 1.0, alpha0.size)
        xb = np.linspace(0.0, 1.0, beta0.size)
        eps = 1e-12 * tau
        on_beta = s > -1.0 / mu + eps
        vals = np.empty_like(s)
        vals[on_beta] = np.interp(1.0 + mu * s[on_beta], xb, beta0)
        sa = np.maximum(s[~on_beta], -tau)
        vals[~on_beta] = np.interp(np.clip(lam * (-sa - 1.0 / mu), 0.0, 1.0), xa, alpha0) / q
        return cls(vals, dt)


@dataclass
class NeutralTrace:
    t: np.ndarray
    beta: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "beta"))
            for t, b in zip(self.t, self.beta):
                w.writerow((f"{t:.17g}", f"{b:.17g}"))


def _steps(value: float, dt: float, what: str) -> int:
    r = value / dt
    k = int(round(r))
    if abs(r - k) > 1e-9 * max(1.0, r):
        raise CommensurabilityError(f"{what} {value} is not an integer multiple of dt={dt}")
    return k


def simulate_neutral(spec: NeutralSpec, history: History, horizon: float,
                     dt: Optional[float] = None) -> NeutralTrace:
    """March the neutral equation forward from ``t = 0``.

    The distributed integrals use the trapezoid rule on the kernel grid, which
    must coincide with ``dt``.  When a distributed term has zero shift, the
    ``nu = 0`` node involves the unknown itself and is solved for implicitly.

    Raises
    ------
    CommensurabilityError
        If a delay, shift or the kernel spacing is not a whole number of steps.
    """
    dt = history.dt if dt is None else dt
    if abs(dt - history.dt) > 1e-12 * dt:
        raise PreconditionError("history spacing differs from the time step")
    n_hist = history.values.size - 1
    gate = _steps(spec.delta, dt, "delay")
    pts = [(p.coefficient, _steps(p.delay, dt, "point delay"), p.feedback)
           for p in spec.point_terms]
    dist = []
    wk = None
    if spec.distributed:
        if _steps(spec.d_nu, dt, "kernel spacing") != 1:
            raise CommensurabilityError(f"kernel spacing {spec.d_nu} differs from dt={dt}")
        wk = spec.kernel * dt
        wk[0] *= 0.5
        wk[-1] *= 0.5
        dist = [(d.weight, _steps(d.shift, dt, "shift"), d.feedback) for d in spec.distributed]
    m = 0 if wk is None else wk.size - 1
    need = max([d for _, d, _ in pts] + [s + m for _, s, _ in dist] + [0])
    if need > n_hist:
        raise PreconditionError(f"history covers {n_hist} steps but {need} are needed")

    steps = int(round(horizon / dt))
    buf = np.empty(n_hist + steps + 1)
    buf[:n_hist + 1] = history.values
    wk_rev = None if wk is None else wk[::-1].copy()
    for k in range(1, steps + 1):
        i = n_hist + k
        rest = 0.0
        implicit = 0.0
        for c, d, fb in pts:
            if fb and k < gate:
                continue
            if d == 0:
                implicit += c
            else:
                rest += c * buf[i - d]
        for c, s, fb in dist:
            if fb and k < gate:
                continue
            if s == 0:
                # nodes nu_1..nu_m against beta(t - nu); nu_0 is the unknown
                rest += c * float(wk_rev[:-1] @ buf[i - m:i])
                implicit += c * wk[0]
            else:
                rest += c * float(wk_rev @ buf[i - s - m:i - s + 1])
        buf[i] = rest / (1.0 - implicit)
    t = dt * np.arange(steps + 1)
    return NeutralTrace(t, buf[n_hist:].copy())


def point_spec(terms: Sequence[tuple], tau: Optional[float] = None) -> NeutralSpec:
    """Spec with point terms only, from ``(coefficient, delay)`` pairs."""
    pts = tuple(PointTerm(float(c), float(d)) for c, d in terms)
    tau = tau if tau is not None else max((p.delay for p in pts), default=1.0)
    return NeutralSpec(pts, tau)
