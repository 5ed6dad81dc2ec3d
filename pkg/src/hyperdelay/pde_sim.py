"""Semi-Lagrangian simulation of the coupled plant under delayed boundary control.

One time step traces both characteristic families back over ``dt``, interpolates
linearly at the feet, adds the in-domain coupling by a trapezoid along the
characteristic segment using the previous step's values, and then applies the
boundary conditions with the control value that left the actuator ``delta``
time units earlier.  The step is ``dt = dx / max(lam, mu)``, so the faster
family moves exactly one cell per step.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (CommensurabilityError, GridMismatchError, PreconditionError,
                     SimulationError)
from .kernels import InverseKernelSet, KernelSet
from .laws import (ControlLaw, Filtered, FullCancellation, OpenLoop, PartialCancellation,
                   StaticBoundary, needs_kernels)
from .model import PlantConfig

TRACE_COLUMNS = ("t", "l2", "u1", "v1", "U_cmd", "U_applied", "beta1")


@dataclass
class PdeState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 1 or self.u.size < 3:
            raise ValueError("u and v must be 1-D arrays of equal length >= 3")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("state contains non-finite values")

    @property
    def n(self) -> int:
        return self.u.size - 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    return w


def l2_norm(state: PdeState) -> float:
    w = trapezoid_weights(state.n)
    return math.sqrt(float(w @ (state.u ** 2 + state.v ** 2)))


def _volterra_weights(n: int) -> np.ndarray:
    # row i holds trapezoid weights for the integral over [0, x_i]
    W = np.tril(np.full((n + 1, n + 1), 1.0 / n))
    W[:, 0] *= 0.5
    W[np.arange(n + 1), np.arange(n + 1)] *= 0.5
    W[0, 0] = 0.0
    return W


def transform_state(state: PdeState, K: KernelSet):
    """Backstepping coordinates ``(alpha, beta)`` of a plant state."""
    if K.n != state.n:
        raise GridMismatchError(f"state grid n={state.n} but kernel grid n={K.n}")
    W = _volterra_weights(state.n)
    alpha = state.u - (K.uu * W) @ state.u - (K.uv * W) @ state.v
    beta = state.v - (K.vu * W) @ state.u - (K.vv * W) @ state.v
    return alpha, beta


def inverse_transform(alpha, beta, L: InverseKernelSet):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if L.n != alpha.size - 1:
        raise GridMismatchError(f"state grid n={alpha.size - 1} but kernel grid n={L.n}")
    W = _volterra_weights(L.n)
    u = alpha + (L.aa * W) @ alpha + (L.ab * W) @ beta
    v = beta + (L.ba * W) @ alpha + (L.bb * W) @ beta
    return u, v


def time_step(plant: PlantConfig, n: int) -> float:
    return 1.0 / (n * max(plant.lam, plant.mu))


def _is_multiple(value: float, dt: float) -> bool:
    r = value / dt
    return abs(r - round(r)) <= 1e-9 * max(1.0, r)


def suggest_resolution(plant: PlantConfig, n: int, delta: float = 0.0,
                       search: int = 4096) -> Optional[int]:
    """Smallest ``n' >= n`` making transit times and the delay whole steps."""
    for m in range(max(n, 2), max(n, 2) + search):
        dt = time_step(plant, m)
        if all(_is_multiple(val, dt) for val in (1.0 / plant.lam, 1.0 / plant.mu, delta)):
            return m
    return None


def check_commensurate(plant: PlantConfig, n: int, delta: float = 0.0):
    """Return ``(dt, delay_steps)`` or raise with a suggested resolution."""
    if delta < 0:
        raise PreconditionError("delay must be nonnegative")
    dt = time_step(plant, n)
    bad = [name for name, val in (("1/lambda", 1.0 / plant.lam), ("1/mu", 1.0 / plant.mu),
                                  ("delta", delta)) if not _is_multiple(val, dt)]
    if bad:
        raise CommensurabilityError(
            f"{', '.join(bad)} not an integer multiple of dt={dt:.6g} at n={n}",
            suggested_n=suggest_resolution(plant, n, delta))
    return dt, int(round(delta / dt))


class DelayLine:
    """Actuator delay of a whole number of steps, with a constant pre-history."""

    def __init__(self, delay: float, dt: float, prehistory: float = 0.0):
        if delay < 0:
            raise PreconditionError("delay must be nonnegative")
        if not _is_multiple(delay, dt):
            raise CommensurabilityError(f"delay {delay} is not a multiple of dt={dt}")
        self.delay = delay
        self.steps = int(round(delay / dt))
        self.prehistory = prehistory
        self._buf = deque(maxlen=max(self.steps, 1))

    def read(self) -> float:
        """Control value commanded ``steps`` pushes ago."""
        if self.steps == 0:
            return self._buf[-1] if self._buf else self.prehistory
        if len(self._buf) < self.steps:
            return self.prehistory
        return self._buf[0]

    def push(self, value: float) -> None:
        self._buf.append(float(value))


@dataclass
class FilterState:
    u1_prev: float
    U_prev: float = 0.0


def _kernel_rows(K: KernelSet, n: int):
    """Kernel values at x = 1, resampled onto an ``n``-cell grid when needed."""
    rows = [K.uu[-1], K.uv[-1], K.vu[-1], K.vv[-1]]
    if K.n != n:
        xk, xs = K.x, np.linspace(0.0, 1.0, n + 1)
        rows = [np.interp(xs, xk, r) for r in rows]
    return rows


def eval_control(law: ControlLaw, state: PdeState, plant: PlantConfig,
                 kernels: Optional[KernelSet] = None,
                 filter_state: Optional[FilterState] = None, dt: Optional[float] = None,
                 _rows=None):
    """Commanded control ``U(t)`` for the current state.

    Returns ``(U, filter_state)``; the second item is the updated filter memory
    for :class:`Filtered` laws and ``None`` otherwise.  Integral terms use the
    trapezoid rule on the state grid.
    """
    u, v = state.u, state.v
    u1 = u[-1]
    if isinstance(law, OpenLoop):
        return 0.0, None
    if isinstance(law, StaticBoundary):
        return -law.gain * u1, None
    if isinstance(law, Filtered):
        if dt is None:
            raise PreconditionError("filtered law needs the time step")
        rho = plant.rho if law.rho is None else law.rho
        fs = filter_state if filter_state is not None else FilterState(u1_prev=u1)
        # backward Euler on b U' + U = -rho (u1 + a u1')
        du = (u1 - fs.u1_prev) / dt
        U = (law.b * fs.U_prev / dt - rho * (u1 + law.a * du)) / (law.b / dt + 1.0)
        return U, FilterState(u1_prev=u1, U_prev=U)
    if needs_kernels(law):
        if kernels is None and _rows is None:
            raise PreconditionError(f"{law.name} requires backstepping kernels")
        kuu, kuv, kvu, kvv = _rows if _rows is not None else _kernel_rows(kernels, state.n)
        w = trapezoid_weights(state.n)
        proximal = float(w @ (kvu * u + kvv * v))
        if isinstance(law, FullCancellation):
            return -plant.rho * u1 + proximal, None
        distal = float(w @ (kuu * u + kuv * v))
        return -law.gain * u1 - (plant.rho - law.gain) * distal + proximal, None
    raise TypeError(f"unknown control law {law!r}")


class _Transport:
    """Precomputed feet, weights and coupling samples for one plant and grid."""

    def __init__(self, plant: PlantConfig, n: int, dt: float):
        self.plant, self.n, self.dt = plant, n, dt
        x = np.linspace(0.0, 1.0, n + 1)
        idx = np.arange(n + 1, dtype=float)
        cu = plant.lam * dt * n
        cv = plant.mu * dt * n
        if cu > 1 + 1e-12 or cv > 1 + 1e-12:
            raise PreconditionError("CFL number above one")
        self.iu0, self.fu, self.iu1 = self._feet(idx[1:] - cu, n)
        self.iv0, self.fv, self.iv1 = self._feet(idx[:-1] + cv, n)
        xu = x[1:] - cu / n
        xv = x[:-1] + cv / n
        self.s_pm_head = plant.sigma_pm(x[1:])
        self.s_pm_foot = plant.sigma_pm(xu)
        self.s_mp_head = plant.sigma_mp(x[:-1])
        self.s_mp_foot = plant.sigma_mp(xv)

    @staticmethod
    def _feet(pos, n):
        pos = np.clip(pos, 0.0, float(n))
        i0 = np.floor(pos + 1e-12).astype(int)
        f = pos - i0
        f[np.abs(f) < 1e-12] = 0.0
        i0 = np.minimum(i0, n)
        return i0, f, np.minimum(i0 + 1, n)

    def advance(self, u, v):
        """New interior values and ``u(t,0)``; ``v(t,1)`` is left for the caller."""
        dt, n = self.dt, self.n
        fu, fv = self.fu, self.fv
        u_foot = (1 - fu) * u[self.iu0] + fu * u[self.iu1]
        v_at_u_foot = (1 - fu) * v[self.iu0] + fu * v[self.iu1]
        v_foot = (1 - fv) * v[self.iv0] + fv * v[self.iv1]
        u_at_v_foot = (1 - fv) * u[self.iv0] + fv * u[self.iv1]
        u_new = np.empty(n + 1)
        v_new = np.empty(n + 1)
        u_new[1:] = u_foot + 0.5 * dt * (self.s_pm_foot * v_at_u_foot + self.s_pm_head * v[1:])
        v_new[:-1] = v_foot + 0.5 * dt * (self.s_mp_foot * u_at_v_foot + self.s_mp_head * u[:-1])
        u_new[0] = self.plant.q * v_new[0]
        v_new[-1] = np.nan
        return u_new, v_new


def step(state: PdeState, plant: PlantConfig, law: ControlLaw,
         kernels: Optional[KernelSet], delayline: DelayLine,
         filter_state: Optional[FilterState] = None):
    """Advance one step; returns ``(new_state, U_cmd, U_applied, filter_state)``.

    The commanded value is pushed into ``delayline``.
    """
    dt = time_step(plant, state.n)
    tr = _Transport(plant, state.n, dt)
    return _step(tr, state, law, kernels, delayline, filter_state, None)


def _close_boundary(state, plant, law, kernels, line, fstate, rows, dt):
    """Set ``v(t,1)`` from the boundary condition and evaluate the control.

    Without delay the control and ``v(t,1)`` are coupled through the quadrature
    end node; the control is affine in ``v(t,1)``, so two probes solve the loop.
    """
    v = state.v
    if line.steps == 0:
        v[-1] = 0.0
        U0, _ = eval_control(law, state, plant, kernels, fstate, dt, _rows=rows)
        v[-1] = 1.0
        U1, _ = eval_control(law, state, plant, kernels, fstate, dt, _rows=rows)
        c = U1 - U0
        v[-1] = (plant.rho * state.u[-1] + U0) / (1.0 - c)
        U_cmd, fstate = eval_control(law, state, plant, kernels, fstate, dt, _rows=rows)
        U_app = U_cmd
    else:
        U_app = line.read()
        v[-1] = plant.rho * state.u[-1] + U_app
        U_cmd, fstate = eval_control(law, state, plant, kernels, fstate, dt, _rows=rows)
    if not (np.isfinite(v[-1]) and np.isfinite(U_cmd)):
        raise SimulationError("non-finite boundary value", state.t)
    line.push(U_cmd)
    return U_cmd, U_app, fstate


def _raw_state(u, v, t):
    st = PdeState.__new__(PdeState)
    st.u, st.v, st.t = u, v, t
    return st


def _step(tr, state, law, kernels, line, fstate, rows):
    u_new, v_new = tr.advance(state.u, state.v)
    new = _raw_state(u_new, v_new, state.t + tr.dt)
    U_cmd, U_app, fstate = _close_boundary(new, tr.plant, law, kernels, line, fstate, rows,
                                           tr.dt)
    return new, U_cmd, U_app, fstate


def consistent_initial_state(plant: PlantConfig, law: ControlLaw, u0, v0, n: int,
                             kernels: Optional[KernelSet] = None, delta: float = 0.0):
    """Initial state whose boundary nodes satisfy the boundary conditions at ``t = 0``.

    ``u(0,0)`` is set to ``q v(0,0)`` and ``v(0,1)`` to ``rho u(0,1) + U(-delta)``
    (the zero pre-history when ``delta > 0``, the closed-loop value otherwise).
    Returns ``(state, U_cmd, U_applied, filter_state, delayline)``.
    """
    dt = time_step(plant, n)
    state = PdeState(initial_profile(u0, n), initial_profile(v0, n), 0.0)
    state.u[0] = plant.q * state.v[0]
    rows = _kernel_rows(kernels, n) if kernels is not None else None
    line = DelayLine(delta, dt)
    U_cmd, U_app, fstate = _close_boundary(state, plant, law, kernels, line, None, rows, dt)
    return state, U_cmd, U_app, fstate, line


@dataclass
class TraceRecord:
    t: np.ndarray
    l2: np.ndarray
    u1: np.ndarray
    v1: np.ndarray
    U_cmd: np.ndarray
    U_applied: np.ndarray
    beta1: Optional[np.ndarray] = None
    dt: float = 0.0
    meta: dict = field(default_factory=dict)
    final_state: Optional[PdeState] = None

    def __len__(self):
        return self.t.size

    def at(self, t: float) -> int:
        """Index of the sample closest to time ``t``."""
        return int(np.argmin(np.abs(self.t - t)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for k in range(self.t.size):
                row = [self.t[k], self.l2[k], self.u1[k], self.v1[k], self.U_cmd[k],
                       self.U_applied[k]]
                cells = [f"{val:.17g}" for val in row]
                cells.append("" if self.beta1 is None else f"{self.beta1[k]:.17g}")
                w.writerow(cells)


def initial_profile(spec, n: int) -> np.ndarray:
    """Sample an initial profile: ``None`` (ones), scalar, callable, or array."""
    x = np.linspace(0.0, 1.0, n + 1)
    if spec is None:
        return np.ones(n + 1)
    if callable(spec):
        return np.asarray(spec(x), dtype=float) * np.ones(n + 1)
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        return np.full(n + 1, float(arr))
    if arr.size == n + 1:
        return arr.copy()
    return np.interp(x, np.linspace(0.0, 1.0, arr.size), arr)


def simulate(plant: PlantConfig, law: ControlLaw, kernels: Optional[KernelSet] = None,
             delta: float = 0.0, u0=None, v0=None, horizon: float = 10.0, n: int = 200,
             stride: int = 1) -> TraceRecord:
    """Run the closed loop from ``t = 0`` to ``horizon``.

    ``kernels`` is required by the backstepping laws; when given, the trace also
    carries ``beta(t, 1)``.  Control pre-history is zero.

    Raises
    ------
    CommensurabilityError
        If ``1/lam``, ``1/mu`` or ``delta`` are not whole multiples of the step.
    SimulationError
        If the state blows up to non-finite values.
    """
    dt, _ = check_commensurate(plant, n, delta)
    if needs_kernels(law) and kernels is None:
        raise PreconditionError(f"{law.name} requires backstepping kernels")
    steps = int(round(horizon / dt))
    tr = _Transport(plant, n, dt)
    rows = _kernel_rows(kernels, n) if kernels is not None else None
    w = trapezoid_weights(n)
    state, U_cmd, U_app, fstate, line = consistent_initial_state(plant, law, u0, v0, n,
                                                                 kernels, delta)

    m = steps // stride + 1
    out = {name: np.empty(m) for name in TRACE_COLUMNS}

    def record(slot, st, uc, ua):
        out["t"][slot] = st.t
        out["l2"][slot] = math.sqrt(float(w @ (st.u ** 2 + st.v ** 2)))
        out["u1"][slot] = st.u[-1]
        out["v1"][slot] = st.v[-1]
        out["U_cmd"][slot] = uc
        out["U_applied"][slot] = ua
        if rows is not None:
            out["beta1"][slot] = st.v[-1] - float(w @ (rows[2] * st.u + rows[3] * st.v))

    record(0, state, U_cmd, U_app)
    for k in range(1, steps + 1):
        state, U_cmd, U_app, fstate = _step(tr, state, law, kernels, line, fstate, rows)
        state.t = k * dt
        if k % stride == 0:
            record(k // stride, state, U_cmd, U_app)
            if not np.isfinite(out["l2"][k // stride]):
                raise SimulationError("state became non-finite", state.t)
    return TraceRecord(t=out["t"], l2=out["l2"], u1=out["u1"], v1=out["v1"],
                       U_cmd=out["U_cmd"], U_applied=out["U_applied"],
                       beta1=out["beta1"] if rows is not None else None, dt=dt,
                       meta={"n": n, "delta": delta, "law": law.name, "horizon": steps * dt},
                       final_state=state)
