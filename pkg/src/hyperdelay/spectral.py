"""Characteristic functions of the delayed closed loops and right-half-plane root scans.

A characteristic function is the entire function::

    F(s) = sum_i (c0_i + c1_i s) exp(-d_i s)
           + sum_j w_j exp(-h_j s) int_0^tau N(nu) exp(-nu s) dnu

with ``N`` sampled on a uniform grid.  The integral is evaluated exactly for
the piecewise-linear interpolant of the samples, which agrees with the
trapezoid rule to second order at low frequency and does not alias at
frequencies above ``pi / d_nu``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContourError, PreconditionError, UnsupportedLawError
from .kernels import FeedbackGains
from .laws import ControlLaw, Filtered
from .model import PlantConfig
from .neutral import NeutralSpec, reduce_closed_loop

SPLIT_FRACTIONS = (0.5137, 0.4627, 0.5511)


def _phi(z: np.ndarray):
    """``phi_j(z) = int_0^1 theta^j exp(-z theta) dtheta`` for ``j = 0, 1, 2``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.exp(-z)
        p0 = (1 - e) / z
        p1 = (1 - e * (1 + z)) / z ** 2
        p2 = (2 * p1 - e) / z
    if np.any(small):
        zs = z[small]
        s0 = np.zeros_like(zs)
        s1 = np.zeros_like(zs)
        s2 = np.zeros_like(zs)
        term = np.ones_like(zs)
        for k in range(18):
            s0 += term / (k + 1)
            s1 += term / (k + 2)
            s2 += term / (k + 3)
            term = term * (-zs) / (k + 1)
        p0[small], p1[small], p2[small] = s0, s1, s2
    return p0, p1, p2


@dataclass(frozen=True)
class CharacteristicFunction:
    """Sum of polynomial-weighted exponentials plus distributed-delay integrals.

    ``point_terms`` holds ``(c0, c1, delay)`` triples for ``(c0 + c1 s) exp(-delay s)``;
    ``distributed`` holds ``(weight, shift)`` pairs multiplying the integral of
    ``kernel`` over ``[0, tau]``.
    """

    point_terms: tuple
    distributed: tuple = ()
    kernel: Optional[np.ndarray] = field(default=None, compare=False)
    tau: Optional[float] = None

    def __post_init__(self):
        terms = tuple((float(c0), float(c1), float(d)) for c0, c1, d in self.point_terms)
        object.__setattr__(self, "point_terms", terms)
        object.__setattr__(self, "distributed",
                           tuple((float(w), float(h)) for w, h in self.distributed))
        if self.distributed:
            if self.kernel is None or self.tau is None:
                raise ValueError("distributed terms need kernel samples and tau")
            object.__setattr__(self, "kernel", np.asarray(self.kernel, dtype=float))

    @classmethod
    def from_delays(cls, terms: Sequence[tuple], constant: float = 1.0):
        """``constant + sum c exp(-d s)`` from ``(c, d)`` pairs."""
        return cls(((constant, 0.0, 0.0),) + tuple((c, 0.0, d) for c, d in terms))

    @property
    def has_polynomial_weights(self) -> bool:
        return any(c1 != 0 for _, c1, _ in self.point_terms)

    @property
    def max_delay(self) -> float:
        d = max((t[2] for t in self.point_terms), default=0.0)
        if self.distributed:
            d = max(d, self.tau + max(h for _, h in self.distributed))
        return d

    def _integral(self, s: np.ndarray, derivative: bool = False):
        """``int_0^tau N(nu) exp(-nu s) dnu`` and optionally its s-derivative."""
        f = self.kernel
        m = f.size - 1
        h = self.tau / m
        nodes = h * np.arange(m)
        out = np.empty(s.shape, dtype=complex)
        dout = np.empty(s.shape, dtype=complex) if derivative else None
        fa, fb = f[:-1], f[1:]
        chunk = max(1, 200000 // max(m, 1))
        for lo in range(0, s.size, chunk):
            sc = s[lo:lo + chunk]
            p0, p1, p2 = _phi(sc * h)
            g = fa[None, :] * (p0 - p1)[:, None] + fb[None, :] * p1[:, None]
            e = np.exp(-np.outer(sc, nodes))
            out[lo:lo + chunk] = h * np.sum(e * g, axis=1)
            if derivative:
                # d/dz of (p0 - p1) is p2 - p1, d/dz of p1 is -p2
                gp = fa[None, :] * (p2 - p1)[:, None] - fb[None, :] * p2[:, None]
                dout[lo:lo + chunk] = h * np.sum(e * (h * gp - nodes[None, :] * g), axis=1)
        return out, dout

    def distributed_part(self, s):
        """The distributed contribution on its own."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        if not self.distributed:
            return np.zeros(s.shape, dtype=complex)
        integral, _ = self._integral(s.ravel())
        total = np.zeros(s.size, dtype=complex)
        for w, h in self.distributed:
            total += w * np.exp(-h * s.ravel()) * integral
        return total.reshape(s.shape)

    def evaluate(self, s, derivative: bool = False):
        """``F(s)`` (and ``F'(s)`` when ``derivative``) for scalar or array ``s``."""
        s_in = np.asarray(s, dtype=complex)
        sv = np.atleast_1d(s_in).ravel()
        F = np.zeros(sv.shape, dtype=complex)
        dF = np.zeros(sv.shape, dtype=complex) if derivative else None
        for c0, c1, d in self.point_terms:
            e = np.exp(-d * sv) if d else np.ones_like(sv)
            poly = c0 + c1 * sv
            F += poly * e
            if derivative:
                dF += (c1 - d * poly) * e
        if self.distributed:
            integral, dint = self._integral(sv, derivative)
            for w, h in self.distributed:
                e = np.exp(-h * sv)
                F += w * e * integral
                if derivative:
                    dF += w * e * (dint - h * integral)
        if s_in.ndim == 0:
            return (F[0], dF[0]) if derivative else F[0]
        return (F.reshape(s_in.shape), dF.reshape(s_in.shape)) if derivative else F.reshape(s_in.shape)

    __call__ = evaluate

    def root_free_abscissa(self) -> Optional[float]:
        """An abscissa ``X >= 0`` with no zeros of ``F`` in ``Re s >= X``, or ``None``.

        Requires a single term with zero delay (the leading term).  Polynomial
        weights are bounded only when the leading weights are real and positive.
        """
        lead = [t for t in self.point_terms if t[2] == 0]
        if len(lead) != 1:
            return None
        C0, C1, _ = lead[0]
        rest = [t for t in self.point_terms if t[2] != 0]
        if C1 == 0:
            if C0 == 0 or any(c1 != 0 for c1 in (t[1] for t in rest)):
                return None
            scale = [abs(c0 / C0) for c0, _, _ in rest]
        else:
            if not (C0 > 0 and C1 > 0):
                return None
            scale = [math.sqrt(2) * max(abs(c0) / C0, abs(c1) / C1) for c0, c1, _ in rest]
        delays = [t[2] for t in rest]
        dist_mass = 0.0
        if self.distributed:
            lead_abs = abs(C0) if C1 == 0 else None
            if lead_abs is None:
                return None
            dist_mass = sum(abs(w) for w, _ in self.distributed) / lead_abs

        def bound(X):
            b = sum(c * math.exp(-d * X) for c, d in zip(scale, delays))
            if dist_mass:
                nu = np.linspace(0.0, self.tau, self.kernel.size)
                b += dist_mass * float(np.trapezoid(np.abs(self.kernel) * np.exp(-nu * X), nu))
            return b

        X = 0.0
        while bound(X) > 0.5:
            X = 1.0 if X == 0 else 2 * X
            if X > 1e6:
                return None
        return X


def from_neutral(spec: NeutralSpec) -> CharacteristicFunction:
    """``1 - sum a_i e^{-tau_i s} - sum b_j e^{-h_j s} int N e^{-nu s}`` for a neutral spec."""
    pts = [(1.0, 0.0, 0.0)] + [(-p.coefficient, 0.0, p.delay) for p in spec.point_terms]
    dist = [(-d.weight, d.shift) for d in spec.distributed]
    return CharacteristicFunction(tuple(pts), tuple(dist),
                                  spec.kernel if dist else None, spec.tau if dist else None)


def build_characteristic(plant: PlantConfig, gains: Optional[FeedbackGains], law: ControlLaw,
                         delta: float = 0.0) -> CharacteristicFunction:
    """Characteristic function of the closed loop ``law`` with actuator delay ``delta``."""
    if isinstance(law, Filtered):
        if not plant.uncoupled:
            raise UnsupportedLawError("filtered characteristic is available for uncoupled plants only")
        rf = plant.rho if law.rho is None else law.rho
        g = plant.rho * plant.q
        gf = rf * plant.q
        tau = plant.tau
        return CharacteristicFunction(((1.0, law.b, 0.0), (-g, -g * law.b, tau),
                                       (gf, gf * law.a, tau + delta)))
    return from_neutral(reduce_closed_loop(plant, gains, law, delta))


def eval_char(F: CharacteristicFunction, s) -> complex:
    return F.evaluate(s)


@dataclass(frozen=True)
class RootScanResult:
    region: tuple
    count: int
    roots: np.ndarray
    residuals: np.ndarray
    refined: bool
    min_abs: float
    requested_region: Optional[tuple] = None

    @property
    def rightmost_real_part(self) -> Optional[float]:
        if self.refined and self.roots.size:
            return float(self.roots.real.max())
        return None

    def verdict(self) -> dict:
        x0, x1, y0, y1 = self.region
        return {"region": [x0, x1, y0, y1], "cap": max(abs(y0), abs(y1)),
                "count": self.count, "refined": self.refined,
                "rightmost_real_part": self.rightmost_real_part,
                "min_abs_on_contour": self.min_abs}

    def roots_to_csv(self, path) -> None:
        order = np.lexsort((self.roots.imag, self.roots.real)) if self.roots.size else []
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("re", "im", "residual"))
            for k in order:
                r = self.roots[k]
                w.writerow((f"{r.real:.17g}", f"{r.imag:.17g}", f"{self.residuals[k]:.17g}"))


def _default_spacing(F: CharacteristicFunction) -> float:
    return min(0.05, 0.25 / max(F.max_delay, 1.0))


def _contour(region, spacing):
    x0, x1, y0, y1 = region
    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1), complex(x0, y0)]
    pts = []
    for a, b in zip(corners[:-1], corners[1:]):
        k = max(4, int(math.ceil(abs(b - a) / spacing)))
        pts.append(a + (b - a) * np.arange(k) / k)
    pts.append(np.array([corners[0]]))
    return np.concatenate(pts)


def _winding(F, region, spacing, max_rounds=40):
    """Winding number of ``F`` around ``region`` and the minimum ``|F|`` seen."""
    s = _contour(region, spacing)
    val, der = F.evaluate(s, derivative=True)
    for _ in range(max_rounds):
        if np.min(np.abs(val)) == 0.0:
            return float("nan"), 0.0
        ratio = val[1:] / val[:-1]
        dtheta = np.angle(ratio)
        logd = der / val
        pred = np.imag(0.5 * (logd[1:] + logd[:-1]) * np.diff(s))
        bad = (np.abs(dtheta) >= np.pi / 4) | (np.abs(dtheta - pred) > 0.1)
        if not np.any(bad):
            total = float(np.sum(dtheta)) / (2 * np.pi)
            return total, float(np.min(np.abs(val)))
        idx = np.nonzero(bad)[0]
        mid = 0.5 * (s[idx] + s[idx + 1])
        mv, md = F.evaluate(mid, derivative=True)
        s = np.insert(s, idx + 1, mid)
        val = np.insert(val, idx + 1, mv)
        der = np.insert(der, idx + 1, md)
        if s.size > 5_000_000:
            break
    raise ContourError(f"contour refinement did not settle on {region}",
                       float(np.min(np.abs(val))), region)


def _guard(F: CharacteristicFunction) -> float:
    return 1e-7 * max(sum(abs(t[0]) for t in F.point_terms), 1.0)


def _count(F, region, spacing, guard, max_doublings=4):
    prev = None
    h = spacing
    min_abs = np.inf
    for _ in range(max_doublings + 1):
        w, m = _winding(F, region, h)
        min_abs = min(min_abs, m)
        if m < guard:
            raise ContourError(f"|F| = {m:.3e} on the contour of {region}", m, region)
        k = int(round(w))
        if abs(w - k) > 1e-3:
            prev = None
        elif prev is not None and k == prev:
            return k, min_abs
        else:
            prev = k
        h /= 2
    raise ContourError(f"winding number did not stabilize on {region}", min_abs, region)


def _count_guarded(F, region, spacing, guard, retries=3):
    """Count zeros, nudging the rectangle by half a cell when a zero sits on the contour."""
    x0, x1, y0, y1 = region
    last = None
    for attempt in range(retries + 1):
        shift = 0.5 * spacing * attempt
        reg = (x0 + shift, x1 + shift, y0 - shift, y1 + shift)
        try:
            k, m = _count(F, reg, spacing, guard)
            return k, m, reg
        except ContourError as err:
            last = err
    raise ContourError(f"contour too close to a zero after {retries} retries: {last}",
                       last.min_abs, region)


def _newton(F, s0, tol=1e-9, max_iter=60):
    s = complex(s0)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            f, df = F.evaluate(s, derivative=True)
            step = f / df if df != 0 else complex("nan")
            if not np.isfinite(step):
                return s, float("inf"), False
            s -= step
            if abs(step) < 1e-14 * max(1.0, abs(s)):
                break
        f = F.evaluate(s)
    return s, abs(f), bool(abs(f) <= tol)


def _locate(F, region, count, spacing, guard, tol, depth=0):
    """Roots inside ``region`` by subdivision and Newton polishing."""
    if count == 0:
        return []
    x0, x1, y0, y1 = region
    w, h = x1 - x0, y1 - y0
    if count == 1 or max(w, h) < 1e-9 or depth > 80:
        s, res, ok = _newton(F, complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)), tol)
        pad = 1e-9 * max(1.0, abs(s))
        inside = x0 - pad <= s.real <= x1 + pad and y0 - pad <= s.imag <= y1 + pad
        if ok and inside:
            return [s] * count
        if max(w, h) < 1e-9 or depth > 80:
            raise ContourError(f"root refinement failed in {region}", res, region)
    sub_spacing = min(spacing, 0.25 * max(min(w, h), 1e-12))
    for frac in SPLIT_FRACTIONS:
        if w >= h:
            xm = x0 + frac * w
            a, b = (x0, xm, y0, y1), (xm, x1, y0, y1)
        else:
            ym = y0 + frac * h
            a, b = (x0, x1, y0, ym), (x0, x1, ym, y1)
        try:
            ca, _ = _count(F, a, sub_spacing, guard)
        except ContourError:
            continue
        cb = count - ca
        if cb < 0:
            continue
        return (_locate(F, a, ca, spacing, guard, tol, depth + 1)
                + _locate(F, b, cb, spacing, guard, tol, depth + 1))
    raise ContourError(f"could not split {region} away from its zeros", None, region)


def count_rhp_roots(F: CharacteristicFunction, region: Sequence[float],
                    spacing: Optional[float] = None, refine: bool = True,
                    max_refine: int = 64, tol: float = 1e-9,
                    retries: int = 3) -> RootScanResult:
    """Zeros of ``F`` inside the rectangle ``(x0, x1, y0, y1)`` by the argument principle.

    The winding number is accumulated from principal argument increments along an
    adaptively refined contour; the base density is halved until two consecutive
    counts agree.  With ``refine`` and at most ``max_refine`` zeros, each zero is
    isolated by subdivision and polished by Newton's method to ``|F| <= tol``.

    Raises
    ------
    ContourError
        If ``|F|`` stays too small on the contour after ``retries`` half-cell nudges.
    """
    x0, x1, y0, y1 = map(float, region)
    if not (x1 > x0 and y1 > y0):
        raise PreconditionError("region must be (x0, x1, y0, y1) with x0 < x1 and y0 < y1")
    spacing = _default_spacing(F) if spacing is None else float(spacing)
    guard = _guard(F)
    count, min_abs, used = _count_guarded(F, (x0, x1, y0, y1), spacing, guard, retries)
    roots: list = []
    refined = False
    if refine and 0 < count <= max_refine:
        roots = _locate(F, used, count, spacing, guard, tol)
        refined = True
    elif count == 0:
        refined = True
    arr = np.array(roots, dtype=complex)
    res = np.abs(F.evaluate(arr)) if arr.size else np.zeros(0)
    return RootScanResult(region=used, count=count, roots=arr, residuals=res,
                          refined=refined, min_abs=min_abs,
                          requested_region=(x0, x1, y0, y1))


def rightmost_root_estimate(F: CharacteristicFunction, bracket: Sequence[float] = (0.01, None),
                            cap: float = 100.0, tol: float = 1e-3,
                            spacing: Optional[float] = None) -> Optional[float]:
    """Abscissa of the rightmost zero with ``|Im s| <= cap`` to within ``tol``.

    Returns ``None`` when the strip ``Re s >= bracket[0]`` holds no zero below
    the cap.  The upper end of the bracket defaults to a provable zero-free
    abscissa when one is available.
    """
    lo, hi = bracket
    if hi is None:
        hi = F.root_free_abscissa()
        if hi is None:
            raise PreconditionError("no zero-free abscissa known; give the bracket explicitly")
        hi = max(hi, lo + tol)
    spacing = _default_spacing(F) if spacing is None else spacing
    guard = _guard(F)

    def any_right_of(x):
        k, _, _ = _count_guarded(F, (x, hi, -cap, cap), spacing, guard)
        return k > 0

    if not any_right_of(lo):
        return None
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if any_right_of(mid):
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class Certificate:
    margin: float
    sup_distributed: float
    certified: bool
    cap: float


def positivity_certificate(F: CharacteristicFunction, cap: float,
                           re_values: Optional[np.ndarray] = None,
                           im_step: Optional[float] = None) -> Certificate:
    """Compare the point-term margin with the sampled size of the distributed part.

    ``margin = |c_0| - sum |c_i|`` over point terms with nonzero delay.  When it
    exceeds the supremum of the distributed part over the sampled grid, ``F``
    has no zeros on that part of the closed right half-plane.
    """
    if F.has_polynomial_weights:
        raise PreconditionError("certificate needs constant point coefficients")
    lead = sum(c0 for c0, _, d in F.point_terms if d == 0)
    margin = abs(lead) - sum(abs(c0) for c0, _, d in F.point_terms if d != 0)
    sup = 0.0
    if F.distributed:
        re_values = np.round(np.arange(0, 101) * 0.01, 2) if re_values is None else re_values
        im_step = min(0.1, 0.5 / max(F.max_delay, 1.0)) if im_step is None else im_step
        ims = np.arange(0.0, cap + im_step, im_step)
        for x in re_values:
            sup = max(sup, float(np.max(np.abs(F.distributed_part(x + 1j * ims)))))
    return Certificate(margin=margin, sup_distributed=sup, certified=margin > sup, cap=cap)
