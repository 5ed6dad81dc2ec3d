"""Backstepping kernels on the triangle 0 <= xi <= x <= 1 and their inverses.

The four kernel PDEs are integrated along their characteristic lines, which
turns them into coupled Volterra integral equations:

* ``K^uu`` and ``K^vv`` have characteristics parallel to the diagonal and are
  integrated from the edge ``xi = 0``, where they are tied to ``K^uv`` and
  ``K^vu`` by the distal boundary condition.
* ``K^uv`` and ``K^vu`` have transverse characteristics and are integrated
  from the diagonal, where their values are prescribed by the couplings.

Arrays are stored as full ``(n+1, n+1)`` matrices indexed ``[i, j]`` for the
node ``(x_i, xi_j)``; entries above the diagonal are zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConvergenceError, GridMismatchError, PreconditionError
from .model import PlantConfig

KERNEL_FIELDS = ("uu", "uv", "vu", "vv")
INVERSE_FIELDS = ("aa", "ab", "ba", "bb")


@njit(cache=True)
def _cross_family(F, diag_term, theta, dr, sign):
    # Trapezoid along the line from the diagonal point to (x_i, xi_j).  The
    # quadrature nodes sit where the line crosses the bands x - xi = k h, and
    # the integrand is linearly interpolated along each band.
    n = F.shape[0] - 1
    out = np.zeros_like(F)
    for d in range(n + 1):
        for j in range(n - d + 1):
            acc = 0.0
            if d > 0:
                for k in range(d + 1):
                    pos = j + (d - k) * theta
                    i0 = int(np.floor(pos))
                    f = pos - i0
                    val = F[i0 + k, i0]
                    if f > 1e-12:
                        val = (1.0 - f) * val + f * F[i0 + 1 + k, i0 + 1]
                    if k == 0 or k == d:
                        acc += 0.5 * dr * val
                    else:
                        acc += dr * val
            out[j + d, j] = diag_term[j + d, j] + sign * acc
    return out


@njit(cache=True)
def _diag_family(G, edge, coef, h):
    n = G.shape[0] - 1
    out = np.zeros_like(G)
    for d in range(n + 1):
        acc = 0.0
        out[d, 0] = edge[d]
        for j in range(1, n - d + 1):
            acc += 0.5 * h * (G[j - 1 + d, j - 1] + G[j + d, j])
            out[j + d, j] = edge[d] + coef * acc
    return out


class _Geometry:
    """Grid data for one plant at one resolution."""

    def __init__(self, plant: PlantConfig, n: int):
        if n < 2:
            raise PreconditionError("kernel grid needs n >= 2")
        lam, mu = plant.lam, plant.mu
        self.plant = plant
        self.n = n
        self.h = 1.0 / n
        self.x = np.linspace(0.0, 1.0, n + 1)
        self.s_pm = plant.sigma_pm(self.x)
        self.s_mp = plant.sigma_mp(self.x)
        self.theta_uv = mu / (lam + mu)
        self.theta_vu = lam / (lam + mu)
        self.dr = self.h / (lam + mu)
        i, j = np.tril_indices(n + 1)
        d = i - j
        self.diag_uv = np.zeros((n + 1, n + 1))
        self.diag_vu = np.zeros((n + 1, n + 1))
        self.diag_uv[i, j] = plant.sigma_pm((j + d * self.theta_uv) * self.h) / (lam + mu)
        self.diag_vu[i, j] = -plant.sigma_mp((j + d * self.theta_vu) * self.h) / (lam + mu)

    def t_uv(self, kuu):
        return _cross_family(kuu * self.s_pm[None, :], self.diag_uv, self.theta_uv, self.dr, -1.0)

    def t_vu(self, kvv):
        return _cross_family(kvv * self.s_mp[None, :], self.diag_vu, self.theta_vu, self.dr, 1.0)

    def t_uu(self, kuv):
        p = self.plant
        edge = (p.mu / (p.lam * p.q)) * kuv[:, 0]
        return _diag_family(kuv * self.s_mp[None, :], edge, -1.0 / p.lam, self.h)

    def t_vv(self, kvu):
        p = self.plant
        edge = (p.lam * p.q / p.mu) * kvu[:, 0]
        return _diag_family(kvu * self.s_pm[None, :], edge, 1.0 / p.mu, self.h)


@dataclass(frozen=True, eq=False)
class KernelSet:
    uu: np.ndarray
    uv: np.ndarray
    vu: np.ndarray
    vv: np.ndarray
    iterations: int = 0
    last_update: float = 0.0

    @property
    def n(self) -> int:
        return self.uu.shape[0] - 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n + 1)

    def fields(self):
        return {"uu": self.uu, "uv": self.uv, "vu": self.vu, "vv": self.vv}

    def to_csv(self, path) -> None:
        _write_triangle_csv(path, self.n, ("Kuu", "Kuv", "Kvu", "Kvv"),
                            (self.uu, self.uv, self.vu, self.vv))

    @classmethod
    def from_csv(cls, path) -> "KernelSet":
        arrays = _read_triangle_csv(path, ("Kuu", "Kuv", "Kvu", "Kvv"))
        return cls(*arrays)


@dataclass(frozen=True, eq=False)
class InverseKernelSet:
    aa: np.ndarray
    ab: np.ndarray
    ba: np.ndarray
    bb: np.ndarray
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.aa.shape[0] - 1

    def fields(self):
        return {"aa": self.aa, "ab": self.ab, "ba": self.ba, "bb": self.bb}


def kernel_operator(K: KernelSet, plant: PlantConfig) -> KernelSet:
    """One application of the characteristic-line integral operator (Jacobi form)."""
    geo = _Geometry(plant, K.n)
    return KernelSet(uu=geo.t_uu(K.uv), uv=geo.t_uv(K.uu),
                     vu=geo.t_vu(K.vv), vv=geo.t_vv(K.vu))


def solve_kernels(plant: PlantConfig, n: int, tol: float = 1e-10,
                  max_iterations: int = 200) -> KernelSet:
    """Successive approximations for the kernel integral equations.

    Each sweep updates ``K^uv, K^vu`` from the previous ``K^uu, K^vv`` and then
    ``K^uu, K^vv`` from the fresh transverse kernels.  Iteration stops once the
    max-norm change between sweeps drops to ``tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iterations`` sweeps do not reach ``tol``.
    """
    geo = _Geometry(plant, n)
    shape = (n + 1, n + 1)
    kuu, kuv, kvu, kvv = (np.zeros(shape) for _ in range(4))
    change = np.inf
    for it in range(1, max_iterations + 1):
        nuv = geo.t_uv(kuu)
        nvu = geo.t_vu(kvv)
        nuu = geo.t_uu(nuv)
        nvv = geo.t_vv(nvu)
        change = max(np.abs(nuu - kuu).max(), np.abs(nuv - kuv).max(),
                     np.abs(nvu - kvu).max(), np.abs(nvv - kvv).max())
        kuu, kuv, kvu, kvv = nuu, nuv, nvu, nvv
        if not np.isfinite(change):
            break
        if change <= tol:
            return KernelSet(kuu, kuv, kvu, kvv, iterations=it, last_update=float(change))
    raise ConvergenceError("kernel iteration did not converge", float(change), max_iterations)


def verify_kernel_residual(K: KernelSet, plant: PlantConfig) -> dict:
    """Max-norm defect of each kernel's integral equation over the triangle."""
    TK = kernel_operator(K, plant)
    return {name: float(np.abs(K.fields()[name] - TK.fields()[name]).max())
            for name in KERNEL_FIELDS}


def check_boundary_data(K: KernelSet, plant: PlantConfig) -> dict:
    """Max defects of the diagonal and ``xi = 0`` conditions, node by node."""
    x = K.x
    lam, mu, q = plant.lam, plant.mu, plant.q
    c = lam * q / mu
    return {
        "uv_diagonal": float(np.abs(np.diag(K.uv) - plant.sigma_pm(x) / (lam + mu)).max()),
        "vu_diagonal": float(np.abs(np.diag(K.vu) + plant.sigma_mp(x) / (lam + mu)).max()),
        "uv_edge": float(np.abs(K.uv[:, 0] - c * K.uu[:, 0]).max()),
        "vv_edge": float(np.abs(K.vv[:, 0] - c * K.vu[:, 0]).max()),
    }


def volterra_compose(K: dict, L: dict, h: float) -> dict:
    """Kernel of the composed operator, ``(K*L)(x,xi) = int_xi^x K(x,s) L(s,xi) ds``.

    Both arguments map ``(row, col)`` family pairs, with families 0 and 1, to
    lower-triangular arrays.  Trapezoidal quadrature in ``s``.
    """
    out = {}
    for a in (0, 1):
        for b in (0, 1):
            acc = np.zeros_like(K[0, 0])
            for c in (0, 1):
                k, l = K[a, c], L[c, b]
                acc += h * (k @ l)
                acc -= 0.5 * h * (k * np.diag(l)[None, :] + np.diag(k)[:, None] * l)
            out[a, b] = np.tril(acc)
    return out


def _blocks(K: KernelSet) -> dict:
    return {(0, 0): K.uu, (0, 1): K.uv, (1, 0): K.vu, (1, 1): K.vv}


def _inv_blocks(L: InverseKernelSet) -> dict:
    return {(0, 0): L.aa, (0, 1): L.ab, (1, 0): L.ba, (1, 1): L.bb}


def solve_inverse_kernels(K: KernelSet, plant: PlantConfig | None = None,
                          tol: float = 1e-10, max_iterations: int = 200) -> InverseKernelSet:
    """Inverse transform kernels from the Neumann series of ``L = K + K*L``."""
    h = 1.0 / K.n
    kb = _blocks(K)
    lb = dict(kb)
    change = np.inf
    for it in range(1, max_iterations + 1):
        comp = volterra_compose(kb, lb, h)
        new = {key: kb[key] + comp[key] for key in kb}
        change = max(np.abs(new[key] - lb[key]).max() for key in kb)
        lb = new
        if not np.isfinite(change):
            break
        if change <= tol:
            return InverseKernelSet(lb[0, 0], lb[0, 1], lb[1, 0], lb[1, 1], iterations=it)
    raise ConvergenceError("inverse kernel series did not converge", float(change), max_iterations)


def reciprocity_residual(K: KernelSet, L: InverseKernelSet) -> float:
    if K.n != L.n:
        raise GridMismatchError("direct and inverse kernels on different grids")
    kb, lb = _blocks(K), _inv_blocks(L)
    comp = volterra_compose(kb, lb, 1.0 / K.n)
    return float(max(np.abs(lb[key] - kb[key] - comp[key]).max() for key in kb))


@dataclass(frozen=True, eq=False)
class FeedbackGains:
    """Boundary gains on ``xi`` in [0, 1] and the distributed-delay kernel on [0, tau]."""

    xi: np.ndarray
    n_alpha: np.ndarray
    n_beta: np.ndarray
    nu: np.ndarray
    n_tilde: np.ndarray
    tau: float

    @property
    def d_nu(self) -> float:
        return float(self.nu[1] - self.nu[0])


def delay_kernel(nu, xi, n_alpha, n_beta, plant: PlantConfig) -> np.ndarray:
    """Distributed-delay kernel obtained by following characteristics back to x = 1.

    On ``[0, 1/mu)`` the kernel samples the ``beta`` gain, on ``[1/mu, tau]`` the
    ``alpha`` gain; the ``alpha`` branch carries the distal reflection ``q``
    because ``alpha`` reaches x = 1 after reflecting at x = 0.
    """
    lam, mu, q = plant.lam, plant.mu, plant.q
    nu = np.asarray(nu, dtype=float)
    split = 1.0 / mu
    on_beta = nu < split - 1e-12 * plant.tau
    beta_part = mu * np.interp(1.0 - mu * nu, xi, n_beta)
    alpha_part = q * lam * np.interp(lam * nu - lam / mu, xi, n_alpha)
    return np.where(on_beta, beta_part, alpha_part)


def compute_feedback_gains(K: KernelSet, L: InverseKernelSet, plant: PlantConfig) -> FeedbackGains:
    if K.n != L.n:
        raise GridMismatchError(f"kernel grids differ: n={K.n} vs n={L.n}")
    n = K.n
    xi = np.linspace(0.0, 1.0, n + 1)
    rho = plant.rho
    n_alpha = L.ba[n, :] - rho * L.aa[n, :]
    n_beta = L.bb[n, :] - rho * L.ab[n, :]
    tau = plant.tau
    d_nu = 1.0 / (n * max(plant.lam, plant.mu))
    m = max(1, int(round(tau / d_nu)))
    nu = np.linspace(0.0, tau, m + 1)
    n_tilde = delay_kernel(nu, xi, n_alpha, n_beta, plant)
    return FeedbackGains(xi=xi, n_alpha=n_alpha, n_beta=n_beta, nu=nu, n_tilde=n_tilde, tau=tau)


def design(plant: PlantConfig, n: int, tol: float = 1e-10, max_iterations: int = 200):
    """Kernels, inverse kernels and feedback gains in one call."""
    K = solve_kernels(plant, n, tol=tol, max_iterations=max_iterations)
    L = solve_inverse_kernels(K, plant, tol=tol, max_iterations=max_iterations)
    return K, L, compute_feedback_gains(K, L, plant)


def _write_triangle_csv(path, n, names, arrays):
    i, j = np.tril_indices(n + 1)
    x = np.linspace(0.0, 1.0, n + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "xi", *names])
        for a, b in zip(i, j):
            w.writerow([f"{x[a]:.17g}", f"{x[b]:.17g}"] + [f"{arr[a, b]:.17g}" for arr in arrays])


def _read_triangle_csv(path, names):
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    m = len(rows)
    n = int(round((np.sqrt(8 * m + 1) - 3) / 2))
    if (n + 1) * (n + 2) // 2 != m:
        raise GridMismatchError(f"{m} rows do not form a triangular grid")
    i, j = np.tril_indices(n + 1)
    out = []
    for name in names:
        arr = np.zeros((n + 1, n + 1))
        arr[i, j] = [float(r[name]) for r in rows]
        out.append(arr)
    return out
