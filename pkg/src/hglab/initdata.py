"""Constraint-satisfying Cauchy data, the reduced-system slice built from it, and the mass split."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.fft import dstn, idstn
from scipy.special import erf

from . import fd
from .blocks import Grid, MetricBlock
from .geometry import metric_inverse, ricci_fd


class DataGenerationError(RuntimeError):
    pass


def cutoff_chi(s):
    """Quintic smoothstep: 0 for s <= 1/2, 1 for s >= 3/4, C^2 at both joints."""
    s = np.asarray(s, dtype=float)
    x = np.clip((s - 0.5) / 0.25, 0.0, 1.0)
    out = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    return out if out.ndim else float(out)


def cutoff_chi_prime(s):
    s = np.asarray(s, dtype=float)
    x = np.clip((s - 0.5) / 0.25, 0.0, 1.0)
    out = 30.0 * x * x * (1.0 - x) ** 2 / 0.25
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GaussianProfile:
    sigma: float = 1.5
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, X, Y, Z):
        c = self.center
        return np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) / self.sigma ** 2)


@dataclass
class CauchyData:
    grid: Grid
    g0: np.ndarray            # (3, 3, nx, ny, nz)
    k0: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    M: float
    epsilon: float
    phi: Optional[np.ndarray] = None   # conformal factor when g0 = phi^4 delta


@dataclass
class FullSlice:
    grid: Grid
    g: np.ndarray             # (4, 4, nx, ny, nz)
    dtg: np.ndarray
    psi: np.ndarray
    dtpsi: np.ndarray
    lapse: np.ndarray         # a, not a^2
    M: float


# -- Poisson solver ---------------------------------------------------------

def _dst_symbol(n: int, h: float) -> np.ndarray:
    """Eigenvalues of the fourth-order second difference with odd reflection."""
    th = np.pi * np.arange(1, n + 1) / (n + 1)
    return (-2.0 * np.cos(2 * th) + 32.0 * np.cos(th) - 30.0) / (12.0 * h * h)


def poisson_dirichlet(rhs: np.ndarray, h: float) -> np.ndarray:
    """Solve L_h w = rhs on interior nodes with w = 0 on the boundary nodes.

    ``rhs`` has the full grid shape; only interior nodes are used.  L_h is the
    fourth-order Laplacian with odd reflection across the boundary, which DST-I
    diagonalises exactly.
    """
    inner = rhs[1:-1, 1:-1, 1:-1]
    lam = [_dst_symbol(m, h) for m in inner.shape]
    denom = lam[0][:, None, None] + lam[1][None, :, None] + lam[2][None, None, :]
    w = idstn(dstn(inner, type=1) / denom, type=1)
    out = np.zeros_like(rhs)
    out[1:-1, 1:-1, 1:-1] = w
    return out


def _model_potential(r: np.ndarray, s: float) -> np.ndarray:
    """erf(r/s)/r, the potential of a unit Gaussian charge (Laplacian integrates to -4 pi)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = erf(r / s) / r
    return np.where(r > 1e-12, out, 2.0 / (np.sqrt(np.pi) * s))


def _reflected_laplacian(u: np.ndarray, h: float) -> np.ndarray:
    """L_h of a field that vanishes on the boundary nodes, matching :func:`poisson_dirichlet`."""
    p = np.pad(u, 1, mode="reflect", reflect_type="odd")
    p[0], p[-1] = -p[2], -p[-3]
    p[:, 0], p[:, -1] = -p[:, 2], -p[:, -3]
    p[:, :, 0], p[:, :, -1] = -p[:, :, 2], -p[:, :, -3]
    return fd.laplacian(p, h)[1:-1, 1:-1, 1:-1]


def generate_small_data(profile, epsilon: float, grid: Grid, tol: float = 1e-14,
                        max_iter: int = 60) -> CauchyData:
    """Time-symmetric data with psi0 = eps * profile and g0 = phi^4 delta.

    phi = 1 + u_model + w solves 8 L_h phi = -|grad psi0|^2 phi, where u_model
    is a Gaussian-charge potential carrying the monopole and w vanishes on the
    box boundary.  The monopole weight is updated at each fixed-point sweep so
    that w has no net charge.
    """
    if epsilon > 0.1:
        raise DataGenerationError("data generation failed: epsilon above 0.1")
    h = grid.dx
    X, Y, Z = grid.mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z)
    psi0 = epsilon * profile(X, Y, Z)
    dpsi = fd.gradient(psi0, h)
    q = np.sum(dpsi * dpsi, axis=0)                   # |grad psi0|^2
    s = getattr(profile, "sigma", 1.0)
    base = _model_potential(r, s)
    lap_base = fd.laplacian(base, h)
    u = np.zeros_like(q)
    vol = h ** 3
    for it in range(max_iter):
        f = -q * (1.0 + u) / 8.0
        A = -np.sum(f[1:-1, 1:-1, 1:-1]) * vol / (4.0 * np.pi)
        w = poisson_dirichlet(f - A * lap_base, h)
        new = A * base + w
        delta = float(np.max(np.abs(new - u)))
        u = new
        if not np.isfinite(delta) or delta > 1e3:
            raise DataGenerationError("data generation failed: fixed-point iteration diverged")
        if delta <= tol * max(1.0, float(np.max(np.abs(u)))):
            break
    else:
        raise DataGenerationError("data generation failed: no convergence")
    phi = 1.0 + u
    g0 = np.zeros((3, 3) + q.shape)
    for i in range(3):
        g0[i, i] = phi ** 4
    data = CauchyData(grid, g0, np.zeros_like(g0), psi0, np.zeros_like(psi0), 0.0, epsilon, phi)
    data.M = read_mass(data)
    return data


def read_mass(data: CauchyData, shell: float = 0.2) -> float:
    """Fit (g0_xx - 1) r = M + c / r over the outer radial shell of the inscribed ball."""
    X, Y, Z = data.grid.mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z)
    R = min(data.grid.upper[i] - 0.0 for i in range(3))
    sel = (r >= (1.0 - shell) * R) & (r <= R)
    y = (data.g0[0, 0][sel] - 1.0) * r[sel]
    A = np.stack([np.ones(sel.sum()), 1.0 / r[sel]], axis=1)
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(coef[0])


def flat_data(grid: Grid) -> CauchyData:
    shape = grid.shape
    g0 = np.zeros((3, 3) + shape)
    for i in range(3):
        g0[i, i] = 1.0
    z = np.zeros(shape)
    return CauchyData(grid, g0, np.zeros_like(g0), z, z.copy(), 0.0, 0.0, np.ones(shape))


# -- constraints ------------------------------------------------------------

def _spatial_ricci_scalar(g0: np.ndarray, grid: Grid) -> np.ndarray:
    g4 = np.zeros((4, 4) + g0.shape[2:])
    g4[0, 0] = -1.0
    g4[1:, 1:] = g0
    block = MetricBlock(np.stack([g4] * 5), grid, dt=1.0)
    R = ricci_fd(block)[1:, 1:]
    gi = metric_inverse(g0)
    return np.einsum("ij...,ij...->...", gi, R)


def constraint_residual(data: CauchyData) -> Tuple[np.ndarray, np.ndarray]:
    """Hamiltonian and momentum residuals.

    H = R0 - |k|^2 + (tr k)^2 - psi1^2 - |grad psi0|^2_g,
    P_i = D_j k^j_i - D_i tr k + psi1 d_i psi0.
    With a conformal factor present, R0 = -8 phi^-5 L_h phi uses the solver's
    Laplacian; otherwise R0 comes from finite differences of the Christoffel symbols.
    """
    h = data.grid.dx
    g0, k0 = data.g0, data.k0
    gi = metric_inverse(g0)
    if data.phi is not None:
        lap = _reflected_laplacian(data.phi - 1.0, h) if data.phi.shape[0] > 2 else 0.0
        # outer nodes carry the Dirichlet values and are not solver unknowns
        R0 = -8.0 * lap / data.phi ** 5
    else:
        R0 = _spatial_ricci_scalar(g0, data.grid)
    k_up = np.einsum("ia...,jb...,ab...->ij...", gi, gi, k0)
    kk = np.einsum("ij...,ij...->...", k_up, k0)
    trk = np.einsum("ij...,ij...->...", gi, k0)
    dpsi = fd.gradient(data.psi0, h)
    grad2 = np.einsum("ij...,i...,j...->...", gi, dpsi, dpsi)
    ham = R0 - kk + trk ** 2 - data.psi1 ** 2 - grad2

    dg = fd.gradient(g0, h)                               # dg[c, a, b]
    Gam = 0.5 * (np.einsum("ajb...->abj...", dg) + np.einsum("bja...->abj...", dg) - dg)
    # Gam[c, a, b] lower-first Christoffel Gamma_{c a b}; raise first index
    Gup = np.einsum("lc...,cab...->lab...", gi, Gam)
    dk = fd.gradient(k0, h)                               # dk[c, a, b] = d_c k_ab
    # D_c k_ab = d_c k_ab - G^l_ca k_lb - G^l_cb k_al
    Dk = dk - np.einsum("lca...,lb...->cab...", Gup, k0) - np.einsum("lcb...,al...->cab...", Gup, k0)
    div = np.einsum("jc...,cji...->i...", gi, Dk)
    mom = div - fd.gradient(trk, h) + data.psi1 * dpsi
    return ham, mom


# -- reduced-system slice ---------------------------------------------------

def lapse_squared(r: np.ndarray, M: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - M * cutoff_chi(r) / r
    return np.where(r > 0, out, 1.0)


def build_cauchy_data(data: CauchyData, threshold: float = 1e-6, margin: int = 2) -> FullSlice:
    """Initial values of (g, d_t g, psi, d_t psi) in wave coordinates.

    Spatial derivatives use the same stencils as the evolution, so the
    contracted Christoffel vector of the result vanishes to rounding.
    """
    ham, mom = constraint_residual(data)
    worst = max(float(np.max(np.abs(ham[fd.interior(margin)]))),
                float(np.max(np.abs(mom[(slice(None),) + fd.interior(margin)[1:]]))))
    if worst > threshold:
        raise ValueError(f"constraint residual {worst:.3e} above threshold {threshold:.1e}")
    h = data.grid.dx
    r = data.grid.radius()
    a2 = lapse_squared(r, data.M)
    a = np.sqrt(a2)
    shape = r.shape
    g = np.zeros((4, 4) + shape)
    dtg = np.zeros_like(g)
    g[0, 0] = -a2
    g[1:, 1:] = data.g0
    gi = metric_inverse(data.g0)
    dtg[1:, 1:] = -2.0 * a * data.k0
    dtg[0, 0] = 2.0 * a ** 3 * np.einsum("ij...,ij...->...", gi, data.k0)
    dg0 = fd.gradient(data.g0, h)                         # dg0[j, i, l] = d_j g0_il
    trace_term = np.einsum("ij...,lij...->l...", gi, dg0)
    div_term = np.einsum("ij...,jil...->l...", gi, dg0)
    da2 = fd.gradient(a2, h)
    for l in range(3):
        val = a2 * div_term[l] - 0.5 * a2 * trace_term[l] - 0.5 * da2[l]
        dtg[0, l + 1] = dtg[l + 1, 0] = val
    return FullSlice(data.grid, g, dtg, data.psi0.copy(), a * data.psi1, a, data.M)


# -- mass split -------------------------------------------------------------

def h0_field(grid: Grid, t: float, M: float) -> Tuple[np.ndarray, np.ndarray]:
    """Schwarzschild part chi(r/t) chi(r) M/r delta and its time derivative, as (4, 4, ...) arrays.

    At t = 0 the factor chi(r/t) is taken as 1 for r > 0.
    """
    r = grid.radius()
    with np.errstate(divide="ignore", invalid="ignore"):
        base = np.where(r > 0, cutoff_chi(r) * M / np.where(r > 0, r, 1.0), 0.0)
        if t > 0:
            c = cutoff_chi(r / t)
            dc = cutoff_chi_prime(r / t) * (-r / t ** 2)
        else:
            c = np.ones_like(r)
            dc = np.zeros_like(r)
    scal, dscal = c * base, dc * base
    h0 = np.zeros((4, 4) + r.shape)
    dh0 = np.zeros_like(h0)
    for i in range(4):
        h0[i, i] = scal
        dh0[i, i] = dscal
    return h0, dh0


def mass_split(h: np.ndarray, grid: Grid, t: float, M: float) -> Tuple[np.ndarray, np.ndarray]:
    """(h0, h1) with h = h0 + h1 for a single-level (4, 4, ...) perturbation."""
    h0, _ = h0_field(grid, t, M)
    return h0, h - h0


def _derivative_tower(f: np.ndarray, h: float, order: int):
    """Yield arrays of all ordered spatial derivatives of f up to ``order``."""
    cur = f[None]
    yield cur
    for _ in range(order):
        cur = np.concatenate([fd.d1(cur, ax, h) for ax in fd.SPATIAL_AXES])
        yield cur


def initial_energy(slice_: FullSlice, N: int = 0, gamma: float = 0.25, margin: int = 3) -> float:
    """Weighted Sobolev size of the data: sum over k <= N of the L2 norms of
    (1+r)^{1/2+gamma+k} grad grad^k h1_0 and grad^k k0, and the same for psi.

    Here h1_0 = g0 - delta - chi(r) M/r delta and k0 = -d_t g_ij / (2a).
    """
    if N > 6:
        raise ValueError("initial_energy supports N <= 6")
    grid = slice_.grid
    h = grid.dx
    r = grid.radius()
    inner = fd.interior(margin)
    chi_m = np.where(r > 0, cutoff_chi(r) * slice_.M / np.where(r > 0, r, 1.0), 0.0)
    h1 = slice_.g[1:, 1:].copy()
    for i in range(3):
        h1[i, i] -= 1.0 + chi_m
    k0 = -slice_.dtg[1:, 1:] / (2.0 * slice_.lapse)
    psi1 = slice_.dtpsi / slice_.lapse
    vol = h ** 3
    total = 0.0
    for f, needs_grad in ((h1, True), (k0, False), (slice_.psi, True), (psi1, False)):
        f = f.reshape((-1,) + r.shape)
        for k, tower in enumerate(_derivative_tower(f, h, N)):
            wgt = (1.0 + r) ** (0.5 + gamma + k)
            arr = tower
            if needs_grad:
                arr = np.concatenate([fd.d1(tower, ax, h) for ax in fd.SPATIAL_AXES])
            dens = np.sum(arr * arr, axis=0) * wgt ** 2
            total += float(np.sqrt(np.sum(dens[inner]) * vol))
    return total


def third_derivative_scale(g: np.ndarray, h: float, margin: int = 3) -> float:
    """sup over components and axes of |d_i^3 g|, used for truncation floors."""
    worst = 0.0
    for ax in fd.SPATIAL_AXES:
        d3 = fd.d1(fd.d2(g, ax, h), ax, h)
        worst = max(worst, float(np.max(np.abs(d3[fd.interior(margin)]))))
    return worst
