"""Metric differential geometry on grid windows.

Pointwise algebra runs in a point-first layout (``(n, 4, 4)`` metrics and
``(n, 4, 4, 4)`` derivative arrays ``D[n, c, a, b] = d_c g_ab``) so that the
index contractions become batched matrix products.  Public functions accept
and return grid-last arrays such as ``(4, 4, nx, ny, nz)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import fd
from .blocks import MetricBlock, ScalarBlock
from .nullframe import ETA, quadratic_P


class GeometryError(ValueError):
    pass


# -- layout helpers ---------------------------------------------------------

def to_points(a: np.ndarray, nidx: int) -> np.ndarray:
    """Move the leading ``nidx`` index axes last and flatten the grid."""
    idx_shape = a.shape[:nidx]
    moved = np.moveaxis(a, tuple(range(nidx)), tuple(range(-nidx, 0)))
    return moved.reshape((-1,) + idx_shape)


def from_points(a: np.ndarray, nidx: int, grid_shape: Tuple[int, ...]) -> np.ndarray:
    idx_shape = a.shape[1:]
    out = a.reshape(tuple(grid_shape) + idx_shape)
    return np.moveaxis(out, tuple(range(-nidx, 0)), tuple(range(nidx)))


def minkowski_field(grid_shape: Tuple[int, ...]) -> np.ndarray:
    return np.broadcast_to(ETA.reshape((4, 4) + (1,) * len(grid_shape)), (4, 4) + tuple(grid_shape)).copy()


# -- pointwise kernels (point-first layout) ---------------------------------

def inverse_points(g: np.ndarray) -> np.ndarray:
    """Batched inverse of ``(n, 4, 4)`` metrics; raises on (near) singular points."""
    det = np.linalg.det(g)
    bad = np.abs(det) < 1e-12
    if np.any(bad) or not np.all(np.isfinite(det)):
        k = int(np.argmax(bad | ~np.isfinite(det)))
        raise GeometryError(f"singular metric at flat grid index {k}")
    return np.linalg.inv(g)


def christoffel_lower_points(D: np.ndarray) -> np.ndarray:
    """Gamma_{l m n} = 1/2 (d_m g_ln + d_n g_lm - d_l g_mn)."""
    return 0.5 * (np.swapaxes(D, 1, 2) + np.transpose(D, (0, 2, 3, 1)) - D)


def christoffel_points(gi: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Gamma^l_{m n} with the first index raised by ``gi``."""
    n = gi.shape[0]
    Gl = christoffel_lower_points(D)
    return (gi @ Gl.reshape(n, 4, 16)).reshape(n, 4, 4, 4)


def gauge_points(gi: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Contracted Christoffel vector Gamma^l = g^{ab} Gamma^l_{ab}."""
    G = christoffel_points(gi, D)
    return np.einsum("nab,nlab->nl", gi, G)


def reduced_source_points(gi: np.ndarray, D: np.ndarray) -> np.ndarray:
    """S_ab = 2 g^{cd} g^{ef} (d_e g_ca d_f g_db - Gamma_ace Gamma_bdf)."""
    n = gi.shape[0]
    A = (gi @ D.reshape(n, 4, 16)).reshape(n, 4, 4, 4)        # A[f,c,a] = g^{fe} d_e g_ca
    E = gi[:, None] @ D                                          # E[f,c,b] = g^{cd} d_f g_db
    t1 = np.swapaxes(A.reshape(n, 16, 4), 1, 2) @ E.reshape(n, 16, 4)
    Gl = christoffel_lower_points(D)
    C = gi[:, None] @ Gl @ gi[:, None]                           # C[a,d,f] = g^{cd} g^{ef} Gamma_ace
    t2 = C.reshape(n, 4, 16) @ np.swapaxes(Gl.reshape(n, 4, 16), 1, 2)
    return 2.0 * (t1 - t2)


# -- derivatives of blocks --------------------------------------------------

def _time_derivative(block, k: int) -> np.ndarray:
    """Second-order centred time derivative at level ``k``."""
    if block.dtdata is not None and k == block.center and block.n_t == 1:
        return block.dtdata
    if k - 1 < 0 or k + 1 >= block.n_t:
        raise GeometryError("window too small for a centred time derivative")
    return (block.data[k + 1] - block.data[k - 1]) / (2.0 * block.dt)


def _spatial_gradient(f: np.ndarray, block) -> np.ndarray:
    return np.stack([fd.d1(f, ax, block.grid.dx, block.periodic) for ax in fd.SPATIAL_AXES])


def metric_derivatives(block: MetricBlock, k: Optional[int] = None) -> np.ndarray:
    """First derivatives ``D[c, a, b] = d_c g_ab`` at level ``k`` (default centre)."""
    k = block.center if k is None else k
    gk = block.data[k]
    return np.concatenate([_time_derivative(block, k)[None], _spatial_gradient(gk, block)])


def scalar_derivatives(block: ScalarBlock, k: Optional[int] = None) -> np.ndarray:
    k = block.center if k is None else k
    return np.concatenate([_time_derivative(block, k)[None], _spatial_gradient(block.data[k], block)])


def metric_second_derivatives(block: MetricBlock) -> np.ndarray:
    """``DD[c, d, a, b] = d_c d_d g_ab`` at the centre level (needs 3 levels)."""
    c = block.center
    if block.n_t < 3:
        raise GeometryError("window too small for second time derivatives")
    h = block.grid.dx
    gc = block.data[c]
    out = np.empty((4, 4) + gc.shape)
    out[0, 0] = (block.data[c + 1] - 2.0 * gc + block.data[c - 1]) / block.dt ** 2
    vt = _time_derivative(block, c)
    for i, ax in enumerate(fd.SPATIAL_AXES):
        out[0, i + 1] = out[i + 1, 0] = fd.d1(vt, ax, h, block.periodic)
    out[1:, 1:] = fd.hessian(gc, h, block.periodic)
    return out


# -- public operations ------------------------------------------------------

def metric_inverse(g: np.ndarray) -> np.ndarray:
    """Inverse of a grid-last ``(4, 4, ...)`` metric."""
    gs = g.shape[2:]
    try:
        gi = inverse_points(to_points(g, 2))
    except GeometryError as exc:
        k = int(str(exc).rsplit(" ", 1)[-1])
        raise GeometryError(f"singular metric at grid index {np.unravel_index(k, gs)}") from None
    return from_points(gi, 2, gs)


@dataclass
class ChristoffelField:
    """Gamma^l_{m n} on the grid, shape ``(4, 4, 4, nx, ny, nz)``."""
    values: np.ndarray
    t: float

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - np.swapaxes(self.values, 1, 2))))


def christoffel(block: MetricBlock) -> ChristoffelField:
    gs = block.grid.shape
    gc = block.data[block.center]
    gi = to_points(metric_inverse(gc), 2)
    D = to_points(metric_derivatives(block), 3)
    return ChristoffelField(from_points(christoffel_points(gi, D), 3, gs), block.t_center)


def _christoffel_at(block: MetricBlock, k: int) -> np.ndarray:
    gs = block.grid.shape
    gi = to_points(metric_inverse(block.data[k]), 2)
    D = to_points(metric_derivatives(block, k), 3)
    return from_points(christoffel_points(gi, D), 3, gs)


def ricci_fd(block: MetricBlock) -> np.ndarray:
    """Ricci tensor from finite differences of the Christoffel symbols.

    Needs five time levels: Gamma is formed at the three central levels and
    differenced in time there.
    """
    if block.n_t < 5:
        raise GeometryError("window too small: ricci_fd needs 5 time levels")
    if min(block.grid.shape) < 5:
        raise GeometryError("window too small: need at least 5 points per axis")
    c = block.center
    G = _christoffel_at(block, c)
    dG = np.empty((4,) + G.shape)
    dG[0] = (_christoffel_at(block, c + 1) - _christoffel_at(block, c - 1)) / (2.0 * block.dt)
    for i, ax in enumerate(fd.SPATIAL_AXES):
        dG[i + 1] = fd.d1(G, ax, block.grid.dx, block.periodic)
    # R_mn = d_l G^l_mn - d_n G^l_ml + G^l_ls G^s_mn - G^l_ns G^s_ml
    R = (np.einsum("llmn...->mn...", dG)
         - np.einsum("nlml...->mn...", dG)
         + np.einsum("lls...,smn...->mn...", G, G)
         - np.einsum("lns...,sml...->mn...", G, G))
    return 0.5 * (R + np.swapaxes(R, 0, 1))


@dataclass
class GaugeResult:
    vector: np.ndarray          # Gamma^l, shape (4, nx, ny, nz)
    divergence_form: np.ndarray  # -|g|^{-1/2} d_a(g^{ab} |g|^{1/2})
    sup: float
    l2: float
    crosscheck: float           # sup of the difference between the two forms

    def interior_sup(self, margin: int) -> float:
        return float(np.max(np.abs(self.vector[fd.interior(margin)])))


def _density(g: np.ndarray) -> np.ndarray:
    gs = g.shape[2:]
    gp = to_points(g, 2)
    sq = np.sqrt(np.abs(np.linalg.det(gp)))
    return from_points(inverse_points(gp) * sq[:, None, None], 2, gs)


def gauge_vector(block: MetricBlock, margin: int = 2) -> GaugeResult:
    """Contracted Christoffel vector and the divergence form of the same condition.

    Norms are taken over the interior, ``margin`` points from each face.
    """
    gs = block.grid.shape
    c = block.center
    gc = block.data[c]
    gi = to_points(metric_inverse(gc), 2)
    D = to_points(metric_derivatives(block), 3)
    vec = from_points(gauge_points(gi, D), 1, gs)

    dens = _density(gc)
    if block.n_t >= 3:
        dt_dens = (_density(block.data[c + 1]) - _density(block.data[c - 1])) / (2.0 * block.dt)
    elif block.dtdata is not None:
        # chain rule for the single-level case
        sq = np.sqrt(np.abs(np.linalg.det(to_points(gc, 2))))
        gig = from_points(gi, 2, gs)
        dgt = block.dtdata
        dg_inv = -np.einsum("ac...,cd...,db...->ab...", gig, dgt, gig)
        tr = np.einsum("ab...,ab...->...", gig, dgt)
        dt_dens = (dg_inv + 0.5 * tr * gig) * from_points(sq, 0, gs)
    else:
        raise GeometryError("gauge_vector needs a time derivative")
    div = dt_dens[0].copy()
    for i, ax in enumerate(fd.SPATIAL_AXES):
        div += fd.d1(dens[i + 1], ax, block.grid.dx, block.periodic)
    sq = from_points(np.sqrt(np.abs(np.linalg.det(to_points(gc, 2)))), 0, gs)
    divform = -div / sq
    inner = fd.interior(margin)
    v = vec[inner]
    return GaugeResult(
        vector=vec,
        divergence_form=divform,
        sup=float(np.max(np.abs(v))),
        l2=float(np.sqrt(np.sum(v * v) * block.grid.dx ** 3)),
        crosscheck=float(np.max(np.abs(vec[inner] - divform[inner]))),
    )


@dataclass
class ReducedRHS:
    S: np.ndarray        # geometric part, (4, 4, ...)
    matter: np.ndarray   # -2 d_a psi d_b psi
    total: np.ndarray


def reduced_rhs(block: MetricBlock, psi: Optional[ScalarBlock] = None) -> ReducedRHS:
    """Right-hand side of g^{ab} d_a d_b g_mn = S_mn - 2 d_m psi d_n psi at the centre level."""
    gs = block.grid.shape
    gi = to_points(metric_inverse(block.data[block.center]), 2)
    D = to_points(metric_derivatives(block), 3)
    S = from_points(reduced_source_points(gi, D), 2, gs)
    if psi is None:
        matter = np.zeros_like(S)
    else:
        dpsi = scalar_derivatives(psi)
        matter = -2.0 * dpsi[:, None] * dpsi[None, :]
    return ReducedRHS(S, matter, S + matter)


def reduced_identity_residual(block: MetricBlock) -> np.ndarray:
    """g^{ab} d_a d_b g_mn + 2 R_mn - 2 nabla_(m Gamma_n) - S_mn, which vanishes identically.

    Every piece is computed independently on the grid: the wave operator from
    second differences of g, R from differences of the Christoffel symbols,
    and the gauge term from differences of Gamma_n.
    """
    if block.n_t < 5:
        raise GeometryError("window too small: identity check needs 5 time levels")
    gs = block.grid.shape
    c = block.center
    gc = block.data[c]
    gi_f = metric_inverse(gc)
    box = np.einsum("ab...,abmn...->mn...", gi_f, metric_second_derivatives(block))
    R = ricci_fd(block)
    S = reduced_rhs(block).S

    def gamma_low(k):
        gi = to_points(metric_inverse(block.data[k]), 2)
        D = to_points(metric_derivatives(block, k), 3)
        up = gauge_points(gi, D)
        return from_points(np.einsum("nab,nb->na", to_points(block.data[k], 2), up), 1, gs)

    Gc = gamma_low(c)
    dGam = np.empty((4,) + Gc.shape)
    dGam[0] = (gamma_low(c + 1) - gamma_low(c - 1)) / (2.0 * block.dt)
    for i, ax in enumerate(fd.SPATIAL_AXES):
        dGam[i + 1] = fd.d1(Gc, ax, block.grid.dx, block.periodic)
    chris = christoffel(block).values
    nabla = 0.5 * (dGam + np.swapaxes(dGam, 0, 1)) - np.einsum("lmn...,l...->mn...", chris, Gc)
    return box + 2.0 * R - 2.0 * nabla - S


def assemble_P_source(h: MetricBlock, mu: int, nu: int) -> np.ndarray:
    """P(d_mu h, d_nu h) at the centre level."""
    dh = metric_derivatives(h)
    return quadratic_P(dh[mu], dh[nu])


def inverse_perturbation(h: MetricBlock) -> MetricBlock:
    """H^{mn} = (m + h)^{-1} - m^{-1}, level by level."""
    gs = h.grid.shape
    eta = ETA.reshape((4, 4) + (1,) * 3)
    levels = [metric_inverse(h.data[k] + eta) - eta for k in range(h.n_t)]
    return MetricBlock(np.stack(levels), h.grid, h.dt, h.t0, "H", periodic=h.periodic)


def raise_h(h: np.ndarray) -> np.ndarray:
    """h^{mn} with Minkowski raising of a grid-last (4, 4, ...) array."""
    s = np.array([-1.0, 1.0, 1.0, 1.0])
    return h * np.outer(s, s).reshape((4, 4) + (1,) * (h.ndim - 2))
