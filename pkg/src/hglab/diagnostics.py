"""Measurable functionals: weights, weighted energies, inequality ratios,
null-component monitors and decay-rate fits.

Throughout, ``q = r - t`` so that the energy weight grows in the exterior
``r > t``.  Frame-indexed arrays use the order (L, Lbar, S1, S2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fd
from .blocks import SYM_INDEX, Grid, MetricBlock, ScalarBlock
from .geometry import from_points, gauge_points, inverse_points, to_points
from .initdata import h0_field
from .nullframe import ETA, frame_fields
from .vectorfields import GENERATORS, Generator, WindowError, get as get_generator

# frame-index families in (L, Lbar, S1, S2) order
F_L, F_LB, F_S1, F_S2 = 0, 1, 2, 3
FAM = {"L": (0,), "T": (0, 2, 3), "U": (0, 1, 2, 3), "S": (2, 3)}


class DiagnosticError(ValueError):
    pass


# -- weights ----------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    gamma: float = 0.25
    mu: float = 0.25
    gamma_p: float = 0.0
    mu_p: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.mu < 0.5:
            raise ValueError("mu must lie in (0, 1/2)")
        if self.gamma_p < -1.0 or self.mu_p > 0.5:
            raise ValueError("need gamma' >= -1 and mu' <= 1/2")


def weight_w(q, spec: WeightSpec = WeightSpec()) -> Tuple[np.ndarray, np.ndarray]:
    """Energy weight w(q) and its derivative w'(q)."""
    q = np.asarray(q, dtype=float)
    a = 1.0 + np.abs(q)
    w = np.where(q > 0, 1.0 + a ** (1.0 + 2.0 * spec.gamma), 1.0 + a ** (-2.0 * spec.mu))
    wp = np.where(q > 0, (1.0 + 2.0 * spec.gamma) * a ** (2.0 * spec.gamma),
                  2.0 * spec.mu * a ** (-1.0 - 2.0 * spec.mu))
    return w, wp


def weight_bound_margin(q, spec: WeightSpec = WeightSpec()) -> float:
    """max over q of w' - 4 w / (1 + |q|); nonpositive when the bound holds."""
    w, wp = weight_w(q, spec)
    return float(np.max(wp - 4.0 * w / (1.0 + np.abs(np.asarray(q, dtype=float)))))


def weight_varpi(q, spec: WeightSpec = WeightSpec()) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    a = 1.0 + np.abs(q)
    return np.where(q > 0, a ** (1.0 + spec.gamma_p), a ** (0.5 - spec.mu_p))


# -- series -----------------------------------------------------------------

@dataclass
class DiagnosticSeries:
    records: List[Dict[str, float]] = field(default_factory=list)

    def append(self, rec: Dict[str, float]) -> None:
        if self.records and rec["t"] < self.records[-1]["t"]:
            raise DiagnosticError("time stamps must be monotone")
        self.records.append(dict(rec))

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def keys(self) -> List[str]:
        seen: List[str] = []
        for r in self.records:
            seen += [k for k in r if k not in seen]
        return seen

    def __len__(self) -> int:
        return len(self.records)


# -- helpers on grids -------------------------------------------------------

def _volume_mask(grid: Grid, margin: int) -> np.ndarray:
    if margin == 0:
        return np.ones(grid.shape, dtype=bool)
    return fd.interior_mask(grid.shape, margin)


def _weighted_l2(f: np.ndarray, wgt: np.ndarray, mask: np.ndarray, dx: float) -> float:
    """sqrt(sum over leading axes and masked points of w f^2 dx^3)."""
    dens = np.sum(f.reshape((-1,) + f.shape[-3:]) ** 2, axis=0) * wgt
    return float(math.sqrt(float(np.sum(dens[mask])) * dx ** 3))


def spacetime_gradient(block, k: Optional[int] = None) -> np.ndarray:
    """(d_t f, d_1 f, d_2 f, d_3 f) at level ``k`` of a scalar or metric block."""
    from .geometry import _time_derivative
    k = block.center if k is None else k
    f = block.data[k]
    h = block.grid.dx
    return np.stack([_time_derivative(block, k)] +
                    [fd.d1(f, ax, h, block.periodic) for ax in fd.SPATIAL_AXES])


def _z_level(gen: Generator, block: ScalarBlock, k: int) -> np.ndarray:
    """Z phi at level ``k`` only."""
    t = block.t0 + k * block.dt
    X, Y, Z = block.grid.mesh()
    coef = gen.coefficients(t, X, Y, Z)
    f = block.data[k]
    out = np.zeros_like(f)
    if gen.b[0] != 0.0 or np.any(gen.C[0] != 0.0):
        if k < 1 or k + 1 >= block.n_t:
            raise WindowError(f"{gen.tag} needs levels on both sides of {k}")
        out += coef[0] * (block.data[k + 1] - block.data[k - 1]) / (2.0 * block.dt)
    for i, ax in enumerate(fd.SPATIAL_AXES):
        if np.any(coef[i + 1] != 0.0):
            out += coef[i + 1] * fd.d1(f, ax, block.grid.dx, block.periodic)
    return out


def z_tower(block: ScalarBlock, depth: int, levels: int = 1) -> List[ScalarBlock]:
    """All Z^I phi with |I| <= depth, each on the ``levels`` central levels of ``block``.

    Ordered multi-indices are used, the rightmost generator acting first.
    """
    c = block.center
    need = depth + (levels - 1) // 2
    if c - need < 0 or c + need >= block.n_t:
        raise WindowError(f"window of {block.n_t} levels too short for depth {depth}")
    gens = list(GENERATORS.values())
    half = (levels - 1) // 2

    def sub(b: ScalarBlock, lo: int, hi: int) -> ScalarBlock:
        return ScalarBlock(b.data[lo:hi], b.grid, b.dt, b.t0 + lo * b.dt, periodic=b.periodic)

    layer = [sub(block, c - need, c + need + 1)]
    out = [sub(layer[0], need - half, need + half + 1)]
    for d in range(1, depth + 1):
        rad = need - d
        nxt = []
        for b in layer:
            mid = b.center
            for g in gens:
                data = np.stack([_z_level(g, b, k) for k in range(mid - rad, mid + rad + 1)])
                nxt.append(ScalarBlock(data, b.grid, b.dt, b.t0 + (mid - rad) * b.dt,
                                       periodic=b.periodic))
        layer = nxt
        out += [sub(b, b.center - half, b.center + half + 1) for b in layer]
    return out


# -- energies ---------------------------------------------------------------

def energy_weight(grid: Grid, t: float, spec: WeightSpec) -> np.ndarray:
    return weight_w(grid.radius() - t, spec)[0]


def energy_E0_fields(dh1: np.ndarray, dpsi: np.ndarray, grid: Grid, t: float,
                     spec: WeightSpec = WeightSpec(), margin: int = 3) -> float:
    """||w^{1/2} d h1|| + ||w^{1/2} d psi|| from spacetime gradients at one level.

    ``dh1`` holds d_a h1_{mu nu} with shape (4, 4, 4, ...) or packed (4, 10, ...);
    packed off-diagonal entries are counted twice.
    """
    wgt = energy_weight(grid, t, spec)
    mask = _volume_mask(grid, margin)
    if dh1.shape[1] == 10:
        mult = np.array([1.0 if a == b else 2.0 for a in range(4) for b in range(a, 4)])
        dh1 = dh1 * np.sqrt(mult).reshape((1, 10) + (1,) * (dh1.ndim - 2))
    return _weighted_l2(dh1, wgt, mask, grid.dx) + _weighted_l2(dpsi, wgt, mask, grid.dx)


def energy_EN(h1: MetricBlock, psi: ScalarBlock, N: int, spec: WeightSpec = WeightSpec(),
              margin: int = 4) -> float:
    """Sum over |I| <= N of ||w^{1/2} d Z^I h1|| + ||w^{1/2} d Z^I psi|| at the centre level.

    Needs 2N + 3 time levels; N is capped at 2.
    """
    if N > 2:
        raise WindowError("energy_EN supports N <= 2 on grid windows")
    if N == 0 and h1.n_t == 1:
        dh = np.concatenate([h1.dtdata[None], np.stack(
            [fd.d1(h1.data[0], ax, h1.grid.dx, h1.periodic) for ax in fd.SPATIAL_AXES])])
        dpsi = np.concatenate([psi.dtdata[None], np.stack(
            [fd.d1(psi.data[0], ax, psi.grid.dx, psi.periodic) for ax in fd.SPATIAL_AXES])])
        return energy_E0_fields(dh, dpsi, h1.grid, h1.t_center, spec, margin)
    if h1.n_t < 2 * N + 3 or psi.n_t < 2 * N + 3:
        raise WindowError(f"energy_EN with N = {N} needs {2 * N + 3} time levels")
    grid = h1.grid
    wgt = energy_weight(grid, h1.t_center, spec)
    mask = _volume_mask(grid, margin)
    total = 0.0
    comps = [ScalarBlock(h1.data[:, a, b], grid, h1.dt, h1.t0, periodic=h1.periodic)
             for a in range(4) for b in range(4)]
    fields = [comps, [psi]]
    for group in fields:
        towers = [z_tower(b, N, levels=3) for b in group]
        for idx in range(len(towers[0])):
            grads = np.stack([spacetime_gradient(tw[idx]) for tw in towers])
            total += _weighted_l2(grads, wgt, mask, grid.dx)
    return total


# -- frame contractions on point sets ---------------------------------------

def _frame_matrix(X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """E[f, a, p]: frame vector f (L, Lbar, S1, S2) component a at point p."""
    fr = frame_fields(X, Y, Z)
    return np.stack([fr["L"], fr["Lbar"], fr["S1"], fr["S2"]])


def to_frame(p: np.ndarray, E: np.ndarray) -> np.ndarray:
    """p_{ab} V^a W^b for all frame pairs; p is (4, 4, P)."""
    tmp = np.einsum("ab...,wb...->aw...", p, E)
    return np.einsum("aw...,va...->vw...", tmp, E)


def to_frame3(dp: np.ndarray, E: np.ndarray) -> np.ndarray:
    """U^c V^a W^b d_c p_{ab} for all frame triples; dp is (4, 4, 4, P)."""
    tmp = np.einsum("cab...,uc...->uab...", dp, E)
    return np.stack([to_frame(tmp[u], E) for u in range(4)])


def family_sum(F: np.ndarray, *fams: str) -> np.ndarray:
    idx = np.ix_(*[FAM[f] for f in fams])
    return np.sum(np.abs(F[idx]), axis=tuple(range(len(fams))))


@dataclass(frozen=True)
class Annulus:
    mask: np.ndarray
    E: np.ndarray
    r: np.ndarray


def annulus(grid: Grid, t: float, width: float = 5.0, margin: int = 2) -> Annulus:
    """Points with |r - t| <= width, excluding the origin; errors if clipped."""
    reach = min(min(-grid.lower[i], grid.upper[i]) for i in range(3)) - margin * grid.dx
    if t + width > reach + 1e-12:
        raise DiagnosticError(f"annulus r <= {t + width:g} clipped by the grid boundary at {reach:g}")
    X, Y, Z = grid.mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z)
    m = (np.abs(r - t) <= width) & (r > 0.5 * grid.dx)
    return Annulus(m, _frame_matrix(X[m], Y[m], Z[m]), r[m])


def null_monitor(h: np.ndarray, dh: np.ndarray, dpsi: np.ndarray, grid: Grid, t: float,
                 width: float = 5.0, ann: Optional[Annulus] = None) -> Dict[str, float]:
    """Frame-component sups over the annulus |r - t| <= width.

    ``h`` is (4, 4, ...), ``dh`` is d_c h_ab with shape (4, 4, 4, ...), ``dpsi`` (4, ...).
    """
    A = annulus(grid, t, width) if ann is None else ann
    m = A.mask
    F = to_frame3(dh[..., m], A.E)
    hF = to_frame(h[..., m], A.E)
    dpsiF = np.einsum("c...,uc...->u...", dpsi[:, m], A.E)
    sup = lambda a: float(np.max(a)) if a.size else 0.0
    return {
        "dh_TU_sup": sup(family_sum(F, "U", "T", "U")),
        "dh_LL_sup": sup(family_sum(F, "U", "L", "L")),
        "dh_LbLb_sup": sup(np.sum(np.abs(F[:, F_LB, F_LB]), axis=0)),
        "dh_sup": sup(family_sum(F, "U", "U", "U")),
        "dpsi_sup": sup(np.sum(np.abs(dpsiF), axis=0)),
        "h_LT_sup": sup(family_sum(hF, "L", "T")),
    }


def _metric_parts(u: np.ndarray, v: np.ndarray, h: float, periodic: bool = False):
    """Full g, its derivative D[c, a, b] and d psi from packed evolution variables."""
    g = u[:10][SYM_INDEX]
    grads = [fd.d1(u, ax, h, periodic) for ax in fd.SPATIAL_AXES]
    D = np.stack([v[:10][SYM_INDEX]] + [d[:10][SYM_INDEX] for d in grads])
    dpsi = np.stack([v[10]] + [d[10] for d in grads])
    return g, D, dpsi


def inverse_perturbation_fields(g: np.ndarray, D: np.ndarray):
    """H^{ab} = g^{ab} - m^{ab} and d_c H^{ab} = -g^{ae} d_c g_ef g^{fb}."""
    shape = g.shape[2:]
    gi = inverse_points(to_points(g, 2))
    Dp = to_points(D, 3)
    dH = -(gi[:, None] @ Dp @ gi[:, None])
    H = from_points(gi, 2, shape) - ETA.reshape((4, 4) + (1,) * len(shape))
    return H, from_points(dH, 3, shape)


def wavec_ratio(H: np.ndarray, dH: np.ndarray, grid: Grid, t: float, floor: float,
                width: float = 5.0, ann: Optional[Annulus] = None) -> float:
    """sup over the annulus of |dH|_LT / max(|dbar H| + |H| |dH|, floor).

    Upper-index H is lowered with the Minkowski metric before frame contraction.
    """
    A = annulus(grid, t, width) if ann is None else ann
    return wavec_ratio_points(H[..., A.mask], dH[..., A.mask], A, floor)


def wavec_ratio_points(H: np.ndarray, dH: np.ndarray, A: Annulus, floor: float) -> float:
    """:func:`wavec_ratio` on fields already restricted to the annulus points."""
    Hl = np.einsum("ab,bc...,cd->ad...", ETA, H, ETA)
    dHl = np.einsum("ab,kbc...,cd->kad...", ETA, dH, ETA)
    F = to_frame3(dHl, A.E)
    HF = to_frame(Hl, A.E)
    num = family_sum(F, "U", "L", "T")
    den = family_sum(F, "T", "U", "U") + family_sum(HF, "U", "U") * family_sum(F, "U", "U", "U")
    if num.size == 0:
        return 0.0
    return float(np.max(num / np.maximum(den, floor)))


def wavec_floor(H: np.ndarray, dx: float, margin: int = 3) -> float:
    """10 dx^2 times the sup of third spatial derivatives of a field (truncation floor).

    The monitor passes h = g - m, which agrees with -H to first order.
    """
    worst = 0.0
    for ax in fd.SPATIAL_AXES:
        d3 = fd.d1(fd.d2(H, ax, dx), ax, dx)
        worst = max(worst, float(np.max(np.abs(d3[fd.interior(margin)]))))
    return 10.0 * dx * dx * max(worst, 1e-300)


def wavec_ratio_z(H: MetricBlock, gen_tags: Sequence[str] = ("O01", "O12", "S"),
                  floor: float = 0.0, width: float = 5.0) -> Dict[str, float]:
    """|I| <= 1 versions: |d Z H|_LT and |d Z H|_LL against the right-hand sides.

    ``H`` needs 5 levels.  For each Z the ratio is
    |d Z H|_LT / max(|dbar Z H| + |dbar H| + |d H| + |H| |d Z H| + |Z H| |d H|, floor)
    and the LL version drops the undifferentiated |d H| term.
    """
    if H.n_t < 5:
        raise WindowError("wavec_ratio_z needs 5 time levels")
    grid = H.grid
    t = H.t_center
    A = annulus(grid, t, width)
    m = A.mask
    lower = lambda T: np.einsum("ab,bc...,cd->ad...", ETA, T, ETA)
    comps = {(a, b): ScalarBlock(H.data[:, a, b], grid, H.dt, H.t0, periodic=H.periodic)
             for a in range(4) for b in range(4)}
    c = H.center
    base = H.data[c]
    dbase = spacetime_gradient(H)
    F0 = to_frame3(np.einsum("ab,kbc...,cd->kad...", ETA, dbase[..., m], ETA), A.E)
    H0 = to_frame(lower(base[..., m]), A.E)
    out: Dict[str, float] = {}
    for tag in gen_tags:
        g = get_generator(tag)
        zb = {}
        for key, blk in comps.items():
            zb[key] = np.stack([_z_level(g, blk, k) for k in (c - 1, c, c + 1)])
        ZH = np.empty((3, 4, 4) + grid.shape)
        for (a, b), arr in zb.items():
            ZH[:, a, b] = arr
        zblock = MetricBlock(ZH, grid, H.dt, t - H.dt, role="H", periodic=H.periodic)
        dZ = spacetime_gradient(zblock)
        FZ = to_frame3(np.einsum("ab,kbc...,cd->kad...", ETA, dZ[..., m], ETA), A.E)
        ZF = to_frame(lower(ZH[1][..., m]), A.E)
        quad = family_sum(H0, "U", "U") * family_sum(FZ, "U", "U", "U") + \
            family_sum(ZF, "U", "U") * family_sum(F0, "U", "U", "U")
        tang = family_sum(FZ, "T", "U", "U") + family_sum(F0, "T", "U", "U")
        num_lt = family_sum(FZ, "U", "L", "T")
        num_ll = family_sum(FZ, "U", "L", "L")
        out[f"{tag}_LT"] = float(np.max(num_lt / np.maximum(
            tang + family_sum(F0, "U", "U", "U") + quad, floor)))
        out[f"{tag}_LL"] = float(np.max(num_ll / np.maximum(tang + quad, floor)))
    return out


# -- monitors used by evolve -------------------------------------------------

def standard_monitor(config, M: float, spec: Optional[WeightSpec] = None):
    """Monitor for evolve: E0, gauge residual, null-component sups and wavec ratio."""
    spec = spec or WeightSpec(config.gamma, config.mu, config.gamma_p, config.mu_p)
    width = config.annulus
    if config.mode == "linear":
        return linear_energy_monitor(spec)

    def monitor(system, state) -> Dict[str, float]:
        grid = system.grid
        h = grid.dx
        t = state.t
        g, D, dpsi = _metric_parts(state.u, state.v, h, system.periodic)
        eta = ETA.reshape((4, 4, 1, 1, 1))
        hfull = g - eta
        h0, dth0 = h0_field(grid, t, M)
        dh0 = np.concatenate([dth0[None], np.stack(
            [fd.d1(h0, ax, h) for ax in fd.SPATIAL_AXES])])
        dh1 = D - dh0
        rec: Dict[str, float] = {}
        rec["E0"] = energy_E0_fields(dh1, dpsi, grid, t, spec)
        gi = inverse_points(to_points(g, 2))
        gam = from_points(gauge_points(gi, to_points(D, 3)), 1, grid.shape)
        rec["gauge_res_sup"] = float(np.max(np.abs(gam[fd.interior(3)])))
        try:
            A = annulus(grid, t, width)
        except DiagnosticError:
            return rec
        rec.update(null_monitor(hfull, D, dpsi, grid, t, width, A))
        h1 = hfull - h0
        n1 = null_monitor(h1, dh1, dpsi, grid, t, width, A)
        rec.update({f"h1_{k}": val for k, val in n1.items() if k.startswith("dh")})
        m = A.mask
        H, dH = inverse_perturbation_fields(g[..., m], D[..., m])
        floor = wavec_floor(hfull, h)
        rec["wavec_ratio"] = wavec_ratio_points(H, dH, A, floor)
        return rec

    return monitor


def linear_energy_monitor(spec: Optional[WeightSpec] = None, margin: int = 0):
    """Energy, weighted energy and tangential flux for linear runs.

    ``E`` = int (phi_t^2 + |grad phi|^2), ``Ew`` its w-weighted version and
    ``flux`` = int |dbar phi|^2 w' with dbar = (L, S1, S2).
    """
    spec = spec or WeightSpec()

    def monitor(system, state) -> Dict[str, float]:
        grid = system.grid
        phi, phit = state.u[0], state.v[0]
        grads = [fd.d1(phi, ax, grid.dx, system.periodic) for ax in fd.SPATIAL_AXES]
        dens = phit ** 2 + sum(g * g for g in grads)
        vol = grid.dx ** 3
        mask = _volume_mask(grid, margin)
        rec = {"E": float(np.sum(dens[mask]) * vol)}
        if not system.periodic:
            X, Y, Z = grid.mesh()
            r = np.sqrt(X * X + Y * Y + Z * Z)
            w, wp = weight_w(r - state.t, spec)
            with np.errstate(invalid="ignore", divide="ignore"):
                om = np.stack([X, Y, Z]) / np.where(r > 0, r, 1.0)
            dr = sum(om[i] * grads[i] for i in range(3))
            ang2 = sum(g * g for g in grads) - dr * dr
            tang = (phit + dr) ** 2 + ang2
            rec["Ew"] = float(np.sum((dens * w)[mask]) * vol)
            rec["flux"] = float(np.sum((tang * wp)[mask]) * vol)
        return rec

    return monitor


def energy_balance_residual(series, weighted: bool = False) -> Dict[str, np.ndarray]:
    """Residual of the energy identity along a linear-run series.

    Unweighted: dE/dt.  Weighted: dEw/dt + flux, which vanishes for the flat
    wave equation when the weight depends on r - t only.  Time derivatives are
    centred differences of the series; flux is averaged onto the same midpoints.
    """
    t = np.array([r["t"] for r in series])
    key = "Ew" if weighted else "E"
    E = np.array([r[key] for r in series])
    tm = 0.5 * (t[1:] + t[:-1])
    dE = np.diff(E) / np.diff(t)
    out = {"t": tm, "dEdt": dE}
    if weighted:
        flux = np.array([r["flux"] for r in series])
        fm = 0.5 * (flux[1:] + flux[:-1])
        out["flux"] = fm
        out["residual"] = dE + fm
    else:
        out["residual"] = dE
    return out


# -- inequality ratios ------------------------------------------------------

def ks_ratio(phi: ScalarBlock, spec: WeightSpec = WeightSpec(), depth: int = 2,
             margin: int = 4) -> float:
    """Weighted Klainerman-Sobolev ratio at the centre level of ``phi``.

    sup_x |phi| (1 + t + |q|) [(1 + |q|) w(q)]^{1/2} over the sum for |I| <= depth
    of ||w^{1/2} Z^I phi||.  Needs 2 * depth + 1 levels.
    """
    grid = phi.grid
    t = phi.t_center
    r = grid.radius()
    q = r - t
    w = weight_w(q, spec)[0]
    mask = _volume_mask(grid, margin)
    f = phi.data[phi.center]
    lhs = np.abs(f) * (1.0 + t + np.abs(q)) * np.sqrt((1.0 + np.abs(q)) * w)
    num = float(np.max(lhs[mask]))
    den = sum(_weighted_l2(b.data[0], w, mask, grid.dx) for b in z_tower(phi, depth))
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise DiagnosticError("zero denominator with nonzero numerator")
    return num / den


@dataclass(frozen=True)
class RadialProfile:
    """Radial function with its derivative, both callables of r."""
    u: Callable[[np.ndarray], np.ndarray]
    du: Callable[[np.ndarray], np.ndarray]


def _gauss_segments(a: float, b: float, n_seg: int, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_seg + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi - lo) * x[None] + 0.5 * (hi + lo)
    wts = 0.5 * (hi - lo) * w[None]
    return nodes.ravel(), wts.ravel()


def hardy_sides(prof: RadialProfile, t: float, alpha: float, spec: WeightSpec = WeightSpec(),
                r_max: float = 60.0, n_seg: int = 200) -> Tuple[float, float]:
    """Left and right sides (constant C = 1) of the cone-adapted Hardy inequality."""
    if not 0.0 <= alpha <= 2.0:
        raise ValueError("alpha must lie in [0, 2]")
    g, mu = spec.gamma, spec.mu
    lhs = rhs = 0.0
    parts = []
    if t > 0:
        parts.append((0.0, t, True))
    parts.append((t, max(r_max, t + 1.0), False))
    for a, b, inside in parts:
        seg = max(4, int(round(n_seg * (b - a) / max(r_max, t + 1.0))))
        r, wq = _gauss_segments(a, b, seg)
        u, du = prof.u(r), prof.du(r)
        base = r * r / (1.0 + t + r) ** alpha
        d = 1.0 + np.abs(r - t)
        if inside:
            lhs += float(np.sum(wq * u * u * base / d ** (2.0 + mu)))
            rhs += float(np.sum(wq * du * du * base / d ** mu))
        else:
            lhs += float(np.sum(wq * u * u * base / d ** (1.0 - g)))
            rhs += float(np.sum(wq * du * du * base * d ** (1.0 + g)))
    return lhs, rhs


def hardy_ratio(prof: RadialProfile, t: float, alpha: float, spec: WeightSpec = WeightSpec(),
                r_max: float = 60.0, n_seg: int = 200) -> float:
    lhs, rhs = hardy_sides(prof, t, alpha, spec, r_max, n_seg)
    if rhs == 0.0:
        return 0.0
    return lhs / rhs


def classical_hardy_ratio(prof: RadialProfile, r_max: float = 40.0, n_seg: int = 200) -> float:
    """int |f|^2/|x|^2 over 4 int |grad f|^2 for a radial f; at most 1."""
    r, wq = _gauss_segments(0.0, r_max, n_seg)
    lhs = 4.0 * math.pi * float(np.sum(wq * prof.u(r) ** 2))
    rhs = 4.0 * 4.0 * math.pi * float(np.sum(wq * prof.du(r) ** 2 * r * r))
    return 0.0 if rhs == 0.0 else lhs / rhs


def gaussian_bump_profile(centers: Sequence[float], widths: Sequence[float],
                          amps: Sequence[float]) -> RadialProfile:
    c, s, a = (np.asarray(v, dtype=float)[:, None] for v in (centers, widths, amps))

    def u(r):
        return np.sum(a * np.exp(-((r[None] - c) / s) ** 2), axis=0)

    def du(r):
        return np.sum(-2.0 * a * (r[None] - c) / s ** 2 * np.exp(-((r[None] - c) / s) ** 2), axis=0)

    return RadialProfile(u, du)


@dataclass(frozen=True)
class SpacetimeGaussian:
    """g(s, y) = amp exp(-a (s - s0)^2 - b |y - y0|^2) with exact derivatives."""
    amp: float = 1.0
    a: float = 2.0
    b: float = 1.5
    s0: float = 1.0
    y0: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, s, X, Y, Z):
        return self.amp * np.exp(-self.a * (s - self.s0) ** 2 - self.b * (
            (X - self.y0[0]) ** 2 + (Y - self.y0[1]) ** 2 + (Z - self.y0[2]) ** 2))

    def jets(self, P: np.ndarray):
        """Value, gradient (4, ...) and Hessian (4, 4, ...) at spacetime points P (4, ...)."""
        c = np.array((self.s0,) + tuple(self.y0)).reshape((4,) + (1,) * (P.ndim - 1))
        k = np.array([self.a, self.b, self.b, self.b]).reshape((4,) + (1,) * (P.ndim - 1))
        d = P - c
        f = self.amp * np.exp(-np.sum(k * d * d, axis=0))
        grad = -2.0 * k * d * f
        hess = 4.0 * (k * d)[:, None] * (k * d)[None] * f
        for i in range(4):
            hess[i, i] -= 2.0 * k[i] * f
        return f, grad, hess


def hormander_rhs(src: SpacetimeGaussian, t: float, half_width: float = 6.0, n: int = 25,
                  n_time: int = 12) -> float:
    """sum over |I| <= 2 of int_0^t int |Z^I g| / (1 + s + |y|) dy ds by quadrature."""
    from .vectorfields import apply_pair_analytic, apply_single_analytic
    y = np.linspace(-half_width, half_width, n)
    dy = y[1] - y[0]
    X, Y, Z = np.meshgrid(y, y, y, indexing="ij")
    ry = np.sqrt(X * X + Y * Y + Z * Z)
    xs, ws = np.polynomial.legendre.leggauss(n_time)
    gens = list(GENERATORS.values())
    total = 0.0
    for xk, wk in zip(xs, ws):
        s = 0.5 * t * (xk + 1.0)
        P = np.stack([np.full_like(X, s), X, Y, Z])
        f, grad, hess = src.jets(P)
        wgt = 1.0 / (1.0 + s + ry)
        acc = np.abs(f)
        for g1 in gens:
            acc = acc + np.abs(apply_single_analytic(g1, P, grad))
            for g2 in gens:
                acc = acc + np.abs(apply_pair_analytic(g1, g2, P, grad, hess))
        total += 0.5 * t * wk * float(np.sum(acc * wgt)) * dy ** 3
    return total


def hormander_ratio(w_value: float, t: float, x: Sequence[float], rhs: float) -> float:
    """|w(t, x)| (1 + t + |x|) / rhs; zero source gives zero."""
    lhs = abs(w_value) * (1.0 + t + float(np.linalg.norm(x)))
    if rhs == 0.0:
        if lhs == 0.0:
            return 0.0
        raise DiagnosticError("zero source with nonzero solution")
    return lhs / rhs


# -- decay fits -------------------------------------------------------------

MODELS = ("power", "log", "power_delta")


@dataclass(frozen=True)
class DecayFit:
    model: str
    c: float
    p: float
    c_err: float
    p_err: float
    residual: float

    def to_dict(self) -> Dict[str, float]:
        return {"model": self.model, "c": self.c, "p": self.p, "c_err": self.c_err,
                "p_err": self.p_err, "residual": self.residual}


def decay_fit(t: Sequence[float], y: Sequence[float], model: str = "power",
              min_span: float = 10.0) -> DecayFit:
    """Least squares in log variables.

    ``power``: y = c t^-p.  ``log``: y = c t^-1 ln t (only c is fitted, p = 1).
    ``power_delta``: y = c t^(-1 + delta), reported with p = delta.
    ``residual`` is the root-mean-square misfit of ln y.
    """
    if model not in MODELS:
        raise ValueError(f"unknown decay model {model!r}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t <= 0) or np.any(y <= 0):
        raise DiagnosticError("decay_fit needs positive times and values")
    if t.max() / t.min() < min_span:
        raise DiagnosticError(f"series spans a factor {t.max() / t.min():.3g} < {min_span:g} in t")
    ly = np.log(y)
    if model == "log":
        if np.any(t <= 1.0):
            raise DiagnosticError("log model needs t > 1")
        base = np.log(np.log(t) / t)
        lc = float(np.mean(ly - base))
        res = ly - base - lc
        n = len(t)
        lc_err = float(np.sqrt(np.sum(res ** 2) / max(n - 1, 1) / n))
        return DecayFit(model, math.exp(lc), 1.0, math.exp(lc) * lc_err, 0.0,
                        float(np.sqrt(np.mean(res ** 2))))
    A = np.stack([np.ones_like(t), -np.log(t)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv(A.T @ A) * float(np.sum(res ** 2)) / dof
    lc, p = float(coef[0]), float(coef[1])
    c_err = math.exp(lc) * math.sqrt(cov[0, 0])
    p_err = math.sqrt(cov[1, 1])
    rms = float(np.sqrt(np.mean(res ** 2)))
    if model == "power_delta":
        return DecayFit(model, math.exp(lc), 1.0 - p, c_err, p_err, rms)
    return DecayFit(model, math.exp(lc), p, c_err, p_err, rms)


def fixed_power_residual(t: Sequence[float], y: Sequence[float], p: float) -> float:
    """RMS misfit of ln y against ln c - p ln t with only c fitted."""
    t = np.asarray(t, dtype=float)
    ly = np.log(np.asarray(y, dtype=float)) + p * np.log(t)
    return float(np.sqrt(np.mean((ly - ly.mean()) ** 2)))


def log_beats_powers(t: Sequence[float], y: Sequence[float], p_range=(0.8, 1.0),
                     n_p: int = 201) -> Dict[str, float]:
    """Compare the t^-1 ln t fit with the best pure power whose exponent lies in ``p_range``."""
    log_fit = decay_fit(t, y, "log", min_span=1.0)
    ps = np.linspace(p_range[0], p_range[1], n_p)
    res = np.array([fixed_power_residual(t, y, p) for p in ps])
    k = int(np.argmin(res))
    return {"log_residual": log_fit.residual, "best_power": float(ps[k]),
            "best_power_residual": float(res[k]), "log_wins": bool(log_fit.residual < res[k])}


def energy_growth_exponent(t: Sequence[float], E: Sequence[float]) -> DecayFit:
    """delta in E(t) / E(0) ~ (1 + t)^delta by least squares on ln E vs ln(1 + t)."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    x = np.log1p(t)
    ly = np.log(E / E[0])
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    dof = max(len(t) - 2, 1)
    cov = np.linalg.inv(A.T @ A) * float(np.sum(res ** 2)) / dof
    return DecayFit("growth", float(math.exp(coef[0])), float(coef[1]),
                    float(math.exp(coef[0]) * math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])),
                    float(np.sqrt(np.mean(res ** 2))))
