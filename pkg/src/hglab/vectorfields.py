"""Minkowski vector fields: translations, rotations and boosts, and scaling.

Each generator has affine coefficients Z^mu(t, x) = C^mu_nu X^nu + b^mu with
X = (t, x1, x2, x3).  Rotations and boosts use
Omega_ab = x_a d_b - x_b d_a with x_0 = -t.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import fd
from .blocks import ScalarBlock
from .nullframe import ETA


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class Generator:
    tag: str
    C: np.ndarray      # C[mu, nu] = d_nu Z^mu
    b: np.ndarray
    c_Z: float = 0.0

    def coefficients(self, t, x1, x2, x3) -> np.ndarray:
        X = np.stack(np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x1, x2, x3))))
        return np.tensordot(self.C, X, axes=(1, 0)) + self.b.reshape((4,) + (1,) * (X.ndim - 1))

    @property
    def c_lower(self) -> np.ndarray:
        """c[a, b] = d_a Z_b with the index of Z lowered by ETA."""
        return (ETA @ self.C).T

    def __repr__(self) -> str:
        return f"Generator({self.tag})"


def translation(alpha: int) -> Generator:
    b = np.zeros(4)
    b[alpha] = 1.0
    return Generator(f"d{alpha}", np.zeros((4, 4)), b)


def omega(alpha: int, beta: int) -> Generator:
    """x_alpha d_beta - x_beta d_alpha."""
    if alpha == beta:
        raise ValueError("degenerate index pair")
    C = np.zeros((4, 4))
    C[beta, alpha] += ETA[alpha, alpha]
    C[alpha, beta] -= ETA[beta, beta]
    return Generator(f"O{alpha}{beta}", C, np.zeros(4))


def scaling() -> Generator:
    return Generator("S", np.eye(4), np.zeros(4), 2.0)


def all_generators() -> List[Generator]:
    gens = [translation(a) for a in range(4)]
    gens += [omega(a, b) for a in range(4) for b in range(a + 1, 4)]
    gens.append(scaling())
    return gens


GENERATORS: Dict[str, Generator] = {g.tag: g for g in all_generators()}


def get(tag: str) -> Generator:
    try:
        return GENERATORS[tag]
    except KeyError:
        raise ValueError(f"unknown generator {tag!r}") from None


def z_coefficients(gen: Generator, t: float, x: Sequence[float]) -> np.ndarray:
    return gen.coefficients(t, *x)


def _grid_coords(block: ScalarBlock, k: int):
    X, Y, Z = block.grid.mesh()
    return block.t0 + k * block.dt, X, Y, Z


def apply_z(gen: Generator, block: ScalarBlock) -> ScalarBlock:
    """Z phi on the inner time levels of ``block``.

    Uses centred second-order time differences, so the result has two fewer
    levels.  Translations in space and rotations need no time derivative and
    keep every level.
    """
    needs_t = bool(gen.b[0] != 0.0 or np.any(gen.C[0] != 0.0))
    if needs_t and block.n_t < 3:
        raise WindowError(f"{gen.tag} needs at least 3 time levels, block has {block.n_t}")
    lo, hi = (1, block.n_t - 1) if needs_t else (0, block.n_t)
    h = block.grid.dx
    out = []
    for k in range(lo, hi):
        t, X, Y, Z = _grid_coords(block, k)
        coef = gen.coefficients(t, X, Y, Z)
        f = block.data[k]
        acc = np.zeros_like(f)
        if needs_t:
            acc += coef[0] * (block.data[k + 1] - block.data[k - 1]) / (2.0 * block.dt)
        for i, ax in enumerate(fd.SPATIAL_AXES):
            if np.any(coef[i + 1] != 0.0):
                acc += coef[i + 1] * fd.d1(f, ax, h, block.periodic)
        out.append(acc)
    return ScalarBlock(np.stack(out), block.grid, block.dt, block.t0 + lo * block.dt, periodic=block.periodic)


MAX_MULTI = 3


def apply_multi(I: Sequence, block: ScalarBlock) -> ScalarBlock:
    """Z^I phi = Z^{i1} ... Z^{ik} phi; the rightmost generator acts first."""
    if len(I) > MAX_MULTI:
        raise WindowError(f"multi-index length {len(I)} exceeds {MAX_MULTI}")
    out = block
    for g in reversed(list(I)):
        gen = get(g) if isinstance(g, str) else g
        out = apply_z(gen, out)
    return out


def align(block: ScalarBlock, like: ScalarBlock) -> np.ndarray:
    """Levels of ``block`` that coincide in time with those of ``like``."""
    off = int(round((like.t0 - block.t0) / block.dt)) if block.dt else 0
    return block.data[off:off + like.n_t]


def box(block: ScalarBlock) -> ScalarBlock:
    """Flat wave operator -d_t^2 + Laplacian on the inner time levels."""
    if block.n_t < 3:
        raise WindowError("box needs at least 3 time levels")
    h = block.grid.dx
    out = []
    for k in range(1, block.n_t - 1):
        dtt = (block.data[k + 1] - 2.0 * block.data[k] + block.data[k - 1]) / block.dt ** 2
        out.append(-dtt + fd.laplacian(block.data[k], h, block.periodic))
    return ScalarBlock(np.stack(out), block.grid, block.dt, block.t0 + block.dt, periodic=block.periodic)


def commutator_residual(gen: Generator, phi: ScalarBlock, box_phi: ScalarBlock = None,
                        margin: int = 4) -> float:
    """sup |Z box phi - box Z phi + c_Z box phi| at the centre level of a 5-level window.

    ``box_phi`` may carry the exact wave operator of the test function on the
    same levels.  Without it both orderings are formed by finite differences;
    translations then commute with the discrete operator to rounding.
    """
    if phi.n_t < 5:
        raise WindowError("commutator check needs 5 time levels")
    bphi = box(phi) if box_phi is None else box_phi
    z_b = apply_z(gen, bphi)
    b_z = box(apply_z(gen, phi))
    t_c = phi.t_center
    k_zb = int(round((t_c - z_b.t0) / phi.dt))
    k_bz = int(round((t_c - b_z.t0) / phi.dt))
    k_b = int(round((t_c - bphi.t0) / phi.dt))
    res = z_b.data[k_zb] - b_z.data[k_bz] + gen.c_Z * bphi.data[k_b]
    return float(np.max(np.abs(res[fd.interior(margin)])))


@dataclass(frozen=True)
class GaussianTestFunction:
    """exp(-a (t - t0)^2 - b |x - x0|^2) with its exact flat wave operator."""
    a: float = 2.0
    b: float = 1.2
    t0: float = 0.05
    x0: Tuple[float, float, float] = (0.2, -0.1, 0.05)

    def _parts(self, t, X, Y, Z):
        dt = t - self.t0
        rr = (X - self.x0[0]) ** 2 + (Y - self.x0[1]) ** 2 + (Z - self.x0[2]) ** 2
        return dt, rr, np.exp(-self.a * dt * dt - self.b * rr)

    def value(self, t, X, Y, Z):
        return self._parts(t, X, Y, Z)[2]

    def box(self, t, X, Y, Z):
        dt, rr, f = self._parts(t, X, Y, Z)
        ftt = (4.0 * self.a ** 2 * dt * dt - 2.0 * self.a) * f
        lap = (4.0 * self.b ** 2 * rr - 6.0 * self.b) * f
        return -ftt + lap


def c_LL(gen: Generator, L: np.ndarray) -> float:
    return float(L @ gen.c_lower @ L)


def _coef(gen_tag: str, t: float, x: np.ndarray) -> np.ndarray:
    return get(gen_tag).coefficients(t, *x)


def frame_identity_residual(t: float, x: Sequence[float]) -> Dict[str, float]:
    """Reconstruct d_t, d_r, d_i, d_s and the angular derivatives from Z coefficients.

    Returns the max coefficient mismatch of each identity.  The t^2 - r^2 forms
    are skipped with an error on the cone.
    """
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("identities need r > 0")
    w = x / r
    S = _coef("S", t, x)
    O0 = [_coef(f"O0{i}", t, x) for i in (1, 2, 3)]
    Oij = {}
    for i in range(1, 4):
        for j in range(1, 4):
            if i != j:
                a, b = min(i, j), max(i, j)
                sign = 1.0 if i < j else -1.0
                Oij[i, j] = sign * _coef(f"O{a}{b}", t, x)
    e = np.eye(4)
    res: Dict[str, float] = {}
    # d_s = (S - w^i O_0i) / (2(t + r)) holds on and off the cone
    ds = (S - sum(w[i] * O0[i] for i in range(3))) / (2.0 * (t + r))
    res["ds"] = float(np.max(np.abs(ds - 0.5 * np.concatenate([[1.0], w]))))
    # angular derivatives: dbar_i = -w^j O_ij / r
    worst = 0.0
    for i in range(1, 4):
        dbar = -sum(w[j - 1] * Oij[i, j] for j in range(1, 4) if j != i) / r
        direct = e[i] - w[i - 1] * np.concatenate([[0.0], w])
        worst = max(worst, float(np.max(np.abs(dbar - direct))))
    res["dbar"] = worst
    d = t * t - r * r
    if abs(d) < 1e-12 * max(1.0, t * t):
        raise ValueError("identity degenerate on the cone")
    dt = (t * S + sum(x[i] * O0[i] for i in range(3))) / d
    res["dt"] = float(np.max(np.abs(dt - e[0])))
    dr = (r * S + t * sum(w[i] * O0[i] for i in range(3))) / (-d)
    res["dr"] = float(np.max(np.abs(dr - np.concatenate([[0.0], w]))))
    worst = 0.0
    for i in range(1, 4):
        di = (sum(x[j - 1] * Oij[i, j] for j in range(1, 4) if j != i) - t * O0[i - 1] - x[i - 1] * S) / d
        worst = max(worst, float(np.max(np.abs(di - e[i]))))
    res["di"] = worst
    return res


# -- analytic application on functions with known derivatives ---------------

def apply_pair_analytic(gen1: Generator, gen2: Generator, X: np.ndarray,
                        grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Z1 Z2 f from the exact gradient and Hessian of f at spacetime points X.

    ``X`` has shape (4, ...), ``grad`` (4, ...), ``hess`` (4, 4, ...).  Since
    Z2 has affine coefficients, Z1(Z2^nu d_nu f) = Z1^mu C2[nu, mu] d_nu f
    + Z1^mu Z2^nu d_mu d_nu f.
    """
    z1 = gen1.coefficients(*X)
    z2 = gen2.coefficients(*X)
    first = np.einsum("m...,nm,n...->...", z1, gen2.C, grad)
    second = np.einsum("m...,n...,mn...->...", z1, z2, hess)
    return first + second


def apply_single_analytic(gen: Generator, X: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return np.einsum("m...,m...->...", gen.coefficients(*X), grad)


def multi_indices(max_len: int) -> List[Tuple[str, ...]]:
    tags = list(GENERATORS)
    out: List[Tuple[str, ...]] = [()]
    layer: List[Tuple[str, ...]] = [()]
    for _ in range(max_len):
        layer = [p + (t,) for p in layer for t in tags]
        out += layer
    return out
