"""Null frame adapted to outgoing Minkowski cones, frame contractions and seminorms.

Indices follow the (t, x1, x2, x3) ordering and are raised and lowered with
the Minkowski metric ``ETA = diag(-1, 1, 1, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
ETA_INV = ETA.copy()

# Frame families as tuples of member names.
FAMILIES: Dict[str, Tuple[str, ...]] = {
    "L": ("L",),
    "T": ("L", "S1", "S2"),
    "U": ("L", "Lbar", "S1", "S2"),
    "S": ("S1", "S2"),
}


def _family(name: str) -> Tuple[str, ...]:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown frame family {name!r}; expected one of {sorted(FAMILIES)}") from None


@dataclass(frozen=True)
class NullFrame:
    point: np.ndarray
    L: np.ndarray
    Lbar: np.ndarray
    S1: np.ndarray
    S2: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.L[1:]

    def vector(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def matrix(self) -> np.ndarray:
        """Rows L, Lbar, S1, S2."""
        return np.stack([self.L, self.Lbar, self.S1, self.S2])


def _tangent_pair(omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent vectors, Gram-Schmidt from the axis least aligned with omega.

    Works on arrays of shape ``(3, ...)``.
    """
    k = np.argmin(np.abs(omega), axis=0)
    e = np.zeros_like(omega)
    np.put_along_axis(e, k[None], 1.0, axis=0)
    s1 = e - np.sum(e * omega, axis=0) * omega
    s1 = s1 / np.linalg.norm(s1, axis=0)
    s2 = np.cross(omega, s1, axis=0)
    return s1, s2


def frame_at(x: Sequence[float]) -> NullFrame:
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("frame undefined at origin")
    omega = x / r
    s1, s2 = _tangent_pair(omega)
    zero = np.zeros(1)
    return NullFrame(
        point=x.copy(),
        L=np.concatenate([[1.0], omega]),
        Lbar=np.concatenate([[1.0], -omega]),
        S1=np.concatenate([zero, s1]),
        S2=np.concatenate([zero, s2]),
    )


def frame_fields(X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> Dict[str, np.ndarray]:
    """Frame vectors at every grid point, each of shape ``(4,) + X.shape``.

    Points at the origin receive NaN frames.
    """
    pos = np.stack([X, Y, Z]).astype(float)
    r = np.sqrt(np.sum(pos * pos, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        omega = pos / r
    bad = r == 0.0
    omega[:, bad] = np.array([0.0, 0.0, 1.0])[:, None]
    s1, s2 = _tangent_pair(omega)
    one = np.ones_like(r)[None]
    zero = np.zeros_like(r)[None]
    out = {
        "L": np.concatenate([one, omega]),
        "Lbar": np.concatenate([one, -omega]),
        "S1": np.concatenate([zero, s1]),
        "S2": np.concatenate([zero, s2]),
    }
    for v in out.values():
        v[:, bad] = np.nan
    return out


def frame_component(p: np.ndarray, V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """p_{ab} V^a W^b; p has shape ``(4, 4, ...)`` and V, W ``(4, ...)``."""
    return np.einsum("ab...,a...,b...->...", p, V, W)


def seminorm(p: np.ndarray, V: str, W: str, frame) -> np.ndarray:
    """Sum of |p(X, Y)| over X in family ``V`` and Y in family ``W``.

    ``frame`` is a :class:`NullFrame` or a dict from :func:`frame_fields`.
    """
    get = frame.vector if isinstance(frame, NullFrame) else frame.__getitem__
    total = 0.0
    for a in _family(V):
        for b in _family(W):
            total = total + np.abs(frame_component(p, get(a), get(b)))
    return total


def raise_both(p: np.ndarray) -> np.ndarray:
    """p^{ab} with Minkowski raising; the diagonal form makes this a sign flip."""
    s = np.array([-1.0, 1.0, 1.0, 1.0])
    shape = (4, 4) + (1,) * (p.ndim - 2)
    return p * np.outer(s, s).reshape(shape)


def trace_m(p: np.ndarray) -> np.ndarray:
    return -p[0, 0] + p[1, 1] + p[2, 2] + p[3, 3]


def quadratic_P(pi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """1/4 tr(pi) tr(theta) - 1/2 pi^{ab} theta_{ab}, traces and raising with ETA."""
    contract = np.sum(raise_both(pi) * theta, axis=(0, 1))
    return 0.25 * trace_m(pi) * trace_m(theta) - 0.5 * contract


def quadratic_P_bruteforce(pi: np.ndarray, theta: np.ndarray) -> float:
    """Explicit four-fold index loop; reference for :func:`quadratic_P`."""
    tp = sum(ETA_INV[a, b] * pi[a, b] for a in range(4) for b in range(4))
    tt = sum(ETA_INV[a, b] * theta[a, b] for a in range(4) for b in range(4))
    c = 0.0
    for a in range(4):
        for a2 in range(4):
            for b in range(4):
                for b2 in range(4):
                    c += ETA_INV[a, a2] * ETA_INV[b, b2] * pi[a, b] * theta[a2, b2]
    return 0.25 * tp * tt - 0.5 * c


def null_form(kind: str, xi: np.ndarray, eta: np.ndarray, alpha: int = 0, beta: int = 1) -> np.ndarray:
    """Q0 = m^{ab} xi_a eta_b, or Q_{alpha beta} = xi_alpha eta_beta - xi_beta eta_alpha."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if kind == "Q0":
        return -xi[0] * eta[0] + xi[1] * eta[1] + xi[2] * eta[2] + xi[3] * eta[3]
    if kind == "Qab":
        if alpha == beta:
            raise ValueError("degenerate index pair")
        return xi[alpha] * eta[beta] - xi[beta] * eta[alpha]
    raise ValueError(f"unknown null form {kind!r}")


@dataclass(frozen=True)
class TangentialSplit:
    """Tangential derivatives of a covector at a point.

    ``dbar0`` is L^a grad_a, ``dbar`` the three angular projections and ``dq``
    the transversal derivative along q = r - t, i.e. -1/2 Lbar^a grad_a.
    """
    dbar0: float
    dbar: np.ndarray
    dq: float

    def norm(self) -> float:
        return float(np.sqrt(self.dbar0 ** 2 + np.dot(self.dbar, self.dbar)))


def tangential_gradient(grad: Sequence[float], x: Sequence[float]) -> TangentialSplit:
    grad = np.asarray(grad, dtype=float)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r == 0.0:
        raise ValueError("tangential derivatives undefined at origin")
    w = x / r
    spatial = grad[1:]
    radial = float(w @ spatial)
    return TangentialSplit(
        dbar0=float(grad[0] + radial),
        dbar=spatial - w * radial,
        dq=-0.5 * float(grad[0] - radial),
    )


def reconstruct_covector(split: TangentialSplit, x: Sequence[float]) -> np.ndarray:
    """Inverse of :func:`tangential_gradient` via frame completeness."""
    fr = frame_at(x)
    L_low = ETA @ fr.L
    Lbar_low = ETA @ fr.Lbar
    # grad = -1/2 (Lbar.grad) L_low - 1/2 (L.grad) Lbar_low + sum_a (S_a.grad) S_a
    lbar_dot = -2.0 * split.dq
    return -0.5 * lbar_dot * L_low - 0.5 * split.dbar0 * Lbar_low + np.concatenate([[0.0], split.dbar])


def lower(v: np.ndarray) -> np.ndarray:
    s = np.array([-1.0, 1.0, 1.0, 1.0]).reshape((4,) + (1,) * (np.ndim(v) - 1))
    return v * s
