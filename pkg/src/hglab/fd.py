"""Finite-difference stencils on uniform Cartesian grids.

All operators act on the trailing three axes of an array, so a stack of
components ``(..., nx, ny, nz)`` is differentiated in one call.  Interior
points use fourth-order centered stencils; on non-periodic grids the two
outermost layers fall back to second-order formulas.
"""
from __future__ import annotations

import numpy as np

SPATIAL_AXES = (-3, -2, -1)


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _shift(n: int, k: int) -> slice:
    """Slice selecting points i+k for i in the 4th-order interior [2, n-2)."""
    return slice(2 + k, n - 2 + k if n - 2 + k != 0 else None)


def d1(f: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    """First derivative along ``axis`` (an index into the trailing 3 axes or negative)."""
    if periodic:
        return (np.roll(f, 2, axis) - 8.0 * np.roll(f, 1, axis)
                + 8.0 * np.roll(f, -1, axis) - np.roll(f, -2, axis)) / (12.0 * h)
    n = f.shape[axis]
    if n < 5:
        raise ValueError(f"need at least 5 points along axis {axis}, got {n}")
    nd = f.ndim
    out = np.empty_like(f)
    mid = out[_sl(nd, axis, slice(2, n - 2))]
    np.subtract(f[_sl(nd, axis, _shift(n, 1))], f[_sl(nd, axis, _shift(n, -1))], out=mid)
    mid *= 8.0
    mid -= f[_sl(nd, axis, _shift(n, 2))]
    mid += f[_sl(nd, axis, _shift(n, -2))]
    mid *= 1.0 / (12.0 * h)
    # second-order closures
    g = lambda i: f[_sl(nd, axis, slice(i, i + 1 if i != -1 else None))]
    out[_sl(nd, axis, slice(0, 1))] = (-3.0 * g(0) + 4.0 * g(1) - g(2)) / (2.0 * h)
    out[_sl(nd, axis, slice(1, 2))] = (g(2) - g(0)) / (2.0 * h)
    out[_sl(nd, axis, slice(n - 2, n - 1))] = (g(n - 1) - g(n - 3)) / (2.0 * h)
    out[_sl(nd, axis, slice(n - 1, n))] = (3.0 * g(n - 1) - 4.0 * g(n - 2) + g(n - 3)) / (2.0 * h)
    return out


def d2(f: np.ndarray, axis: int, h: float, periodic: bool = False) -> np.ndarray:
    """Second derivative along ``axis``."""
    if periodic:
        return (-np.roll(f, 2, axis) + 16.0 * np.roll(f, 1, axis) - 30.0 * f
                + 16.0 * np.roll(f, -1, axis) - np.roll(f, -2, axis)) / (12.0 * h * h)
    n = f.shape[axis]
    if n < 5:
        raise ValueError(f"need at least 5 points along axis {axis}, got {n}")
    nd = f.ndim
    out = np.empty_like(f)
    mid = out[_sl(nd, axis, slice(2, n - 2))]
    np.add(f[_sl(nd, axis, _shift(n, 1))], f[_sl(nd, axis, _shift(n, -1))], out=mid)
    mid *= 16.0
    mid -= f[_sl(nd, axis, _shift(n, 2))]
    mid -= f[_sl(nd, axis, _shift(n, -2))]
    mid -= 30.0 * f[_sl(nd, axis, _shift(n, 0))]
    mid *= 1.0 / (12.0 * h * h)
    g = lambda i: f[_sl(nd, axis, slice(i, i + 1 if i != -1 else None))]
    out[_sl(nd, axis, slice(0, 1))] = (2.0 * g(0) - 5.0 * g(1) + 4.0 * g(2) - g(3)) / (h * h)
    out[_sl(nd, axis, slice(1, 2))] = (g(0) - 2.0 * g(1) + g(2)) / (h * h)
    out[_sl(nd, axis, slice(n - 2, n - 1))] = (g(n - 3) - 2.0 * g(n - 2) + g(n - 1)) / (h * h)
    out[_sl(nd, axis, slice(n - 1, n))] = (2.0 * g(n - 1) - 5.0 * g(n - 2) + 4.0 * g(n - 3) - g(n - 4)) / (h * h)
    return out


def gradient(f: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    """Stack of the three spatial first derivatives, shape ``(3,) + f.shape``."""
    return np.stack([d1(f, ax, h, periodic) for ax in SPATIAL_AXES])


def hessian(f: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    """Symmetric array of second spatial derivatives, shape ``(3, 3) + f.shape``."""
    out = np.empty((3, 3) + f.shape)
    first = [d1(f, ax, h, periodic) for ax in SPATIAL_AXES]
    for i, ax in enumerate(SPATIAL_AXES):
        out[i, i] = d2(f, ax, h, periodic)
        for j in range(i + 1, 3):
            out[i, j] = out[j, i] = d1(first[i], SPATIAL_AXES[j], h, periodic)
    return out


def laplacian(f: np.ndarray, h: float, periodic: bool = False) -> np.ndarray:
    return sum(d2(f, ax, h, periodic) for ax in SPATIAL_AXES)


def ko_dissipation(f: np.ndarray, h: float, strength: float, periodic: bool = False) -> np.ndarray:
    """Kreiss-Oliger sixth-difference dissipation term, zero in the outer 3 layers.

    Returns ``strength / (64 h) * sum_axes D6 f``; the highest grid mode is
    damped at rate ``strength / h`` per axis.
    """
    out = np.zeros_like(f)
    if strength == 0.0:
        return out
    for ax in SPATIAL_AXES:
        if periodic:
            r = lambda k: np.roll(f, -k, ax)
            out += r(-3) + r(3) - 6.0 * (r(-2) + r(2)) + 15.0 * (r(-1) + r(1)) - 20.0 * f
        else:
            n = f.shape[ax]
            nd = f.ndim
            s = lambda k: f[_sl(nd, ax, slice(3 + k, n - 3 + k if n - 3 + k != 0 else None))]
            acc = s(-3) + s(3)
            acc -= 6.0 * (s(-2) + s(2))
            acc += 15.0 * (s(-1) + s(1))
            acc -= 20.0 * s(0)
            out[_sl(nd, ax, slice(3, n - 3))] += acc
    if not periodic:
        # the per-axis sums above leave boundary layers of other axes populated
        for ax in SPATIAL_AXES:
            nd = f.ndim
            out[_sl(nd, ax, slice(0, 3))] = 0.0
            out[_sl(nd, ax, slice(f.shape[ax] - 3, None))] = 0.0
    out *= strength / (64.0 * h)
    return out


def interior_mask(shape: tuple, margin: int) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[margin:shape[0] - margin, margin:shape[1] - margin, margin:shape[2] - margin] = True
    return m


def interior(margin: int) -> tuple:
    """Index tuple trimming ``margin`` points from each end of the 3 spatial axes."""
    s = slice(margin, -margin if margin else None)
    return (Ellipsis, s, s, s)
