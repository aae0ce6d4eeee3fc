"""Compiled pointwise kernel for the reduced Einstein-scalar right-hand side.

The kernel fuses the metric inverse, the quadratic source S_ab, the scalar
stress term and the solve for d_t^2 into one pass over grid points.  The
numpy implementation in :mod:`hglab.geometry` and :mod:`hglab.evolution`
computes the same quantity through batched matrix products and serves as
its reference.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_PA = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 3])
_PB = np.array([0, 1, 2, 3, 1, 2, 3, 2, 3, 3])
_IDX = np.zeros((4, 4), dtype=np.int64)
for _k in range(10):
    _IDX[_PA[_k], _PB[_k]] = _IDX[_PB[_k], _PA[_k]] = _k
_MIX = np.array([[0, 1], [0, 2], [1, 2]])


@njit(cache=True)
def _inv4(a, inv, out):
    """Inverse of a flattened 4x4 matrix by cofactors; returns the determinant."""
    inv[0] = a[5]*a[10]*a[15] - a[5]*a[11]*a[14] - a[9]*a[6]*a[15] + a[9]*a[7]*a[14] + a[13]*a[6]*a[11] - a[13]*a[7]*a[10]
    inv[4] = -a[4]*a[10]*a[15] + a[4]*a[11]*a[14] + a[8]*a[6]*a[15] - a[8]*a[7]*a[14] - a[12]*a[6]*a[11] + a[12]*a[7]*a[10]
    inv[8] = a[4]*a[9]*a[15] - a[4]*a[11]*a[13] - a[8]*a[5]*a[15] + a[8]*a[7]*a[13] + a[12]*a[5]*a[11] - a[12]*a[7]*a[9]
    inv[12] = -a[4]*a[9]*a[14] + a[4]*a[10]*a[13] + a[8]*a[5]*a[14] - a[8]*a[6]*a[13] - a[12]*a[5]*a[10] + a[12]*a[6]*a[9]
    inv[1] = -a[1]*a[10]*a[15] + a[1]*a[11]*a[14] + a[9]*a[2]*a[15] - a[9]*a[3]*a[14] - a[13]*a[2]*a[11] + a[13]*a[3]*a[10]
    inv[5] = a[0]*a[10]*a[15] - a[0]*a[11]*a[14] - a[8]*a[2]*a[15] + a[8]*a[3]*a[14] + a[12]*a[2]*a[11] - a[12]*a[3]*a[10]
    inv[9] = -a[0]*a[9]*a[15] + a[0]*a[11]*a[13] + a[8]*a[1]*a[15] - a[8]*a[3]*a[13] - a[12]*a[1]*a[11] + a[12]*a[3]*a[9]
    inv[13] = a[0]*a[9]*a[14] - a[0]*a[10]*a[13] - a[8]*a[1]*a[14] + a[8]*a[2]*a[13] + a[12]*a[1]*a[10] - a[12]*a[2]*a[9]
    inv[2] = a[1]*a[6]*a[15] - a[1]*a[7]*a[14] - a[5]*a[2]*a[15] + a[5]*a[3]*a[14] + a[13]*a[2]*a[7] - a[13]*a[3]*a[6]
    inv[6] = -a[0]*a[6]*a[15] + a[0]*a[7]*a[14] + a[4]*a[2]*a[15] - a[4]*a[3]*a[14] - a[12]*a[2]*a[7] + a[12]*a[3]*a[6]
    inv[10] = a[0]*a[5]*a[15] - a[0]*a[7]*a[13] - a[4]*a[1]*a[15] + a[4]*a[3]*a[13] + a[12]*a[1]*a[7] - a[12]*a[3]*a[5]
    inv[14] = -a[0]*a[5]*a[14] + a[0]*a[6]*a[13] + a[4]*a[1]*a[14] - a[4]*a[2]*a[13] - a[12]*a[1]*a[6] + a[12]*a[2]*a[5]
    inv[3] = -a[1]*a[6]*a[11] + a[1]*a[7]*a[10] + a[5]*a[2]*a[11] - a[5]*a[3]*a[10] - a[9]*a[2]*a[7] + a[9]*a[3]*a[6]
    inv[7] = a[0]*a[6]*a[11] - a[0]*a[7]*a[10] - a[4]*a[2]*a[11] + a[4]*a[3]*a[10] + a[8]*a[2]*a[7] - a[8]*a[3]*a[6]
    inv[11] = -a[0]*a[5]*a[11] + a[0]*a[7]*a[9] + a[4]*a[1]*a[11] - a[4]*a[3]*a[9] - a[8]*a[1]*a[7] + a[8]*a[3]*a[5]
    inv[15] = a[0]*a[5]*a[10] - a[0]*a[6]*a[9] - a[4]*a[1]*a[10] + a[4]*a[2]*a[9] + a[8]*a[1]*a[6] - a[8]*a[2]*a[5]
    det = a[0]*inv[0] + a[1]*inv[4] + a[2]*inv[8] + a[3]*inv[12]
    if det != 0.0:
        for i in range(4):
            for j in range(4):
                out[i, j] = inv[4 * i + j] / det
    return det


@njit(cache=True)
def _accel_at(u_p, v_p, du_p, dv_p, d2_p, mix_p, out, sc):
    """Acceleration d_t^2 u at one point from its local derivative arrays.

    u_p, v_p: (11,); du_p, dv_p, d2_p, mix_p: (3, 11) with mix ordered (xy, xz, yz).
    Returns g^00, or +inf when the metric is singular.
    """
    g, work, gi, D, Gl, A, B, C, T, dpsi, rhs = sc
    for a in range(4):
        for b in range(4):
            k = _IDX[a, b]
            g[4 * a + b] = u_p[k]
            D[0, a, b] = v_p[k]
            for c in range(3):
                D[c + 1, a, b] = du_p[c, k]
    det = _inv4(g, work, gi)
    if abs(det) < 1e-12:
        return np.inf
    for l in range(4):
        for m in range(4):
            for n in range(4):
                Gl[l, m, n] = 0.5 * (D[m, l, n] + D[n, l, m] - D[l, m, n])
    # A[f,c,a] = g^{fe} D[e,c,a];  B[f,d,a] = g^{cd} A[f,c,a]
    for f in range(4):
        for c in range(4):
            for a in range(4):
                s = 0.0
                for e in range(4):
                    s += gi[f, e] * D[e, c, a]
                A[f, c, a] = s
    for f in range(4):
        for d in range(4):
            for a in range(4):
                s = 0.0
                for c in range(4):
                    s += gi[c, d] * A[f, c, a]
                B[f, d, a] = s
    # C[a,d,f] = g^{cd} g^{ef} Gamma_{ace}
    for a in range(4):
        for c in range(4):
            for f in range(4):
                s = 0.0
                for e in range(4):
                    s += Gl[a, c, e] * gi[e, f]
                T[c, f] = s
        for d in range(4):
            for f in range(4):
                s = 0.0
                for c in range(4):
                    s += gi[c, d] * T[c, f]
                C[a, d, f] = s
    dpsi[0] = v_p[10]
    for c in range(3):
        dpsi[c + 1] = du_p[c, 10]
    for k in range(10):
        a = _PA[k]
        b = _PB[k]
        s = 0.0
        for f in range(4):
            for d in range(4):
                s += B[f, d, a] * D[f, d, b] - C[a, d, f] * Gl[b, d, f]
        rhs[k] = 2.0 * s - 2.0 * dpsi[a] * dpsi[b]
    rhs[10] = 0.0
    for k in range(11):
        s = rhs[k]
        for i in range(3):
            s -= 2.0 * gi[0, i + 1] * dv_p[i, k]
            s -= gi[i + 1, i + 1] * d2_p[i, k]
        for m in range(3):
            s -= 2.0 * gi[_MIX[m, 0] + 1, _MIX[m, 1] + 1] * mix_p[m, k]
        out[k] = s / gi[0, 0]
    return gi[0, 0]


@njit(cache=True)
def _scratch():
    return (np.empty(16), np.empty(16), np.empty((4, 4)), np.empty((4, 4, 4)),
            np.empty((4, 4, 4)), np.empty((4, 4, 4)), np.empty((4, 4, 4)),
            np.empty((4, 4, 4)), np.empty((4, 4)), np.empty(4), np.empty(11))


@njit(cache=True)
def einstein_acceleration(u, v, du, dv, d2, dmix, acc):
    """Solve g^{ab} d_a d_b u_k = RHS_k for d_t^2 u_k at every point.

    Arrays are flattened over the grid: u, v, acc (11, N); du, dv, d2 (3, 11, N);
    dmix (3, 11, N) ordered as (xy, xz, yz).  Returns (status, max g^00) with
    status 0 on success, 1 for a singular metric at some point.
    """
    N = u.shape[1]
    sc = _scratch()
    u_p = np.empty(11)
    v_p = np.empty(11)
    du_p = np.empty((3, 11))
    dv_p = np.empty((3, 11))
    d2_p = np.empty((3, 11))
    mix_p = np.empty((3, 11))
    out = np.empty(11)
    status = 0
    gmax = -np.inf
    for p in range(N):
        for k in range(11):
            u_p[k] = u[k, p]
            v_p[k] = v[k, p]
            for c in range(3):
                du_p[c, k] = du[c, k, p]
                dv_p[c, k] = dv[c, k, p]
                d2_p[c, k] = d2[c, k, p]
                mix_p[c, k] = dmix[c, k, p]
        g00 = _accel_at(u_p, v_p, du_p, dv_p, d2_p, mix_p, out, sc)
        if g00 == np.inf:
            status = 1
            continue
        if g00 > gmax:
            gmax = g00
        for k in range(11):
            acc[k, p] = out[k]
    return status, gmax


# integer weights, scaled after summation so constants difference to exactly zero
_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])
_C6 = np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0])


@njit(cache=True)
def einstein_rhs_interior(u, v, h, sigma, du_t, dv):
    """Full right-hand side on points at least 2 layers from every face.

    u, v, du_t, dv have shape (11, nx, ny, nz).  Fourth-order centred
    stencils, the pointwise acceleration and sixth-difference dissipation
    (on points at least 3 layers in) are fused into one sweep; the two
    outer layers are left untouched for the boundary rule.
    Returns (status, max g^00) as :func:`einstein_acceleration`.
    """
    nx, ny, nz = u.shape[1], u.shape[2], u.shape[3]
    sc = _scratch()
    u_p = np.empty(11)
    v_p = np.empty(11)
    du_p = np.empty((3, 11))
    dv_p = np.empty((3, 11))
    d2_p = np.empty((3, 11))
    mix_p = np.empty((3, 11))
    out = np.empty(11)
    i1 = 1.0 / (12.0 * h)
    i2 = 1.0 / (12.0 * h * h)
    imix = i1 * i1
    ko = sigma / (64.0 * h)
    status = 0
    gmax = -np.inf
    for i in range(2, nx - 2):
        for j in range(2, ny - 2):
            for k in range(2, nz - 2):
                for c in range(11):
                    u_p[c] = u[c, i, j, k]
                    v_p[c] = v[c, i, j, k]
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    t0 = 0.0
                    t1 = 0.0
                    t2 = 0.0
                    q0 = 0.0
                    q1 = 0.0
                    q2 = 0.0
                    for m in range(5):
                        o = m - 2
                        w1 = _C1[m]
                        w2 = _C2[m]
                        s0 += w1 * u[c, i + o, j, k]
                        s1 += w1 * u[c, i, j + o, k]
                        s2 += w1 * u[c, i, j, k + o]
                        t0 += w1 * v[c, i + o, j, k]
                        t1 += w1 * v[c, i, j + o, k]
                        t2 += w1 * v[c, i, j, k + o]
                        q0 += w2 * u[c, i + o, j, k]
                        q1 += w2 * u[c, i, j + o, k]
                        q2 += w2 * u[c, i, j, k + o]
                    du_p[0, c] = s0 * i1
                    du_p[1, c] = s1 * i1
                    du_p[2, c] = s2 * i1
                    dv_p[0, c] = t0 * i1
                    dv_p[1, c] = t1 * i1
                    dv_p[2, c] = t2 * i1
                    d2_p[0, c] = q0 * i2
                    d2_p[1, c] = q1 * i2
                    d2_p[2, c] = q2 * i2
                    mxy = 0.0
                    mxz = 0.0
                    myz = 0.0
                    for a in range(5):
                        wa = _C1[a]
                        if wa == 0.0:
                            continue
                        for b in range(5):
                            wb = _C1[b]
                            if wb == 0.0:
                                continue
                            mxy += wa * wb * u[c, i + a - 2, j + b - 2, k]
                            mxz += wa * wb * u[c, i + a - 2, j, k + b - 2]
                            myz += wa * wb * u[c, i, j + a - 2, k + b - 2]
                    mix_p[0, c] = mxy * imix
                    mix_p[1, c] = mxz * imix
                    mix_p[2, c] = myz * imix
                g00 = _accel_at(u_p, v_p, du_p, dv_p, d2_p, mix_p, out, sc)
                if g00 == np.inf:
                    status = 1
                    continue
                if g00 > gmax:
                    gmax = g00
                inner = (sigma != 0.0 and 3 <= i < nx - 3 and 3 <= j < ny - 3
                         and 3 <= k < nz - 3)
                for c in range(11):
                    du_t[c, i, j, k] = v[c, i, j, k]
                    dv[c, i, j, k] = out[c]
                    if inner:
                        ku = 0.0
                        kv = 0.0
                        for m in range(7):
                            o = m - 3
                            w6 = _C6[m]
                            ku += w6 * (u[c, i + o, j, k] + u[c, i, j + o, k] + u[c, i, j, k + o])
                            kv += w6 * (v[c, i + o, j, k] + v[c, i, j + o, k] + v[c, i, j, k + o])
                        du_t[c, i, j, k] += ko * ku
                        dv[c, i, j, k] += ko * kv
    return status, gmax
