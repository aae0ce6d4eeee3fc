"""Property sweeps shared by the ``check`` command and the acceptance tests.

Every suite takes an explicit seed and returns plain dicts so that results
can be written to CSV/JSON without further processing.
"""
from __future__ import annotations

import math
from typing import Dict, List, Sequence

import numpy as np

from . import fd
from .blocks import Grid, sample_metric, sample_scalar, SYM_PAIRS
from .diagnostics import (RadialProfile, SpacetimeGaussian, WeightSpec, classical_hardy_ratio,
                          gaussian_bump_profile, hardy_ratio, hormander_rhs, hormander_ratio,
                          ks_ratio)
from .evolution import duhamel_eval
from .geometry import reduced_identity_residual
from .nullframe import ETA, frame_at, quadratic_P, quadratic_P_bruteforce
from .vectorfields import GaussianTestFunction, all_generators, commutator_residual

# coefficient of pi_LL pi_LbLb in P(pi, pi) with P = 1/4 tr tr - 1/2 contraction
P_LL_LBLB = -0.25


def commutator_suite(ns: Sequence[int] = (33, 65), half_width: float = 2.0,
                     test: GaussianTestFunction = GaussianTestFunction(),
                     t: float = 0.3) -> Dict[str, Dict[str, float]]:
    """Residual of [Z, box] phi + c_Z box phi at two resolutions and their ratio per generator."""
    out = {}
    for gen in all_generators():
        res = []
        for n in ns:
            grid = Grid.cube(n, half_width)
            ts = t + grid.dx * np.arange(-2, 3)
            phi = sample_scalar(test.value, grid, ts)
            bphi = sample_scalar(test.box, grid, ts)
            res.append(commutator_residual(gen, phi, bphi))
        out[gen.tag] = {"coarse": res[0], "fine": res[1], "ratio": res[0] / res[1]}
    return out


def random_metric(rng: np.random.Generator, amp: float = 0.05):
    """Smooth metric m + sum of plane-wave perturbations, as a function of (t, X, Y, Z)."""
    K = rng.normal(size=(10, 4))
    A = amp * rng.uniform(0.5, 1.0, size=10)
    ph = rng.uniform(0.0, 2.0 * math.pi, size=10)

    def metric(t, X, Y, Z):
        g = np.zeros((4, 4) + X.shape)
        for a in range(4):
            g[a, a] = ETA[a, a]
        for k, (a, b) in enumerate(SYM_PAIRS):
            w = A[k] * np.sin(K[k, 0] * t + K[k, 1] * X + K[k, 2] * Y + K[k, 3] * Z + ph[k])
            g[a, b] += w
            if a != b:
                g[b, a] += w
        return g

    return metric


def identity_refinement(seed: int = 0, n_metrics: int = 2, ns: Sequence[int] = (17, 33),
                        half_width: float = 2.0, t: float = 0.3, margin: int = 4) -> List[Dict[str, float]]:
    """Reduced-Ricci identity residual at two resolutions for random metrics near m."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_metrics):
        metric = random_metric(rng)
        res = []
        for n in ns:
            grid = Grid.cube(n, half_width)
            blk = sample_metric(metric, grid, t + grid.dx * np.arange(-2, 3))
            res.append(float(np.max(np.abs(reduced_identity_residual(blk)[fd.interior(margin)]))))
        rows.append({"metric": k, "coarse": res[0], "fine": res[1], "ratio": res[0] / res[1]})
    return rows


def _random_sym(rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(4, 4))
    return a + a.T


def p_bruteforce_gap(seed: int = 0, n: int = 1000) -> float:
    """Largest |quadratic_P - loop sum| relative to the size of the inputs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        pi, th = _random_sym(rng), _random_sym(rng)
        scale = np.abs(pi).max() * np.abs(th).max()
        worst = max(worst, abs(float(quadratic_P(pi, th)) - quadratic_P_bruteforce(pi, th)) / scale)
    return worst


def _frame_basis_tensor(frame, U: str, V: str) -> np.ndarray:
    """Covariant tensor with frame component 1 at (U, V) and (V, U), 0 elsewhere."""
    M = frame.matrix().T
    dual = np.linalg.inv(M)          # rows: coframe in coordinate components
    idx = {"L": 0, "Lb": 1, "S1": 2, "S2": 3}
    a, b = dual[idx[U]], dual[idx[V]]
    return np.outer(a, b) + (np.outer(b, a) if U != V else 0.0)


def p_null_defect(seed: int = 0, n: int = 200) -> float:
    """Variation of P(pi, pi) - P_LL_LBLB pi_LL pi_LbLb as pi_LbLb alone is changed."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(size=3)
        fr = frame_at(x)
        pi = _random_sym(rng)
        E = _frame_basis_tensor(fr, "Lb", "Lb")
        base = None
        for s in rng.normal(size=3) * 3.0:
            p2 = pi + s * E
            pLL = float(fr.L @ p2 @ fr.L)
            pLbLb = float(fr.Lbar @ p2 @ fr.Lbar)
            val = float(quadratic_P(p2, p2)) - P_LL_LBLB * pLL * pLbLb
            if base is None:
                base = val
            worst = max(worst, abs(val - base) / max(1.0, abs(base)))
    return worst


def ks_suite(seed: int = 0, n_samples: int = 100, times: Sequence[float] = (0.0, 5.0, 10.0),
             n: int = 41, spec: WeightSpec = WeightSpec()) -> List[Dict[str, float]]:
    """Weighted Klainerman-Sobolev ratio for random spacetime Gaussian bumps."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_samples):
        t = float(times[k % len(times)])
        hw = t + 7.0
        grid = Grid.cube(n, hw)
        rad = rng.uniform(0.0, t + 1.0)
        d = rng.normal(size=3)
        x0 = tuple(rad * d / np.linalg.norm(d))
        bump = GaussianTestFunction(a=float(rng.uniform(0.2, 0.8)), b=float(rng.uniform(0.3, 0.8)),
                                    t0=t, x0=x0)
        amp = float(rng.uniform(0.5, 2.0))
        phi = sample_scalar(lambda tt, X, Y, Z: amp * bump.value(tt, X, Y, Z), grid,
                            t + grid.dx * np.arange(-2, 3))
        rows.append({"t": t, "radius": rad, "ratio": ks_ratio(phi, spec)})
    return rows


def random_radial_profiles(rng: np.random.Generator, n: int, r_max: float = 30.0) -> List[RadialProfile]:
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        out.append(gaussian_bump_profile(rng.uniform(0.0, r_max, k), rng.uniform(0.5, 3.0, k),
                                         rng.normal(size=k)))
    return out


def hardy_suite(seed: int = 0, n_samples: int = 100, spec: WeightSpec = WeightSpec(),
                n_segs: Sequence[int] = (200, 400)) -> List[Dict[str, float]]:
    """Cone-adapted Hardy ratio for random radial profiles at two quadrature resolutions."""
    rng = np.random.default_rng(seed)
    profs = random_radial_profiles(rng, n_samples)
    ts = rng.uniform(0.0, 30.0, n_samples)
    alphas = rng.uniform(0.0, 2.0, n_samples)
    rows = []
    for prof, t, a in zip(profs, ts, alphas):
        row = {"t": float(t), "alpha": float(a)}
        for ns in n_segs:
            row[f"ratio_{ns}"] = hardy_ratio(prof, float(t), float(a), spec, r_max=60.0, n_seg=ns)
        rows.append(row)
    return rows


def gaussian_classical_hardy(n_seg: int = 200) -> float:
    prof = RadialProfile(lambda r: np.exp(-r * r / 2.0), lambda r: -r * np.exp(-r * r / 2.0))
    return classical_hardy_ratio(prof, n_seg=n_seg)


def hormander_suite(seed: int = 0, times: Sequence[float] = (1.0, 2.0, 3.0, 4.0),
                    points_per_time: int = 25) -> List[Dict[str, float]]:
    """|w|(1 + t + |x|) over the |I| <= 2 source integral for a spacetime Gaussian source."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in times:
        src = SpacetimeGaussian(amp=float(rng.uniform(0.5, 2.0)), a=2.0, b=1.5,
                                s0=0.5 * t, y0=tuple(rng.uniform(-0.5, 0.5, 3)))
        rhs = hormander_rhs(src, t)
        d = rng.normal(size=(3, points_per_time))
        d /= np.linalg.norm(d, axis=0)
        x = d * rng.uniform(0.0, t + 2.0, points_per_time)
        w = duhamel_eval(src, t, x)
        for j in range(points_per_time):
            rows.append({"t": float(t), "r": float(np.linalg.norm(x[:, j])),
                         "ratio": hormander_ratio(float(w[j]), t, x[:, j], rhs)})
    return rows


SUITES = ("commutators", "geometry", "ks", "hardy", "hormander")


def run_suite(name: str, seed: int = 0) -> Dict[str, object]:
    """Rows plus a summary for one named suite."""
    if name == "commutators":
        res = commutator_suite()
        ratios = [v["ratio"] for v in res.values()]
        rows = [{"generator": k, **v} for k, v in res.items()]
        return {"rows": rows, "summary": {"min_ratio": min(ratios), "max_ratio": max(ratios)}}
    if name == "geometry":
        rows = identity_refinement(seed)
        return {"rows": rows, "summary": {"min_ratio": min(r["ratio"] for r in rows),
                                          "max_ratio": max(r["ratio"] for r in rows),
                                          "p_bruteforce_gap": p_bruteforce_gap(seed),
                                          "p_null_defect": p_null_defect(seed)}}
    if name == "ks":
        rows = ks_suite(seed)
        return {"rows": rows, "summary": {"max_ratio": max(r["ratio"] for r in rows),
                                          "samples": len(rows)}}
    if name == "hardy":
        rows = hardy_suite(seed)
        c1 = max(r["ratio_200"] for r in rows)
        c2 = max(r["ratio_400"] for r in rows)
        return {"rows": rows, "summary": {"C": c2, "C_coarse": c1, "rel_change": abs(c1 - c2) / c2,
                                          "classical_gaussian": gaussian_classical_hardy(),
                                          "samples": len(rows)}}
    if name == "hormander":
        rows = hormander_suite(seed)
        return {"rows": rows, "summary": {"max_ratio": max(r["ratio"] for r in rows),
                                          "samples": len(rows)}}
    raise ValueError(f"unknown check suite {name!r}; choose from {SUITES}")
