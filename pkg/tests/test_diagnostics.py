import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hglab.blocks import Grid, MetricBlock, ScalarBlock, sample_metric, sample_scalar
from hglab.diagnostics import (DecayFit, DiagnosticError, DiagnosticSeries, RadialProfile, SpacetimeGaussian,
                               WeightSpec, annulus, classical_hardy_ratio, decay_fit, energy_balance_residual,
                               energy_E0_fields, energy_EN, energy_growth_exponent, gaussian_bump_profile,
                               hardy_ratio, hardy_sides, hormander_ratio, hormander_rhs,
                               inverse_perturbation_fields, ks_ratio, log_beats_powers, null_monitor,
                               wavec_floor, wavec_ratio, weight_bound_margin, weight_varpi, weight_w, z_tower)
from hglab.evolution import duhamel_eval
from hglab.nullframe import ETA
from hglab.vectorfields import GaussianTestFunction, WindowError

specs = st.builds(WeightSpec, st.floats(0.01, 1.0), st.floats(0.01, 0.49))


def test_weight_examples():
    w, _ = weight_w(np.array([0.0, 3.0, -3.0]))
    assert np.allclose(w, [2.0, 9.0, 1.5], rtol=0, atol=1e-14)


@given(specs)
def test_weight_derivative_bound(spec):
    q = np.linspace(-200, 200, 40001)
    assert weight_bound_margin(q, spec) <= 1e-12
    w, wp = weight_w(q, spec)
    assert np.all(wp >= 0) and np.all(w >= 1)


def test_weight_derivative_matches_difference_quotient():
    spec = WeightSpec(0.3, 0.2)
    q = np.array([-5.0, -1.3, 0.7, 4.0])
    h = 1e-6
    num = (weight_w(q + h, spec)[0] - weight_w(q - h, spec)[0]) / (2 * h)
    assert np.allclose(weight_w(q, spec)[1], num, rtol=1e-7)


def test_weight_spec_ranges():
    for bad in ({"gamma": 0.0}, {"gamma": 1.5}, {"mu": 0.5}, {"gamma_p": -2.0}, {"mu_p": 0.6}):
        with pytest.raises(ValueError):
            WeightSpec(**bad)
    assert np.allclose(weight_varpi([3.0, -3.0], WeightSpec(gamma_p=0.0, mu_p=0.25)), [4.0, math.sqrt(2.0)])


def test_series_requires_monotone_time():
    s = DiagnosticSeries()
    s.append({"t": 0.0, "a": 1.0})
    s.append({"t": 1.0, "b": 2.0})
    assert s.keys() == ["t", "a", "b"] and len(s) == 2
    with pytest.raises(DiagnosticError, match="monotone"):
        s.append({"t": 0.5})


def _windows(n, hw, t, lam=1.0, levels=7):
    grid = Grid.cube(n, hw)
    times = t + grid.dx * np.arange(-(levels // 2), levels // 2 + 1)
    fn = GaussianTestFunction(a=0.5, b=0.6, t0=t, x0=(0.3, 0.0, -0.2))
    h1 = sample_metric(lambda tt, X, Y, Z: lam * np.einsum("ab,...->ab...", np.diag([1.0, 0.5, 0.5, 0.5]),
                                                           fn.value(tt, X, Y, Z)), grid, times, role="h1")
    psi = sample_scalar(lambda tt, X, Y, Z: lam * fn.value(tt, X, Y, Z), grid, times)
    return h1, psi


def test_energy_flat_zero_and_homogeneous():
    h1, psi = _windows(17, 5.0, 1.0)
    zero = MetricBlock(np.zeros_like(h1.data), h1.grid, h1.dt, h1.t0, "h1")
    zpsi = ScalarBlock(np.zeros_like(psi.data), psi.grid, psi.dt, psi.t0)
    assert energy_EN(zero, zpsi, 2) == 0.0
    e1 = energy_EN(h1, psi, 1)
    h2, psi2 = _windows(17, 5.0, 1.0, lam=3.0)
    assert energy_EN(h2, psi2, 1) / e1 == pytest.approx(3.0, abs=1e-6 * 3)


def test_energy_monotone_in_N_and_depth_error():
    h1, psi = _windows(17, 5.0, 1.0)
    vals = [energy_EN(h1, psi, N) for N in (0, 1, 2)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(WindowError):
        energy_EN(h1, psi, 3)
    short = MetricBlock(h1.data[:3], h1.grid, h1.dt, h1.t0, "h1")
    with pytest.raises(WindowError):
        energy_EN(short, psi, 1)


def test_energy_quadrature_refines():
    vals = []
    for n in (17, 33, 65):
        h1, psi = _windows(n, 6.0, 0.5, levels=3)
        vals.append(energy_EN(h1, psi, 0))
    assert abs(vals[1] - vals[0]) / abs(vals[2] - vals[1]) >= 3.5


def test_energy_single_level_with_exact_time_derivative():
    grid = Grid.cube(61, 5.0)
    X, Y, Z = grid.mesh()
    f = np.exp(-(X * X + Y * Y + Z * Z))
    h1 = MetricBlock(np.zeros((1, 4, 4) + grid.shape), grid, role="h1", dtdata=np.zeros((4, 4) + grid.shape))
    psi = ScalarBlock(f[None], grid, dtdata=np.zeros_like(f))
    e = energy_EN(h1, psi, 0, margin=0)
    # psi contribution alone: ||w^{1/2} grad f|| with the exact gradient
    grad = -2.0 * np.stack([X, Y, Z]) * f
    ref = energy_E0_fields(np.zeros((4, 10) + grid.shape), np.concatenate([np.zeros_like(f)[None], grad]),
                           grid, 0.0, margin=0)
    assert e == pytest.approx(ref, rel=1e-3)


def test_z_tower_counts():
    _, psi = _windows(17, 4.0, 1.0)
    assert len(z_tower(psi, 1)) == 12
    assert len(z_tower(psi, 2)) == 1 + 11 + 121
    with pytest.raises(WindowError):
        z_tower(ScalarBlock(psi.data[:3], psi.grid, psi.dt, psi.t0), 2)


def test_ks_ratio_zero_and_scale_invariant():
    grid = Grid.cube(25, 6.0)
    zero = ScalarBlock(np.zeros((5,) + grid.shape), grid, grid.dx, -2 * grid.dx)
    assert ks_ratio(zero) == 0.0
    fn = GaussianTestFunction(a=0.5, b=0.5, t0=0.0, x0=(0.5, 0.0, 0.0))
    times = grid.dx * np.arange(-2, 3)
    phi = sample_scalar(fn.value, grid, times)
    big = sample_scalar(lambda t, X, Y, Z: 7.0 * fn.value(t, X, Y, Z), grid, times)
    assert ks_ratio(big) == pytest.approx(ks_ratio(phi), rel=1e-12)
    assert ks_ratio(phi) <= 20.0


def test_ks_ratio_lattice_rotation_invariance():
    # the weight is centred at the origin, so only symmetries of the grid fixing it leave the ratio unchanged
    grid = Grid.cube(33, 8.0)
    times = grid.dx * np.arange(-2, 3)
    vals = []
    for x0 in ((1.0, 0.5, 0.0), (-0.5, 1.0, 0.0), (0.0, 0.5, -1.0), (-1.0, -0.5, 0.0)):
        fn = GaussianTestFunction(a=0.5, b=0.6, t0=0.0, x0=x0)
        vals.append(ks_ratio(sample_scalar(fn.value, grid, times)))
    assert (max(vals) - min(vals)) / max(vals) <= 1e-10


def test_classical_hardy_gaussian():
    prof = RadialProfile(lambda r: np.exp(-r * r / 2), lambda r: -r * np.exp(-r * r / 2))
    assert classical_hardy_ratio(prof) == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert classical_hardy_ratio(RadialProfile(lambda r: 0 * r, lambda r: 0 * r)) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 30.0), st.floats(0.0, 2.0), st.floats(0.1, 10.0))
def test_hardy_ratio_scale_invariant_and_finite(seed, t, alpha, lam):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    c, s, a = rng.uniform(0, 30, k), rng.uniform(0.5, 3.0, k), rng.normal(size=k)
    p = gaussian_bump_profile(c, s, a)
    q = gaussian_bump_profile(c, s, lam * a)
    r1 = hardy_ratio(p, t, alpha)
    assert math.isfinite(r1) and r1 >= 0
    assert hardy_ratio(q, t, alpha) == pytest.approx(r1, rel=1e-10)


def test_hardy_zero_and_alpha_range():
    zero = RadialProfile(lambda r: 0 * r, lambda r: 0 * r)
    assert hardy_ratio(zero, 3.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        hardy_sides(zero, 1.0, 2.5)


def test_hormander_zero_and_scale():
    assert hormander_ratio(0.0, 1.0, (0, 0, 0), 0.0) == 0.0
    with pytest.raises(DiagnosticError):
        hormander_ratio(1.0, 1.0, (0, 0, 0), 0.0)
    src = SpacetimeGaussian(s0=0.5)
    src3 = SpacetimeGaussian(amp=3.0, s0=0.5)
    x = np.array([[0.5], [0.0], [0.0]])
    r1 = hormander_ratio(float(duhamel_eval(src, 1.0, x)[0]), 1.0, x[:, 0], hormander_rhs(src, 1.0, n=13, n_time=6))
    r3 = hormander_ratio(float(duhamel_eval(src3, 1.0, x)[0]), 1.0, x[:, 0],
                         hormander_rhs(src3, 1.0, n=13, n_time=6))
    assert r3 == pytest.approx(r1, rel=1e-10)
    assert 0 < r1 <= 5.0


def test_spacetime_gaussian_jets_match_differences():
    src = SpacetimeGaussian(y0=(0.1, -0.2, 0.3))
    P = np.array([0.7, 0.2, 0.1, -0.4])
    f, grad, hess = src.jets(P.reshape(4, 1))
    h = 1e-5
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fp = src(*(P + e))
        fm = src(*(P - e))
        assert grad[i, 0] == pytest.approx((fp - fm) / (2 * h), rel=1e-6)
        assert hess[i, i, 0] == pytest.approx((fp - 2 * f[0] + fm) / h ** 2, rel=1e-4, abs=1e-6)


def test_annulus_clipping():
    grid = Grid.cube(21, 10.0)
    annulus(grid, 3.0)
    with pytest.raises(DiagnosticError, match="clipped"):
        annulus(grid, 6.0)


def _flat_fields(grid):
    z = np.zeros((4, 4) + grid.shape)
    return z, np.zeros((4,) + z.shape), np.zeros((4,) + grid.shape)


def test_null_monitor_flat_and_linear():
    grid = Grid.cube(25, 10.0)
    h, dh, dpsi = _flat_fields(grid)
    out = null_monitor(h, dh, dpsi, grid, 2.0)
    assert all(v == 0.0 for v in out.values())
    rng = np.random.default_rng(0)
    dh = rng.normal(size=dh.shape)
    dh = dh + np.swapaxes(dh, 1, 2)
    a = null_monitor(h, dh, dpsi, grid, 2.0)
    b = null_monitor(h, 2.0 * dh, dpsi, grid, 2.0)
    for k in a:
        assert b[k] == pytest.approx(2.0 * a[k], rel=1e-12, abs=1e-300)


def test_null_monitor_sees_only_lblb_for_lblb_tensor():
    # d_c h_ab = f_c Lb_a Lb_b with lower-index Lb = (-1, -omega): only the L-L contraction is nonzero
    grid = Grid.cube(25, 10.0)
    X, Y, Z = grid.mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z)
    r = np.where(r > 0, r, 1.0)
    low_L = np.stack([-np.ones_like(r), X / r, Y / r, Z / r])
    h, _, dpsi = _flat_fields(grid)
    e0 = np.zeros((4,) + grid.shape)
    e0[0] = 1.0
    dh = np.einsum("c...,a...,b...->cab...", e0, low_L, low_L)
    out = null_monitor(h, dh, dpsi, grid, 2.0)
    # L_a Lbar^a = -2 and only the L and Lbar directions have a time component
    assert out["dh_LbLb_sup"] == pytest.approx(4.0 * 2.0, rel=1e-12)
    assert out["dh_TU_sup"] == pytest.approx(0.0, abs=1e-12)
    assert out["dh_LL_sup"] == pytest.approx(0.0, abs=1e-12)


def test_wavec_ratio_flat_zero_and_violation_detected():
    grid = Grid.cube(25, 10.0)
    g = np.broadcast_to(ETA.reshape(4, 4, 1, 1, 1), (4, 4) + grid.shape).copy()
    D = np.zeros((4,) + g.shape)
    H, dH = inverse_perturbation_fields(g, D)
    assert np.max(np.abs(H)) == 0.0
    assert wavec_ratio(H, dH, grid, 2.0, floor=1e-12) == 0.0
    # an H whose only derivative is L-L: |dH|_LT large with no tangential part
    X, Y, Z = grid.mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z)
    r = np.where(r > 0, r, 1.0)
    upLb = np.stack([np.ones_like(r), -X / r, -Y / r, -Z / r])
    q = r - 2.0
    prof = 1e-3 * np.exp(-q * q)
    dprof = -2 * q * prof
    dq = np.stack([-np.ones_like(r), X / r, Y / r, Z / r])
    Hb = np.einsum("a...,b...->ab...", upLb, upLb) * prof
    dHb = np.einsum("c...,a...,b...->cab...", dq, upLb, upLb) * dprof
    assert wavec_ratio(Hb, dHb, grid, 2.0, floor=1e-12) > 1e2
    assert wavec_floor(Hb, grid.dx) > 0.0


def test_inverse_perturbation_derivative():
    grid = Grid.cube(9, 2.0)
    rng = np.random.default_rng(3)
    g = ETA.reshape(4, 4, 1, 1, 1) + 0 * rng.normal(size=(4, 4) + grid.shape)
    P = rng.normal(size=(4, 4) + grid.shape) * 1e-2
    P = P + np.swapaxes(P, 0, 1)
    D = rng.normal(size=(4,) + P.shape) * 1e-2
    D = D + np.swapaxes(D, 1, 2)
    H, dH = inverse_perturbation_fields(g + P, D)
    # linearised: H ~ -m P m
    lin = -np.einsum("ab,bc...,cd->ad...", ETA, P, ETA)
    assert np.max(np.abs(H - lin)) < 10 * np.max(np.abs(P)) ** 2
    assert dH.shape == D.shape


def test_energy_balance_zero_and_flux_sign():
    series = [{"t": float(t), "E": 0.0, "Ew": 0.0, "flux": 0.0} for t in range(5)]
    assert np.all(energy_balance_residual(series)["residual"] == 0.0)
    assert np.all(energy_balance_residual(series, weighted=True)["residual"] == 0.0)


def test_decay_fit_examples():
    t = np.geomspace(1.5, 100, 60)
    fit = decay_fit(t, 3.0 / t)
    assert fit.p == pytest.approx(1.0, abs=1e-3) and fit.c == pytest.approx(3.0, rel=1e-10)
    assert isinstance(fit, DecayFit) and fit.residual < 1e-12
    y = 2.0 * np.log(t) / t
    assert decay_fit(t, y, "log").residual < decay_fit(t, y, "power").residual
    assert decay_fit(t, y, "log").c == pytest.approx(2.0, rel=1e-12)
    d = decay_fit(t, t ** (-0.95), "power_delta")
    assert d.p == pytest.approx(0.05, abs=1e-10)
    lb = log_beats_powers(t, y)
    assert lb["log_wins"]
    assert not log_beats_powers(t, t ** -0.9)["log_wins"]


def test_decay_fit_errors():
    with pytest.raises(DiagnosticError, match="spans"):
        decay_fit([1.0, 2.0, 3.0], [1.0, 0.5, 0.3])
    with pytest.raises(DiagnosticError):
        decay_fit([1.0, 20.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        decay_fit([1.0, 20.0], [1.0, 0.1], "exp")


@given(st.floats(-0.5, 0.5), st.floats(0.1, 10))
def test_energy_growth_exponent_recovers_power(delta, c):
    t = np.linspace(0, 20, 41)
    fit = energy_growth_exponent(t, c * (1 + t) ** delta)
    assert fit.p == pytest.approx(delta, abs=1e-10)
