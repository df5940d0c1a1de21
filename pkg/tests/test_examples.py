"""Worked input/output examples for individual operations."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_scalar, random_vector
from nflab.dynamics import (Variant, initial_state, linearized_zero_step, metabolic_coefficient,
                            ode_rhs_d0_1d, pattern_linear_pressure, pattern_linear_rhs,
                            pumping_term, run_d0_1d, simulate, step)
from nflab.elliptic import (_pressure, apply_anisotropic, apply_mollified, cumulative_source,
                            solve_pressure, solve_pressure_1d, solve_pressure_mollified,
                            solve_stationary_pressure_d0)
from nflab.energy import (cumulative_dissipation, decay_rate_estimate, energy,
                          energy_mollified)
from nflab.experiments import smooth_field
from nflab.grid import (Grid, dirichlet_form, gradient, inner, integrate, l2_norm, laplacian,
                        total_variation_1d)
from nflab.mollifier import convolve, heat_kernel, positivity_check
from nflab.params import ModelParams
from nflab.pattern import PatternSpec
from nflab.spectra import (StationaryPattern, classify_zero_state, construct_pattern_d0,
                           linear_identity_defect, measure_growth_rate, sigma1,
                           steady_amplitude_1d, verify_pattern_stability)


# -- field core ------------------------------------------------------------------
def test_gradient_examples():
    g = Grid(1, 63)
    assert not np.any(gradient(g, np.zeros(63)))
    grad = gradient(g, g.sample(lambda x: x * (1 - x) / 2))[0]
    assert np.max(np.abs(grad - (1 - 2 * g.axis_coords) / 2)) <= g.h ** 2
    sym = g.sample(lambda x: np.cos(3 * np.pi * (x - 0.5)) + (x - 0.5) ** 2)
    d = gradient(g, sym)[0]
    np.testing.assert_allclose(d, -d[::-1], atol=1e-12)


def test_laplacian_eigenfunction():
    g = Grid(1, 63)
    u = g.sample(lambda x: np.sin(np.pi * x))
    lam = 4 / g.h ** 2 * np.sin(np.pi * g.h / 2) ** 2
    np.testing.assert_allclose(laplacian(g, u), -lam * u, atol=1e-10)
    assert not np.any(laplacian(g, np.zeros(63)))


def test_integration_examples():
    for n in (15, 63):
        g = Grid(2, n)
        assert integrate(g, np.ones(g.shape)) == pytest.approx((n * g.h) ** 2)
    g = Grid(1, 63)
    assert abs(integrate(g, g.sample(lambda x: np.sin(np.pi * x))) - 2 / np.pi) <= g.h ** 2
    assert integrate(g, np.zeros(63)) == 0


def test_total_variation_examples():
    g = Grid(1, 63)
    assert total_variation_1d(g, np.zeros((1, 63))) == 0
    spike = np.zeros((1, 63))
    spike[0, 30] = 1
    assert total_variation_1d(g, spike) == 2
    assert abs(total_variation_1d(g, g.sample(lambda x: np.sin(np.pi * x))[None]) - 2) <= 2 * g.h


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 63), st.sampled_from([1, 2]))
def test_inner_product_properties(seed, dim):
    g = Grid(dim, 9)
    f, h = random_scalar(g, seed), random_scalar(g, seed + 1)
    assert l2_norm(g, f) ** 2 == pytest.approx(inner(g, f, f), rel=1e-13)
    assert abs(inner(g, f, h)) <= l2_norm(g, f) * l2_norm(g, h) * (1 + 1e-13)
    z = np.zeros(g.shape)
    assert inner(g, z, z) == l2_norm(g, z) == integrate(g, z) == 0


# -- elliptic solver ---------------------------------------------------------------
def test_operator_examples():
    g = Grid(1, 63)
    u = g.sample(lambda x: np.sin(np.pi * x))
    Au = apply_anisotropic(g, g.zeros(True), u)
    assert np.max(np.abs(Au - np.pi ** 2 * u)) <= 2 * np.pi ** 4 * g.h ** 2
    m = random_vector(g, 1)
    assert not np.any(apply_anisotropic(g, m, np.zeros(63)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 63))
def test_operator_symmetry_property(seed):
    g = Grid(2, 7)
    m, p, q = random_vector(g, seed, 2), random_scalar(g, seed + 1), random_scalar(g, seed + 2)
    a = inner(g, apply_anisotropic(g, m, p), q)
    b = inner(g, p, apply_anisotropic(g, m, q))
    assert a == pytest.approx(b, rel=1e-11, abs=1e-12)


def test_pressure_examples():
    g = Grid(1, 63)
    sol = solve_pressure(g, random_vector(g, 2), np.zeros(63))
    assert not np.any(sol.p) and sol.iterations <= 1
    p = solve_pressure(g, g.zeros(True), np.ones(63)).p
    assert np.max(np.abs(p - g.sample(lambda x: x * (1 - x) / 2))) <= g.h ** 2


def test_mollified_pressure_examples():
    g = Grid(1, 63)
    S = random_scalar(g, 3)
    ref = solve_pressure(g, g.zeros(True), S).p
    for eps in (1e-2, 1e-3, 1e-4):
        np.testing.assert_array_equal(solve_pressure_mollified(g, g.zeros(True), S, eps).p, ref)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 63), st.sampled_from([1e-2, 1e-3]))
def test_mollified_ellipticity(seed, eps):
    g = Grid(1, 63)
    m, p = random_vector(g, seed, 2), random_scalar(g, seed + 1)
    k = heat_kernel(g, eps)
    assert inner(g, apply_mollified(g, m, p, k), p) >= dirichlet_form(g, p) * (1 - 1e-12)


def test_closed_form_examples():
    g = Grid(1, 63)
    sol = solve_pressure_1d(g, np.zeros(63), np.ones(63), bc="mixed")
    np.testing.assert_allclose(sol.gradp[0], -g.axis_coords, atol=1e-14)
    assert np.max(np.abs(sol.p - (1 - g.axis_coords ** 2) / 2)) <= g.h ** 2
    for bc in ("mixed", "dirichlet"):
        assert not np.any(solve_pressure_1d(g, random_scalar(g, 4), np.zeros(63), bc=bc).p)


def test_cumulative_source_examples():
    g = Grid(1, 63)
    assert np.max(np.abs(cumulative_source(g, np.ones(63)).B - g.axis_coords)) <= g.h
    assert not np.any(cumulative_source(g, np.zeros(63)).B)
    S = g.sample(lambda x: np.sin(2 * np.pi * x) + (x - 0.5))
    assert abs(cumulative_source(g, S).B[-1]) <= 2 * g.h * np.max(np.abs(S))


def test_stationary_pressure_zero_source():
    g = Grid(1, 31)
    res = solve_stationary_pressure_d0(PatternSpec.halves(g), ModelParams(), np.zeros(31))
    assert not np.any(res.pressure.p)


# -- mollifier ---------------------------------------------------------------------
def test_kernel_examples():
    g = Grid(1, 63)
    k = heat_kernel(g, 1e-2)
    assert 0.999 <= k.mass <= 1.0
    assert k.center_weight == pytest.approx(g.h / np.sqrt(4 * np.pi * 1e-2), rel=1e-14)
    g2 = Grid(2, 63)
    k2 = heat_kernel(g2, 1e-2)
    assert k2.center_weight == pytest.approx(g2.h ** 2 / (4 * np.pi * 1e-2), rel=1e-14)
    w = dict(zip(k2.offsets, k2.weights))
    assert all(w[o] == w[tuple(-x for x in o)] for o in k2.offsets)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 63), st.floats(-3, 3), st.floats(-3, 3))
def test_convolution_linearity_and_max_principle(seed, a, b):
    g = Grid(1, 63)
    k = heat_kernel(g, 1e-3)
    f, h = random_scalar(g, seed), random_scalar(g, seed + 1)
    np.testing.assert_allclose(convolve(k, a * f + b * h), a * convolve(k, f) + b * convolve(k, h),
                               atol=1e-13)
    assert np.max(np.abs(convolve(k, f))) <= np.max(np.abs(f)) * (1 + 1e-14)
    assert not np.any(convolve(k, np.zeros(63)))


def test_positivity_spike():
    g = Grid(1, 63)
    k = heat_kernel(g, 1e-3)
    u = np.zeros(63)
    u[20] = 3.0
    # quadrature weight h^d times center weight times u^2
    assert positivity_check(k, u) == pytest.approx(g.weight * k.center_weight * 9.0, rel=1e-14)
    assert positivity_check(k, np.zeros(63)) == 0


# -- dynamics --------------------------------------------------------------------
def test_reaction_term_examples():
    g = Grid(2, 8)
    pr = solve_pressure(g, g.zeros(True), g.sample(lambda x, y: 1 + x))
    assert not np.any(pumping_term(g.zeros(True), pr, 2.0))
    # p depends on x only, m points along y; the zero pad makes y-differences
    # nonzero on the first and last rows, so only interior rows are orthogonal
    px = _pressure(g, g.sample(lambda x, y: x * (1 - x)))
    m = np.stack([np.zeros(g.shape), np.ones(g.shape)])
    assert not np.any(pumping_term(m, px, 2.0)[:, :, 1:-1])
    unit = np.stack([np.ones(g.shape), np.zeros(g.shape)])
    np.testing.assert_array_equal(metabolic_coefficient(unit, 2.0) * unit, unit)


@pytest.mark.parametrize("variant", list(Variant))
def test_zero_state_persists(variant):
    g = Grid(1, 31)
    prm = ModelParams(D=0.1, c=2.0)
    s = initial_state(g, g.zeros(True), np.ones(31), prm, variant)
    for _ in range(3):
        s = step(s, np.ones(31), prm, variant)
    assert not np.any(s.m)


def test_degenerate_mollifier_matches_standard_step():
    g = Grid(1, 31)
    prm = ModelParams(D=0.1, c=2.0, epsilon=1e-9)
    mI = random_vector(g, 5)
    a = step(initial_state(g, mI, np.ones(31), prm), np.ones(31), prm)
    b = step(initial_state(g, mI, np.ones(31), prm, Variant.MOLLIFIED), np.ones(31), prm,
             Variant.MOLLIFIED)
    assert l2_norm(g, a.m - b.m) <= 0.05 * l2_norm(g, a.m - mI)


def test_zero_source_decays():
    g = Grid(1, 31)
    prm = ModelParams(D=0.5, dt0=1e-2, dt_max=0.5, t_end=30.0, steady_tol=0.0)
    _, st_ = simulate(g, random_vector(g, 6), np.zeros(31), prm)
    assert np.max(np.abs(st_.m)) < 1e-6


@pytest.fixture(scope="module")
def long_run():
    g = Grid(1, 127)
    prm = ModelParams(D=0.01, c=1.0, gamma=2.0, dt0=1e-3, dt_max=0.5, t_end=400.0,
                      steady_tol=0.0)
    trace, state = simulate(g, np.full((1, 127), 0.5), np.ones(127), prm)
    # steady flux under p(0) = p(1) = 0 is S-integral minus its mean, B - 1/2 for S = 1
    B = cumulative_source(g, np.ones(127)).B - 0.5
    return g, trace, state, steady_amplitude_1d(B, prm)


def test_long_run_near_zero_diffusion_limit_interior(long_run):
    g, trace, state, ms = long_run
    x = g.axis_coords
    region = (x >= 0.2) & (x <= 0.8) & (np.abs(x - 0.5) >= 0.2)
    assert np.max(np.abs(state.m[0] - ms)[region]) <= 1e-3
    e = trace.column("total")
    assert np.all(np.diff(e) <= 1e-12 * e[0])


@pytest.mark.xfail(strict=True, reason="boundary and kink layers relax algebraically; see notes")
def test_long_run_near_zero_diffusion_limit_everywhere(long_run):
    g, _, state, ms = long_run
    assert np.max(np.abs(state.m[0] - ms)) <= 1e-3


def test_cumulative_dissipation_identity():
    g = Grid(1, 63)
    prm = ModelParams(D=0.05, dt0=1e-4, dt_max=1e-4, t_end=0.05, steady_tol=0.0)
    trace, _ = simulate(g, random_vector(g, 8), np.ones(63), prm)
    drop, diss = cumulative_dissipation(trace)
    assert diss == pytest.approx(drop, rel=0.05)


def test_ode_rhs_examples():
    prm = ModelParams(c=1.0, gamma=2.0)
    assert ode_rhs_d0_1d(0.0, 1.3, prm) == 0
    assert ode_rhs_d0_1d(1.0, 2.0, prm) == pytest.approx(0.0, abs=1e-15)
    m = np.linspace(-2, 2, 9)
    np.testing.assert_array_equal(ode_rhs_d0_1d(-m, 0.7, prm), -ode_rhs_d0_1d(m, 0.7, prm))


def test_d0_run_zero_initial_stays_zero():
    g = Grid(1, 31)
    out = run_d0_1d(g, np.zeros((1, 31)), np.ones(31), ModelParams(c=2.0, dt0=0.01), 10.0)
    assert not np.any(out)


def test_linearized_zero_step_examples():
    g = Grid(1, 31)
    prm = ModelParams(D=0.2)
    p0 = solve_pressure(g, g.zeros(True), np.ones(31))
    assert not np.any(linearized_zero_step(g, np.zeros((1, 31)), p0, prm, 0.1, beta=5.0))
    n = random_vector(g, 9)
    assert l2_norm(g, linearized_zero_step(g, n, p0, prm, 0.1, beta=0.0)) < l2_norm(g, n)
    plateau = _pressure(g, np.minimum(g.sample(lambda x: x * (1 - x)), 0.2))
    flat = np.all(plateau.tensor == 0, axis=(0, 1))
    n_flat = n * flat
    np.testing.assert_allclose(linearized_zero_step(g, n_flat, plateau, prm, 0.1, beta=50.0),
                               linearized_zero_step(g, n_flat, plateau, prm, 0.1, beta=0.0))


def test_pattern_linearization_examples():
    g = Grid(1, 63)
    prm = ModelParams(D=0.0, c=2.0, gamma=2.0)
    pat = construct_pattern_d0(PatternSpec.halves(g), prm, np.ones(63))
    zero = np.zeros((1, 63))
    q = pattern_linear_pressure(g, zero, pat.m0, pat.pressure, prm)
    assert not np.any(q.p)
    assert not np.any(pattern_linear_rhs(g, zero, q, pat.m0, pat.pressure, prm))
    n = random_vector(g, 10)
    q = pattern_linear_pressure(g, n, pat.m0, pat.pressure, prm)
    assert linear_identity_defect(g, n, q, pat.m0, pat.pressure) <= 10 * prm.cg_tol


# -- energy ----------------------------------------------------------------------
def test_energy_examples():
    g = Grid(1, 63)
    prm = ModelParams(D=0.1, c=1.5)
    z = g.zeros(True)
    assert energy(g, z, solve_pressure(g, z, np.zeros(63)), prm).total == 0
    e = energy(g, z, solve_pressure(g, z, np.ones(63)), prm)
    assert e.diffusion == e.metabolic == e.pumping == 0
    assert e.pressure == pytest.approx(prm.c ** 2 / 24, rel=1e-3)
    m = random_vector(g, 11)
    pr = solve_pressure(g, m, np.ones(63))
    e1, e2 = energy(g, m, pr, prm), energy(g, m, pr, prm.with_(c=3.0))
    assert e2.pumping == 4 * e1.pumping and e2.pressure == 4 * e1.pressure


def test_mollified_energy_examples():
    g = Grid(1, 127)
    prm = ModelParams(D=0.1, c=1.5)
    z = g.zeros(True)
    pr = solve_pressure(g, z, np.ones(127))
    assert energy_mollified(g, z, pr, prm, heat_kernel(g, 1e-2)).pumping == 0
    m = smooth_field(g)
    pr = solve_pressure(g, m, np.ones(127))
    ref = energy(g, m, pr, prm).total
    gaps = [abs(energy_mollified(g, m, pr, prm, heat_kernel(g, e)).total - ref)
            for e in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]
    k = heat_kernel(g, 1e-3)
    from nflab.grid import corner_dot
    direct = 0.5 * prm.c ** 2 * np.mean([positivity_check(k, u)
                                         for u in corner_dot(m, pr.corners)])
    assert energy_mollified(g, m, pr, prm, k).pumping == pytest.approx(direct, rel=1e-15)


def test_decay_rate_examples():
    t = np.linspace(0, 4, 50)
    assert decay_rate_estimate(t, np.exp(-2 * t)) == pytest.approx(-2, abs=1e-10)
    assert decay_rate_estimate(t, np.full(50, 3.0)) == pytest.approx(0, abs=1e-14)
    noisy = np.exp(-t) * (1 + 0.01 * np.sin(7 * t))
    assert abs(decay_rate_estimate(t, noisy) + 1) <= 0.02


# -- stability and spectra ------------------------------------------------------------
def test_steady_amplitude_examples():
    assert steady_amplitude_1d(0.0, ModelParams(gamma=2.0)) == 0
    assert steady_amplitude_1d(2.0, ModelParams(c=1.0, gamma=2.0)) == pytest.approx(1.0, abs=1e-12)
    assert steady_amplitude_1d(1.0, ModelParams(c=2.0, gamma=1.0)) == 1.0


def test_pattern_construction_examples():
    g = Grid(1, 31)
    prm = ModelParams(D=0.0, c=1.7, gamma=2.5)
    S = np.ones(31)
    empty = construct_pattern_d0(PatternSpec(g, np.zeros(31)), prm, S)
    assert not np.any(empty.m0)
    np.testing.assert_allclose(empty.pressure.p, solve_pressure(g, g.zeros(True), S).p, rtol=1e-9)
    pat = construct_pattern_d0(PatternSpec.halves(g), prm, S)
    from nflab.grid import node_norm, top_eigenpair
    lam, _ = top_eigenpair(pat.pressure.tensor)
    expected = prm.c ** (1 / (prm.gamma - 1)) * np.sqrt(lam) ** (1 / (prm.gamma - 1))
    np.testing.assert_allclose(node_norm(pat.m0), expected, rtol=1e-12)


def test_sigma1_scaling():
    g = Grid(1, 63)
    p0 = solve_pressure(g, g.zeros(True), np.ones(63))
    a = sigma1(p0).sigma1
    b = sigma1(_pressure(g, 2 * p0.p)).sigma1
    assert b == pytest.approx(4 * a, rel=1e-10)


def test_classification_and_growth_examples():
    g = Grid(1, 63)
    prm = ModelParams(D=0.1, dt0=0.01, dt_max=0.1)
    p0 = solve_pressure(g, g.zeros(True), np.ones(63))
    res = sigma1(p0)
    b = res.beta_star
    assert classify_zero_state(0.5 * b, res) == "stable"
    assert classify_zero_state(b, res) == "neutral"
    assert classify_zero_state(2 * b, res) == "unstable"
    lam = 4 / g.h ** 2 * np.sin(np.pi * g.h / 2) ** 2
    assert measure_growth_rate(0.0, p0, prm, 50.0) <= -prm.D ** 2 * lam * 0.95
    assert measure_growth_rate(0.5 * b, p0, prm, 100.0) < 0
    assert measure_growth_rate(2 * b, p0, prm, 100.0) > 0
