import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgp import (
    ConfigurationError,
    ParticleState,
    SolverConfig,
    TrajectoryGrid,
    atomize,
    euler_lagrange_residual,
    gradient,
    initial_guess,
    solve,
)
from mfgp.diagnostics import (
    ConvexTestFunction,
    diagnose,
    displacement_series,
    energy_drift,
    energy_series,
    lp_logconvexity,
    momentum_series,
    uniform_lp_bound,
)

from mfgp.exact import reference

from conftest import make_spec, random_grid, solve_constant_v, solve_reference

U_FAMILIES = ("exp_neg", "power:2", "entropy", "power:1", "power:3.5")


def translating_uniform(N, N_T, speed=0.3, T=1.0):
    """Equally spaced torus particles moving rigidly: every R_i^n = 1."""
    t = np.linspace(0, T, N_T + 1)[:, None]
    X = (np.arange(N) + 0.5) / N + speed * t
    return TrajectoryGrid(X, T / N_T, "torus")


# -- test functions ------------------------------------------------------------------


def test_convex_test_function_parsing():
    assert ConvexTestFunction.parse("power:3").p == 3.0
    assert ConvexTestFunction.parse("Exp_Neg").family == "exp_neg"
    assert ConvexTestFunction.parse("power").label == "power:2"
    for bad in ("cosh", "power:0.5"):
        with pytest.raises(ConfigurationError):
            ConvexTestFunction.parse(bad)


@pytest.mark.parametrize("name", U_FAMILIES)
def test_convex_test_functions_are_convex(name):
    U = ConvexTestFunction.parse(name)
    z = np.linspace(0, 20, 4001)
    u = U(z)
    assert np.all(u[2:] - 2 * u[1:-1] + u[:-2] >= -1e-12)
    assert U.vanishes_at_zero == (name != "exp_neg")


# -- momentum ------------------------------------------------------------------------


def test_momentum_of_straight_lines_is_sum_of_slopes():
    spec = make_spec("torus", N=4, N_T=10, coupling="zero")
    x0 = ParticleState([0.1, 0.3, 0.6, 0.8], "torus")
    xT = ParticleState([0.2, 0.35, 0.65, 0.95], "torus")
    grid = initial_guess(x0, xT, 10)
    M = momentum_series(grid, spec)
    assert M.shape == (10,)
    assert np.allclose(M, np.sum(xT.positions - x0.positions), atol=1e-13)


def test_momentum_drift_bounded_by_gradient(constant_v_runs):
    for N_T, (spec, res) in constant_v_runs.items():
        M = momentum_series(res.grid, spec)
        drift = np.max(np.abs(M - M[0]))
        g_inf = np.max(np.abs(gradient(res.grid, spec)))
        roundoff = 64 * np.finfo(float).eps * spec.N
        # summing the gradient over particles telescopes to (M^{k-1} - M^k) / dt
        assert np.max(np.abs(np.diff(M))) <= g_inf * spec.N * spec.dt + roundoff
        assert drift <= g_inf * spec.N * spec.T + roundoff
        assert drift <= 10 * 1e-10 * spec.N / spec.dt


def test_momentum_changes_by_potential_force_on_test1():
    _, spec, _, res = solve_reference("test1", 50)
    g = res.grid
    M = momentum_series(g, spec)
    force = np.array([np.sum(spec.potential.V_x(g.positions[k], g.times[k])) for k in range(1, spec.N_T)])
    assert np.ptp(M) > 1e-3
    assert np.max(np.abs(np.diff(M) + spec.dt * force)) <= 1e-9


# -- energy --------------------------------------------------------------------------


def test_free_straight_lines_have_constant_energy():
    spec = make_spec("real_line", N=3, N_T=8, coupling="zero")
    grid = initial_guess(ParticleState([0, 1, 2], "real_line"), ParticleState([0.5, 1.2, 3.0], "real_line"), 8)
    E = energy_series(grid, spec)
    assert E.shape == (8,)
    assert np.allclose(E, 0.5 * (0.25 + 0.04 + 1.0), rtol=0, atol=1e-13)
    assert energy_drift(E) <= 1e-13


def test_energy_drift_undefined_for_single_step():
    spec = make_spec("torus", N=3, N_T=1)
    grid = initial_guess(ParticleState([0.1, 0.4, 0.7], "torus"), ParticleState([0.2, 0.5, 0.8], "torus"), 1)
    E = energy_series(grid, spec)
    assert E.shape == (1,)
    assert energy_drift(E) is None


def test_energy_drift_decreases_under_refinement(constant_v_runs):
    drift = {n: energy_drift(energy_series(res.grid, spec)) for n, (spec, res) in constant_v_runs.items()}
    assert drift[40] <= 0.6 * drift[20]
    assert drift[80] <= 0.6 * drift[40]


# -- displacement convexity -------------------------------------------------------------


@pytest.mark.parametrize("name", U_FAMILIES)
def test_uniform_density_gives_flat_displacement(name):
    d = displacement_series(translating_uniform(6, 12), name)
    assert d.series.shape == (13,)
    assert np.ptp(d.series) <= 1e-13
    assert abs(d.min_second_difference) <= 1e-13


def test_power_one_is_total_mass(constant_v_runs):
    spec, res = constant_v_runs[20]
    assert np.allclose(displacement_series(res.grid, "power:1").series, 1.0, atol=1e-14)


@pytest.mark.parametrize("name", U_FAMILIES)
def test_displacement_convex_on_converged_runs(constant_v_runs, name):
    for spec, res in constant_v_runs.values():
        d = displacement_series(res.grid, name)
        assert d.min_second_difference >= -1e-8
        assert d.chord_slack >= -1e-8


def test_real_line_requires_u_vanishing_at_zero():
    grid = initial_guess(ParticleState([0, 1], "real_line"), ParticleState([1, 3], "real_line"), 4)
    with pytest.raises(ConfigurationError, match="U\\(0\\) = 0"):
        displacement_series(grid, "exp_neg")
    d = displacement_series(grid, "power:1")
    assert np.allclose(d.series, 1.0 / 2)  # one finite gap carrying mass 1/N


# -- L^p ------------------------------------------------------------------------------


def test_lp_zero_exponent_counts_particles(constant_v_runs):
    spec, res = constant_v_runs[20]
    r = lp_logconvexity(res.grid, 0)
    assert np.all(r.series == spec.N)
    assert r.violation == 0.0


def test_lp_uniform_trajectory_is_equality():
    grid = translating_uniform(5, 10)
    for p in (0.5, 1, 2, 4):
        assert abs(lp_logconvexity(grid, p).violation) <= 1e-13
        u = uniform_lp_bound(grid, max(p, 1))
        assert np.allclose(u.norms, u.norms[0], rtol=1e-14) and abs(u.slack) <= 1e-13


def test_lp_negative_exponent_rejected():
    with pytest.raises(ValueError):
        lp_logconvexity(translating_uniform(3, 2), -1)
    with pytest.raises(ValueError):
        uniform_lp_bound(translating_uniform(3, 2), 0.5)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_lp_bounds_hold_on_converged_runs(constant_v_runs, p):
    for spec, res in constant_v_runs.values():
        assert lp_logconvexity(res.grid, p).violation <= 1e-6
        u = uniform_lp_bound(res.grid, p)
        assert u.slack <= 1e-6
        if p == 1:
            assert np.allclose(u.norms, 1.0, atol=1e-14)


@pytest.mark.parametrize("p", [2, 4])
def test_lp_measures_do_not_grow_under_refinement(constant_v_runs, p):
    viol = [lp_logconvexity(constant_v_runs[n][1].grid, p).violation for n in (20, 40, 80)]
    slack = [uniform_lp_bound(constant_v_runs[n][1].grid, p).slack for n in (20, 40, 80)]
    for series in (viol, slack):
        for a, b in zip(series, series[1:]):
            assert b <= a + 0.1 * abs(a) + 1e-14


def test_particles_never_collide(constant_v_runs):
    for spec, res in constant_v_runs.values():
        assert res.grid.min_gap() >= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.02, 0.3), min_size=3, max_size=7), st.floats(-2, 2))
def test_mass_normalization_any_torus_row(raw_gaps, speed):
    gaps = np.array(raw_gaps) / np.sum(raw_gaps)
    x = np.cumsum(gaps)
    X = x[None, :] + speed * np.linspace(0, 1, 5)[:, None]
    grid = TrajectoryGrid(X, 0.25, "torus")
    assert np.allclose(displacement_series(grid, "power:1").series, 1.0)
    assert np.allclose(uniform_lp_bound(grid, 1).norms, 1.0)


# -- report -----------------------------------------------------------------------------


def test_report_shapes_and_skips():
    spec, res = solve_constant_v(20)
    rep = diagnose(res.grid, spec)
    assert rep.momentum_series.shape == rep.energy_series.shape == (20,)
    assert all(d.series.shape == (21,) for d in rep.displacement.values())
    assert all(r.series.shape == (21,) for r in rep.lp.values())
    assert set(rep.min_second_difference) == {"exp_neg", "power:2", "entropy"}
    assert rep.el_residual_max <= 1e-8

    line = make_spec("real_line", N=3, N_T=4, coupling="linear")
    grid = initial_guess(ParticleState([0, 1, 2], "real_line"), ParticleState([0, 1, 2], "real_line"), 4)
    assert "exp_neg" not in diagnose(grid, line).displacement


# -- Euler-Lagrange residual ----------------------------------------------------------------


def test_el_residual_is_minus_gradient_for_quadratic_l():
    spec = make_spec("torus", N=5, N_T=6, coupling="quadratic_half", potential="test1")
    grid = random_grid(np.random.default_rng(0), spec)
    r = euler_lagrange_residual(grid, spec)
    assert np.allclose(r, -gradient(grid, spec).reshape(r.shape), rtol=1e-12, atol=1e-12)


def test_el_residual_first_order_in_dt_for_power_law():
    # L = |v|^3 / 3: the residual of a converged grid is a pure time-discretization error
    ref = reference("test2")
    res_max = []
    for N_T in (50, 100, 200):
        spec = make_spec("real_line", N=25, N_T=N_T, ham=("power", {"exponent": 1.5}), coupling="linear",
                         potential="test2")
        boundary = ref.problem(N=25, N_T=N_T)
        x0 = atomize(boundary.initial_density, 25, spec.domain)
        xT = atomize(boundary.terminal_density, 25, spec.domain)
        out = solve(spec, SolverConfig(grad_tol=1e-9), initial_guess(x0, xT, N_T))
        assert out.converged
        res_max.append(np.max(np.abs(euler_lagrange_residual(out.grid, spec))))
    assert res_max[1] <= 0.6 * res_max[0] and res_max[2] <= 0.6 * res_max[1]
