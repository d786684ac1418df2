import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgp import (
    ConfigurationError,
    CouplingSpec,
    HamiltonianSpec,
    LegendreUnboundedError,
    PotentialSpec,
    ProblemSpec,
    enthalpy_G,
    flux_B,
    legendre_transform,
)

CLOSED_FORM_COUPLINGS = [
    CouplingSpec("linear"),
    CouplingSpec("quadratic_half"),
    CouplingSpec("power", {"alpha": 3.0, "c": 2.0}),
    CouplingSpec("power", {"alpha": 1.5, "c": 0.5}),
]


def grid_search_legendre(H, v, lo=-10.0, hi=10.0):
    """sup_p [-p v - H(p)] by a coarse grid followed by repeated local refinement."""
    p = np.linspace(lo, hi, 200001)
    for _ in range(6):
        vals = -p * v - H(p)
        k = int(np.argmax(vals))
        step = p[1] - p[0]
        p = np.linspace(p[k] - 2 * step, p[k] + 2 * step, 2001)
    return float(np.max(-p * v - H(p)))


# -- Legendre transform -----------------------------------------------------


def test_quadratic_lagrangian_examples():
    H = HamiltonianSpec("quadratic")
    assert legendre_transform(H, 2.0) == 2.0
    assert legendre_transform(H, 0.0) == 0.0
    assert H.dL(1.7) == 1.7
    assert H.d2L(-3.0) == 1.0


def test_power_law_matches_grid_search_oracle():
    H = HamiltonianSpec("power", {"exponent": 3.0})
    oracle = grid_search_legendre(H.H, 1.0)
    assert abs(legendre_transform(H, 1.0) - oracle) <= 1e-8
    assert abs(legendre_transform(H, 1.0, numeric=True) - oracle) <= 1e-8


@pytest.mark.parametrize("a", [1.5, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("v", [-2.0, -0.3, 0.0, 0.7, 1.9])
def test_power_law_closed_form_agrees_with_numeric(a, v):
    H = HamiltonianSpec("power", {"exponent": a})
    assert legendre_transform(H, v, numeric=True) == pytest.approx(float(H.L(v)), rel=1e-10, abs=1e-12)


def test_power_law_derivatives_by_finite_differences():
    H = HamiltonianSpec("power", {"exponent": 1.5})
    v = np.array([-1.3, 0.4, 2.2])
    h = 1e-6
    assert np.allclose(H.dL(v), (H.L(v + h) - H.L(v - h)) / (2 * h), rtol=1e-7)
    assert np.allclose(H.d2L(v), (H.dL(v + h) - H.dL(v - h)) / (2 * h), rtol=1e-6)


def test_tabulated_hamiltonian_reproduces_quadratic():
    p = np.linspace(-3, 3, 61)
    H = HamiltonianSpec("tabulated", {"p": p, "H": p**2 / 2})
    v = np.array([-2.5, -1.0, 0.0, 0.4, 2.9])
    assert np.allclose(H.H(p), p**2 / 2, atol=1e-12)
    assert np.allclose(H.L(v), v**2 / 2, atol=1e-12)
    assert np.allclose(H.dL(v), v, atol=1e-10)
    assert np.allclose(H.d2L(v), 1.0, atol=1e-8)


def test_tabulated_inversion_agrees_with_golden_section():
    p = np.linspace(-5, 5, 41)
    H = HamiltonianSpec("tabulated", {"p": p, "H": np.cosh(p)})
    v = np.array([-20.0, -3.1, -0.2, 0.0, 0.9, 7.5])
    assert np.allclose(legendre_transform(H, v, numeric=True), H.L(v), rtol=1e-10, atol=1e-12)


def test_tabulated_hamiltonian_interpolates_samples():
    H = HamiltonianSpec("tabulated", {"p": [-1, 0, 1], "H": [1, 0, 1]})
    assert np.allclose(H.H([-1, 0, 1]), [1, 0, 1])
    assert H.L(0.5) == pytest.approx(0.0625)


def test_tabulated_hamiltonian_power_is_close_to_oracle():
    p = np.linspace(-4, 4, 161)
    H = HamiltonianSpec("tabulated", {"p": p, "H": np.abs(p) ** 3 / 3})
    assert float(H.L(1.0)) == pytest.approx(grid_search_legendre(H.H, 1.0), abs=1e-9)
    assert float(H.L(1.0)) == pytest.approx(2 / 3, abs=5e-3)


def test_tabulated_hamiltonian_unbounded_beyond_slope_range():
    p = np.linspace(-1, 1, 21)
    H = HamiltonianSpec("tabulated", {"p": p, "H": p**2 / 2})
    with pytest.raises(LegendreUnboundedError, match="unbounded"):
        legendre_transform(H, 2.0)


def test_nonconvex_table_rejected():
    with pytest.raises(ConfigurationError, match="convex"):
        HamiltonianSpec("tabulated", {"p": [-1, 0, 1], "H": [0, 1, 0]})


def test_power_exponent_must_exceed_one():
    with pytest.raises(ConfigurationError):
        HamiltonianSpec("power", {"exponent": 1.0})


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_legendre_duality_quadratic(p, v):
    H = HamiltonianSpec("quadratic")
    assert float(H.L(v)) + float(H.H(p)) >= -p * v - 1e-9 * (1 + abs(p * v))
    assert float(H.L(v)) + float(H.H(-v)) == pytest.approx(v * v, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.2, 5.0), st.floats(-5, 5), st.floats(-5, 5))
def test_fenchel_young_power(a, p, v):
    H = HamiltonianSpec("power", {"exponent": a})
    assert float(H.L(v)) + float(H.H(p)) >= -p * v - 1e-9 * (1 + abs(p * v))


# -- G and B ------------------------------------------------------------------


def test_G_closed_forms():
    assert enthalpy_G(CouplingSpec("quadratic_half"), 1.0) == 1 / 6
    assert enthalpy_G(CouplingSpec("linear"), 3.0) == 3 / 2
    r = np.array([0.0, 0.3, 2.0, 17.0])
    assert np.array_equal(enthalpy_G(CouplingSpec("zero"), r), np.zeros(4))
    assert np.array_equal(CouplingSpec("quadratic_half").G(r), r**2 / 6)
    assert np.array_equal(CouplingSpec("linear").G(r), r / 2)


def test_G_is_zero_at_zero_density():
    for c in CLOSED_FORM_COUPLINGS + [CouplingSpec("zero")]:
        assert enthalpy_G(c, 0.0) == 0.0


def test_G_negative_density_rejected():
    with pytest.raises(ValueError):
        enthalpy_G(CouplingSpec("linear"), -0.1)


@pytest.mark.parametrize("coupling", CLOSED_FORM_COUPLINGS, ids=lambda c: c.family + str(c.params))
def test_G_quadrature_matches_closed_form(coupling):
    r = np.logspace(-3, 3, 13)
    assert np.max(np.abs(coupling.G(r, quadrature=True) / coupling.G(r) - 1)) <= 1e-6
    assert np.max(np.abs(coupling.dG(r, quadrature=True) / coupling.dG(r) - 1)) <= 1e-6


@pytest.mark.parametrize("coupling", CLOSED_FORM_COUPLINGS, ids=lambda c: c.family + str(c.params))
def test_enthalpy_identity_closed_forms(coupling):
    # r G'' + 2 G' = g' with G'' from central differences of G'
    r = np.logspace(-4, 4, 41)
    h = 1e-5 * r
    d2 = (coupling.dG(r + h) - coupling.dG(r - h)) / (2 * h)
    lhs = r * d2 + 2 * coupling.dG(r)
    assert np.max(np.abs(lhs / coupling.dg(r) - 1)) <= 1e-6


def tabulated_coupling():
    m = np.linspace(0, 10, 81)
    return CouplingSpec("tabulated", {"m": m, "g": m + 0.3 * m**2})


def test_enthalpy_identity_tabulated():
    c = tabulated_coupling()
    r = np.logspace(-4, 4, 41)
    h = 1e-5 * r
    d2 = (c.dG(r + h) - c.dG(r - h)) / (2 * h)
    assert np.max(np.abs((r * d2 + 2 * c.dG(r)) / c.dg(r) - 1)) <= 1e-4


def test_tabulated_exact_and_quadrature_paths_agree():
    c = tabulated_coupling()
    r = np.array([0.7, 12.0])
    assert np.allclose(c.G(r, quadrature=True), c.G(r), rtol=1e-9)
    assert np.allclose(c.dG(r, quadrature=True), c.dG(r), rtol=1e-9)


def test_tabulated_coupling_recovers_linear():
    m = np.linspace(0, 5, 11)
    c = CouplingSpec("tabulated", {"m": m, "g": m})
    r = np.array([0.1, 1.0, 4.0, 9.0])
    assert np.allclose(c.G(r), r / 2, rtol=1e-12)
    assert np.allclose(c.dG(r), 0.5, rtol=1e-12)


def test_tabulated_coupling_validation():
    with pytest.raises(ConfigurationError, match="non-decreasing"):
        CouplingSpec("tabulated", {"m": [0, 1, 2], "g": [0, 1, 0.5]})
    with pytest.raises(ConfigurationError, match="start at 0"):
        CouplingSpec("tabulated", {"m": [0.5, 1, 2], "g": [0, 1, 2]})


@pytest.mark.parametrize("coupling", CLOSED_FORM_COUPLINGS + [tabulated_coupling()], ids=lambda c: c.family)
def test_G_convex_on_log_grid(coupling):
    r = np.logspace(-3, 3, 200)
    assert np.all(coupling.d2G(r) >= -1e-12)


def test_flux_B_examples():
    assert flux_B(CouplingSpec("quadratic_half"), 2.0) == pytest.approx(8 / 3, rel=1e-15)
    assert flux_B(CouplingSpec("linear"), 5.0) == 12.5
    assert flux_B(CouplingSpec("zero"), 1.0) == 0.0


def test_flux_B_domain_error():
    for r in (0.0, -1.0):
        with pytest.raises(ValueError):
            flux_B(CouplingSpec("linear"), r)


@pytest.mark.parametrize("coupling", CLOSED_FORM_COUPLINGS + [tabulated_coupling()], ids=lambda c: c.family)
def test_flux_B_monotone(coupling):
    r = np.logspace(-3, 3, 300)
    assert np.all(np.diff(flux_B(coupling, r)) >= -1e-12)


# -- potentials and problem spec ------------------------------------------------


@pytest.mark.parametrize("family", ["test1", "test2", "test3"])
def test_potential_derivatives_by_finite_differences(family):
    V = PotentialSpec(family)
    x = np.linspace(-0.9, 0.9, 37)
    t = np.linspace(0, 1, 37)
    h = 1e-5
    fd1 = (V.V(x + h, t) - V.V(x - h, t)) / (2 * h)
    fd2 = (V.V_x(x + h, t) - V.V_x(x - h, t)) / (2 * h)
    assert np.allclose(V.V_x(x, t), fd1, rtol=1e-6, atol=1e-8)
    assert np.allclose(V.V_xx(x, t), fd2, rtol=1e-6, atol=1e-7)


def test_polynomial_potential():
    V = PotentialSpec("polynomial", {"coeffs": [[1.0, 2.0], [0.0, 0.0], [3.0]]})
    x, t = 0.5, 2.0
    assert float(V.V(x, t)) == pytest.approx(1 + 2 * t + 3 * x**2)
    assert float(V.V_x(x, t)) == pytest.approx(6 * x)
    assert float(V.V_xx(x, t)) == pytest.approx(6.0)
    assert not V.is_constant
    assert PotentialSpec("polynomial", {"coeffs": [[1.0, 4.0]]}).is_constant


def test_test1_potential_periodic():
    V = PotentialSpec("test1")
    x = np.linspace(0, 1, 11)
    for t in (0.0, 0.3, 1.0):
        assert np.allclose(V.V(x, t), V.V(x + 1.0, t), atol=1e-12)


def test_problem_spec_validation():
    with pytest.raises(ConfigurationError, match="N must be ≥ 2"):
        ProblemSpec(N=1)
    with pytest.raises(ConfigurationError):
        ProblemSpec(T=0.0)
    spec = ProblemSpec(T=2.0, N=4, N_T=8)
    assert spec.dt == 0.25 and spec.delta == 0.25
    assert spec.times[-1] == 2.0


def test_spec_round_trip_through_dict():
    for spec in (HamiltonianSpec("power", {"exponent": 2.5}), CouplingSpec("power", {"alpha": 2.0, "c": 3.0}),
                 PotentialSpec("polynomial", {"coeffs": [[0.0], [1.0, 2.0]]})):
        assert type(spec).from_dict(spec.to_dict()) == spec


def test_concavity_defect_reports_without_rejecting():
    assert PotentialSpec("constant").concavity_defect("torus", 1.0) == 0.0
    concave = PotentialSpec("polynomial", {"coeffs": [[1.0], [0.5], [-2.0]]})
    assert concave.concavity_defect("real_line", 1.0) == 0.0
    convex = PotentialSpec("polynomial", {"coeffs": [[0.0], [0.0], [0.0, 1.5]]})
    assert convex.concavity_defect("real_line", 2.0) == pytest.approx(2 * 1.5 * 2.0)
    # the periodic test potential is non-constant on the torus, so it cannot be concave there
    assert PotentialSpec("test1").concavity_defect("torus", 1.0) > 1.0
