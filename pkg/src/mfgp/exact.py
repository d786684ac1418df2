"""Closed-form reference solutions for the three benchmark problems.

Each benchmark prescribes a density ``m``, a value function ``u`` and the
potential ``V`` that makes ``(u, m)`` solve the planning system

    -u_t + H(u_x) + V = g(m),     m_t - (m H'(u_x))_x = 0,

with ``H(p) = p^2/2``.  Test 1 lives on the torus with ``g(m) = m^2/2``;
Tests 2 and 3 live on the real line with ``g(m) = m``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import expit

PI = np.pi


class ReferenceId(str, Enum):
    TEST1 = "test1"
    TEST2 = "test2"
    TEST3 = "test3"

    @classmethod
    def parse(cls, value) -> "ReferenceId":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace(" ", "").replace("_", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown reference solution {value!r}") from None


# ---------------------------------------------------------------------------
# Test 1: torus, m = 1 + sin(2 pi x) e^{-1-t}
# ---------------------------------------------------------------------------


def _test1_m(x, t):
    return 1.0 + np.sin(2 * PI * x) * np.exp(-t - 1.0)


def _test1_cdf(x, t):
    frac = x - np.floor(x)
    return frac + np.exp(-1.0 - t) * np.sin(PI * x) ** 2 / PI


def _test1_u(x, t):
    return np.log(np.exp(1.0 + t) + np.sin(2 * PI * x)) / (4 * PI**2)


def _test1_potential(x, t, deriv, sin2=False):
    a = np.exp(-1.0 - t)
    b = np.exp(1.0 + t)
    K = (b * b - 1.0) / PI**2
    s = np.sin(2 * PI * x)
    s1 = 2 * PI * np.cos(2 * PI * x)
    s2 = -4 * PI**2 * s
    # w enters the last denominator as (b + w)^2
    if sin2:
        w, w1, w2 = s * s, 2 * s * s1, 2 * (s1 * s1 + s * s2)
    else:
        w, w1, w2 = s, s1, s2
    d = b + w
    if deriv == 0:
        return (4.0 + 1.0 / PI**2 + 8 * a * s + 4 * a * a * s * s + K / d**2) / 8.0
    if deriv == 1:
        return (8 * a * s1 + 8 * a * a * s * s1 - 2 * K * w1 / d**3) / 8.0
    return (8 * a * s2 + 8 * a * a * (s1 * s1 + s * s2) + 6 * K * w1 * w1 / d**4 - 2 * K * w2 / d**3) / 8.0


# ---------------------------------------------------------------------------
# Test 2: real line, Cauchy density centred at t + t^2/20
# ---------------------------------------------------------------------------


def _test2_center(t):
    return t + t * t / 20.0


def _test2_m(x, t):
    y = x - _test2_center(t)
    return 1.0 / (PI * (1.0 + y * y))


def _test2_cdf(x, t):
    return 0.5 - np.arctan(t * t / 20.0 + t - x) / PI


def _test2_u(x, t):
    return -x - x * t / 10.0


def _test2_potential(x, t, deriv):
    y = x - _test2_center(t)
    q = 1.0 + y * y
    if deriv == 0:
        return -((10.0 + t) ** 2) / 200.0 + 1.0 / (PI * q) - x / 10.0
    if deriv == 1:
        return -2 * y / (PI * q * q) - 0.1
    return (6 * y * y - 2) / (PI * q**3)


# ---------------------------------------------------------------------------
# Test 3: real line, logistic density centred at t + t^3
# ---------------------------------------------------------------------------


def _test3_center(t):
    return t + t**3


def _test3_m(x, t):
    s = expit(x - _test3_center(t))
    return s * (1.0 - s)


def _test3_cdf(x, t):
    return expit(x - _test3_center(t))


def _test3_u(x, t):
    return -(1.0 + 3 * t * t) * x


def _test3_potential(x, t, deriv):
    s = expit(x - _test3_center(t))
    h = s * (1.0 - s)
    if deriv == 0:
        return -0.5 * (1.0 + 3 * t * t) ** 2 - 6 * t * x + h
    if deriv == 1:
        return h * (1.0 - 2 * s) - 6 * t
    return h * (1.0 - 6 * s + 6 * s * s)


def potential(family: str, x, t, deriv: int = 0):
    """Potential of a benchmark (``deriv`` in 0, 1, 2 selects V, V_x, V_xx)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if family == "test1":
        return _test1_potential(x, t, deriv)
    if family == "test1_sin2":
        return _test1_potential(x, t, deriv, sin2=True)
    if family == "test2":
        return _test2_potential(x, t, deriv)
    if family == "test3":
        return _test3_potential(x, t, deriv)
    raise ValueError(f"no closed-form potential {family!r}")


@dataclass(frozen=True)
class ReferenceSolution:
    id: ReferenceId
    domain: str
    coupling: str
    hamiltonian: str
    m: Callable
    cdf: Callable
    u: Callable
    potential_family: str

    def V(self, x, t):
        return potential(self.potential_family, x, t, 0)

    def V_x(self, x, t):
        return potential(self.potential_family, x, t, 1)

    def g(self, m):
        return 0.5 * m * m if self.coupling == "quadratic_half" else m

    def problem(self, N: int = 50, N_T: int = 100, T: float = 1.0, **overrides):
        """Build a :class:`~mfgp.model.ProblemSpec` paired with this solution."""
        from .model import CouplingSpec, HamiltonianSpec, PotentialSpec, ProblemSpec
        from .quantile import DensitySpec

        kw = dict(
            domain=self.domain,
            T=T,
            N=N,
            N_T=N_T,
            hamiltonian=HamiltonianSpec(self.hamiltonian),
            coupling=CouplingSpec(self.coupling),
            potential=PotentialSpec(self.potential_family),
            initial_density=DensitySpec.from_reference(self.id, 0.0),
            terminal_density=DensitySpec.from_reference(self.id, T),
        )
        kw.update(overrides)
        return ProblemSpec(**kw)


_REFS = {
    ReferenceId.TEST1: ReferenceSolution(ReferenceId.TEST1, "torus", "quadratic_half", "quadratic",
                                         _test1_m, _test1_cdf, _test1_u, "test1"),
    ReferenceId.TEST2: ReferenceSolution(ReferenceId.TEST2, "real_line", "linear", "quadratic",
                                         _test2_m, _test2_cdf, _test2_u, "test2"),
    ReferenceId.TEST3: ReferenceSolution(ReferenceId.TEST3, "real_line", "linear", "quadratic",
                                         _test3_m, _test3_cdf, _test3_u, "test3"),
}


def reference(id) -> ReferenceSolution:
    return _REFS[ReferenceId.parse(id)]


def total_mass(ref: ReferenceSolution, t: float) -> float:
    """Mass of ``m(., t)`` over the domain, with analytic tails on the line."""
    if ref.domain == "torus":
        return integrate.quad(lambda x: ref.m(x, t), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    R = 8.0
    while True:
        c = _test2_center(t) if ref.id is ReferenceId.TEST2 else _test3_center(t)
        tail = ref.cdf(c - R, t) + (1.0 - ref.cdf(c + R, t))
        if tail < 1e-10:
            break
        R *= 2.0
    # geometric breakpoints keep quad accurate on the long Cauchy-type tails
    edges = np.concatenate((-np.geomspace(R, 1.0, 24), [0.0], np.geomspace(1.0, R, 24)))
    core = sum(integrate.quad(lambda x: ref.m(x, t), c + a, c + b, epsabs=1e-15, epsrel=1e-13)[0]
               for a, b in zip(edges[:-1], edges[1:]))
    return core + tail


@dataclass
class ConsistencyReport:
    id: ReferenceId
    hj_residual: float
    transport_residual: float
    cdf_residual: float
    potential_derivative_residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return max(self.hj_residual, self.transport_residual, self.cdf_residual,
                   self.potential_derivative_residual) <= self.tolerance


def pde_residuals(ref: ReferenceSolution, x, t, h: float = 1e-4, potential_family: str | None = None):
    """Finite-difference residuals of both planning equations at ``(x, t)``."""
    fam = potential_family or ref.potential_family
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    u_t = (ref.u(x, t + h) - ref.u(x, t - h)) / (2 * h)
    u_x = (ref.u(x + h, t) - ref.u(x - h, t)) / (2 * h)
    hj = -u_t + 0.5 * u_x**2 + potential(fam, x, t, 0) - ref.g(ref.m(x, t))

    def flux(xx):
        ux = (ref.u(xx + h, t) - ref.u(xx - h, t)) / (2 * h)
        return ref.m(xx, t) * ux

    m_t = (ref.m(x, t + h) - ref.m(x, t - h)) / (2 * h)
    transport = m_t - (flux(x + h) - flux(x - h)) / (2 * h)
    return hj, transport


def verify_reference_consistency(id, tol: float = 1e-4, h: float = 1e-4,
                                 potential_family: str | None = None) -> ConsistencyReport:
    """Check the closed forms against each other on a space-time sample grid.

    Verifies both planning equations, ``cdf_x = m`` and ``V_x`` against
    central differences.  A failing report means a transcription error.
    """
    ref = reference(id)
    fam = potential_family or ref.potential_family
    if ref.domain == "torus":
        xs = np.linspace(0.0, 1.0, 23)[:-1] + 0.013
    else:
        xs = np.linspace(-6.0, 6.0, 25)
    ts = np.linspace(0.05, 0.95, 10)
    X, Tt = np.meshgrid(xs, ts)
    hj, tr = pde_residuals(ref, X, Tt, h=h, potential_family=fam)
    cdf_x = (ref.cdf(X + h, Tt) - ref.cdf(X - h, Tt)) / (2 * h)
    vx_fd = (potential(fam, X + h, Tt, 0) - potential(fam, X - h, Tt, 0)) / (2 * h)
    vx = potential(fam, X, Tt, 1)
    return ConsistencyReport(
        id=ref.id,
        hj_residual=float(np.max(np.abs(hj))),
        transport_residual=float(np.max(np.abs(tr))),
        cdf_residual=float(np.max(np.abs(cdf_x - ref.m(X, Tt)))),
        potential_derivative_residual=float(np.max(np.abs(vx_fd - vx) / np.maximum(1.0, np.abs(vx)))),
        tolerance=tol,
    )
