"""Structural time series on converged trajectories.

Velocities are forward differences ``(x^{k+1} - x^k) / dt`` and step-indexed
quantities use the density of the left time node ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .discretization import TrajectoryGrid, euler_lagrange_residual
from .model import ConfigurationError, Domain, ProblemSpec


@dataclass(frozen=True)
class ConvexTestFunction:
    """Convex ``U`` on ``[0, inf)``: ``power`` (z^p, p >= 1), ``exp_neg`` (e^-z), ``entropy`` (z log z)."""

    family: str
    p: float = 2.0

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in ("power", "exp_neg", "entropy"):
            raise ConfigurationError(f"unknown convex test function {self.family!r}")
        if fam == "power" and self.p < 1:
            raise ConfigurationError("power test function needs p >= 1")

    @classmethod
    def parse(cls, text: "str | ConvexTestFunction") -> "ConvexTestFunction":
        """Parse ``"exp_neg"``, ``"entropy"`` or ``"power:<p>"``."""
        if isinstance(text, cls):
            return text
        name, _, arg = str(text).strip().lower().partition(":")
        if name == "power":
            return cls("power", float(arg or 2.0))
        return cls(name)

    @property
    def label(self) -> str:
        return f"power:{self.p:g}" if self.family == "power" else self.family

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "power":
            return z**self.p
        if self.family == "exp_neg":
            return np.exp(-z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)

    @property
    def vanishes_at_zero(self) -> bool:
        return float(self(0.0)) == 0.0


def momentum_series(grid: TrajectoryGrid, spec: ProblemSpec) -> np.ndarray:
    """``M^k = sum_i L'(v_i^k)`` for ``k = 0..N_T-1``."""
    v = grid.velocities()
    return np.sum(spec.hamiltonian.dL(v), axis=1)


def energy_series(grid: TrajectoryGrid, spec: ProblemSpec) -> np.ndarray:
    """``E^k = sum_i [L'(v) v - L(v) - G(R_i^k)]`` for ``k = 0..N_T-1``."""
    v = grid.velocities()
    ham = spec.hamiltonian
    R = grid.densities()[:-1]
    return np.sum(ham.dL(v) * v - ham.L(v) - spec.coupling.G(R), axis=1)


def interior_window(n_steps: int) -> tuple[int, int]:
    return n_steps // 4, (3 * n_steps) // 4


def energy_drift(series: np.ndarray) -> float | None:
    """Largest per-step change of ``E^k`` over the window ``[N_T/4, 3 N_T/4]``; ``None`` if undefined."""
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        return None
    lo, hi = interior_window(series.size)
    hi = max(hi, lo + 1)
    seg = series[lo:hi + 1]
    if seg.size < 2:
        return None
    return float(np.max(np.abs(np.diff(seg))))


@dataclass
class DisplacementResult:
    U: ConvexTestFunction
    series: np.ndarray
    min_second_difference: float
    chord_slack: float


def displacement_series(grid: TrajectoryGrid, U: ConvexTestFunction | str) -> DisplacementResult:
    """``D^n = sum_i U(R_i^n) (x_i^n - x_{i-1}^n)`` with convexity measures.

    ``chord_slack`` is ``min_n [(n/N_T) D^{N_T} + (1 - n/N_T) D^0 - D^n]``;
    non-negative slack means the chord bound holds.
    """
    U = ConvexTestFunction.parse(U)
    g = grid.gaps()
    R = grid.densities()
    if grid.domain is Domain.REAL_LINE:
        if not U.vanishes_at_zero:
            raise ConfigurationError(f"{U.label}: displacement series on the real line needs U(0) = 0")
        D = np.sum(U(R[:, 1:]) * g[:, 1:], axis=1)
    else:
        D = np.sum(U(R) * g, axis=1)
    second = D[2:] - 2 * D[1:-1] + D[:-2]
    s = np.arange(D.size) / (D.size - 1)
    chord = s * D[-1] + (1 - s) * D[0]
    return DisplacementResult(
        U=U,
        series=D,
        min_second_difference=float(np.min(second)) if second.size else 0.0,
        chord_slack=float(np.min(chord - D)),
    )


@dataclass
class LogConvexityResult:
    p: float
    series: np.ndarray
    violation: float


def lp_logconvexity(grid: TrajectoryGrid, p: float) -> LogConvexityResult:
    """``S_p^n = sum_i (R_i^n)^p`` and ``max_n [S_p^n - (S_p^0)^{1-t/T} (S_p^{N_T})^{t/T}]``."""
    if p < 0:
        raise ValueError("lp_logconvexity: exponent must be non-negative")
    R = grid.densities()
    S = np.sum(R**p, axis=1)
    s = np.arange(S.size) / (S.size - 1)
    bound = S[0] * (S[-1] / S[0]) ** s  # exact when the endpoint sums agree
    return LogConvexityResult(p=float(p), series=S, violation=float(np.max(S - bound)))


@dataclass
class UniformLpResult:
    p: float
    norms: np.ndarray
    interior_max: float
    boundary_max: float

    @property
    def slack(self) -> float:
        """Excess of the largest norm over the larger endpoint norm (<= 0 when the bound holds)."""
        return self.interior_max - self.boundary_max


def uniform_lp_bound(grid: TrajectoryGrid, p: float) -> UniformLpResult:
    """``max_n ||m^N(., t_n)||_p`` against the endpoint norms."""
    if p < 1:
        raise ValueError("uniform_lp_bound: p must be >= 1")
    g = grid.gaps()
    R = grid.densities()
    finite = np.isfinite(g)
    norms = np.sum(np.where(finite, R**p * np.where(finite, g, 0.0), 0.0), axis=1) ** (1.0 / p)
    return UniformLpResult(
        p=float(p),
        norms=norms,
        interior_max=float(np.max(norms)),
        boundary_max=float(max(norms[0], norms[-1])),
    )


@dataclass
class DiagnosticsReport:
    momentum_series: np.ndarray
    energy_series: np.ndarray
    energy_drift: float | None
    displacement: dict[str, DisplacementResult] = field(default_factory=dict)
    lp: dict[float, LogConvexityResult] = field(default_factory=dict)
    uniform_lp: dict[float, UniformLpResult] = field(default_factory=dict)
    el_residual_max: float | None = None
    cdf_errors: dict[float, float] = field(default_factory=dict)

    @property
    def min_second_difference(self) -> dict[str, float]:
        return {k: v.min_second_difference for k, v in self.displacement.items()}


def diagnose(
    grid: TrajectoryGrid,
    spec: ProblemSpec,
    U: Sequence[ConvexTestFunction | str] = ("exp_neg", "power:2", "entropy"),
    p: Sequence[float] = (1, 2, 4),
    cdf_errors: dict[float, float] | None = None,
) -> DiagnosticsReport:
    """Compute every applicable series; families invalid on the domain are skipped."""
    E = energy_series(grid, spec)
    report = DiagnosticsReport(
        momentum_series=momentum_series(grid, spec),
        energy_series=E,
        energy_drift=energy_drift(E),
        cdf_errors=dict(cdf_errors or {}),
    )
    for u in U:
        u = ConvexTestFunction.parse(u)
        if grid.domain is Domain.REAL_LINE and not u.vanishes_at_zero:
            continue
        report.displacement[u.label] = displacement_series(grid, u)
    for q in p:
        report.lp[float(q)] = lp_logconvexity(grid, q)
        if q >= 1:
            report.uniform_lp[float(q)] = uniform_lp_bound(grid, q)
    if grid.N_T >= 2:
        report.el_residual_max = float(np.max(np.abs(euler_lagrange_residual(grid, spec))))
    return report
