"""Particle approximation of one-dimensional mean-field-game planning problems."""

from .discretization import (
    DiscreteDensity,
    ParticleCollisionError,
    ParticleState,
    TrajectoryGrid,
    discrete_density,
    euler_lagrange_residual,
    gradient,
    hessian_apply,
    hessian_matrix,
    objective,
    objective_scaled,
)
from .model import (
    ConfigurationError,
    CouplingSpec,
    Domain,
    HamiltonianSpec,
    LegendreUnboundedError,
    PotentialSpec,
    ProblemSpec,
    enthalpy_G,
    flux_B,
    legendre_transform,
)
from .optimizer import SolveResult, SolverConfig, SolverStalledError, initial_guess, solve
from .quantile import CDFPoints, DensitySpec, atomize, cdf_points, cdf_sup_error
from .estimator import ParticlePlanner

__version__ = "0.1.0"

__all__ = [
    "CDFPoints",
    "ConfigurationError",
    "CouplingSpec",
    "DensitySpec",
    "DiscreteDensity",
    "Domain",
    "HamiltonianSpec",
    "LegendreUnboundedError",
    "ParticleCollisionError",
    "ParticlePlanner",
    "ParticleState",
    "PotentialSpec",
    "ProblemSpec",
    "SolveResult",
    "SolverConfig",
    "SolverStalledError",
    "TrajectoryGrid",
    "atomize",
    "cdf_points",
    "cdf_sup_error",
    "discrete_density",
    "enthalpy_G",
    "euler_lagrange_residual",
    "flux_B",
    "gradient",
    "hessian_apply",
    "hessian_matrix",
    "initial_guess",
    "legendre_transform",
    "objective",
    "objective_scaled",
    "solve",
]
