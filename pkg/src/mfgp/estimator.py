"""scikit-learn style front end for the particle planner."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_coupling, as_hamiltonian, as_potential, check_positions
from .discretization import ParticleState
from .model import ConfigurationError, Domain, ProblemSpec
from .optimizer import SolverConfig, initial_guess, random_feasible_guess, solve
from .quantile import atomize, cdf_points, cdf_sup_error


class ParticlePlanner(BaseEstimator):
    """Optimal particle trajectories between two ordered configurations.

    ``fit(x0, xT)`` minimizes the discrete planning functional with the
    boundary rows pinned; ``predict(t)`` returns positions at arbitrary times
    (piecewise-linear between time nodes).

    Parameters
    ----------
    domain : {"torus", "real_line"}
    horizon : float
        Final time ``T``.
    n_steps : int
        Number of time subintervals ``N_T``.
    hamiltonian, coupling, potential : str, dict or spec
        Family names (``"quadratic"``, ``"linear"``, ``"test2"``...), config
        records ``{"family": ..., "params": {...}}`` or spec objects.
    method, grad_tol, max_iter, fraction_to_boundary
        Solver settings, see :class:`mfgp.optimizer.SolverConfig`.
    init : {"linear", "random"}
        Starting trajectories; ``"random"`` jitters the linear interpolation
        using ``random_state``.

    Attributes
    ----------
    grid_ : TrajectoryGrid
    trajectories_ : ndarray of shape (n_steps + 1, n_particles)
    objective_ : float
    n_iter_ : int
    grad_norm_ : float
    converged_ : bool
    """

    def __init__(
        self,
        domain="torus",
        horizon=1.0,
        n_steps=100,
        hamiltonian="quadratic",
        coupling="linear",
        potential="constant",
        method="newton_cg",
        grad_tol=1e-8,
        max_iter=5000,
        fraction_to_boundary=0.995,
        init="linear",
        random_state=None,
    ):
        self.domain = domain
        self.horizon = horizon
        self.n_steps = n_steps
        self.hamiltonian = hamiltonian
        self.coupling = coupling
        self.potential = potential
        self.method = method
        self.grad_tol = grad_tol
        self.max_iter = max_iter
        self.fraction_to_boundary = fraction_to_boundary
        self.init = init
        self.random_state = random_state

    def _problem(self, N: int) -> ProblemSpec:
        return ProblemSpec(
            domain=Domain.parse(self.domain),
            T=float(self.horizon),
            N=int(N),
            N_T=int(self.n_steps),
            hamiltonian=as_hamiltonian(self.hamiltonian),
            coupling=as_coupling(self.coupling),
            potential=as_potential(self.potential),
        )

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(self.method, self.grad_tol, self.max_iter, self.fraction_to_boundary)

    def fit(self, x0, xT):
        """Solve for trajectories from positions ``x0`` at t=0 to ``xT`` at t=T."""
        domain = Domain.parse(self.domain)
        a = check_positions(x0, domain, "x0")
        b = check_positions(xT, domain, "xT")
        if a.size != b.size:
            raise ConfigurationError("x0 and xT must hold the same number of particles")
        spec = self._problem(a.size)
        s0, sT = ParticleState(a, domain), ParticleState(b, domain)
        if self.init == "linear":
            guess = initial_guess(s0, sT, spec.N_T, spec.T)
        elif self.init == "random":
            guess = random_feasible_guess(s0, sT, spec.N_T, spec.T, rng=self.random_state)
        else:
            raise ConfigurationError(f"unknown init {self.init!r}")
        result = solve(spec, self._solver_config(), guess)
        self.problem_ = spec
        self.result_ = result
        self.grid_ = result.grid
        self.trajectories_ = np.array(result.grid.positions)
        self.objective_ = result.objective_value
        self.n_iter_ = result.iterations
        self.grad_norm_ = result.final_grad_norm
        self.converged_ = result.converged
        self.n_particles_ = a.size
        return self

    def fit_densities(self, initial_density, terminal_density, n_particles: int):
        """Atomize both densities into ``n_particles`` particles, then :meth:`fit`."""
        domain = Domain.parse(self.domain)
        x0 = atomize(initial_density, n_particles, domain).positions
        xT = atomize(terminal_density, n_particles, domain).positions
        return self.fit(x0, xT)

    def predict(self, t):
        """Particle positions at times ``t``; shape ``(len(t), N)`` (or ``(N,)`` for scalar ``t``)."""
        check_is_fitted(self, "grid_")
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < 0) or np.any(t_arr > self.grid_.T * (1 + 1e-12)):
            raise ValueError(f"times must lie in [0, {self.grid_.T}]")
        nodes = self.grid_.times
        X = self.grid_.positions
        out = np.stack([np.interp(t_arr, nodes, X[:, i]) for i in range(X.shape[1])], axis=-1)
        return out[0] if np.ndim(t) == 0 else out

    def score(self, exact_cdf, t=None):
        """Negative sup-norm CDF error at time ``t`` (default ``T/2``) against ``exact_cdf(x, t)``."""
        check_is_fitted(self, "grid_")
        t = self.grid_.T / 2 if t is None else float(t)
        state = ParticleState(self.predict(t), self.grid_.domain)
        pts = cdf_points(state, t, level_offset=1.0 / (2 * self.n_particles_))
        return -cdf_sup_error(pts, exact_cdf)
