"""Feasible-path minimization of the discrete objective.

Every iterate keeps strict particle ordering: the step length is capped by
the fraction-to-boundary rule ``gap_new >= (1 - tau) * gap_old`` before an
Armijo backtracking search.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse.linalg as spla

from .discretization import (
    ParticleState,
    TrajectoryGrid,
    _gaps,
    gradient,
    hessian_matrix,
    objective_scaled,
)
from .model import ConfigurationError, Domain, ProblemSpec

logger = logging.getLogger(__name__)


class Method(str, Enum):
    NEWTON_CG = "newton_cg"
    LBFGS = "lbfgs"
    GRADIENT_DESCENT = "gradient_descent"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"newton": "newton_cg", "newtoncg": "newton_cg", "l_bfgs": "lbfgs",
                   "gradientdescent": "gradient_descent", "gd": "gradient_descent"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigurationError(f"unknown solver method {value!r}") from None


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.NEWTON_CG
    grad_tol: float = 1e-8
    max_iters: int = 5000
    fraction_to_boundary: float = 0.995
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    lbfgs_memory: int = 10

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not 0.0 < self.fraction_to_boundary < 1.0:
            raise ConfigurationError("fraction_to_boundary must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise ConfigurationError("grad_tol must be > 0")
        if not (int(self.max_iters) == self.max_iters and self.max_iters >= 1):
            raise ConfigurationError("max_iters must be an integer ≥ 1")
        if not 0.0 < self.armijo_c1 < 1.0 or not 0.0 < self.backtrack < 1.0:
            raise ConfigurationError("Armijo parameters must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "grad_tol": self.grad_tol,
            "max_iters": int(self.max_iters),
            "fraction_to_boundary": self.fraction_to_boundary,
            "armijo_c1": self.armijo_c1,
            "backtrack": self.backtrack,
        }


@dataclass
class SolveResult:
    grid: TrajectoryGrid
    iterations: int
    final_grad_norm: float
    objective_value: float
    converged: bool
    history: list[float] = field(default_factory=list)
    newton_steps: int = 0
    fallback_steps: int = 0


class SolverStalledError(RuntimeError):
    """No acceptable step was found; ``result`` holds the current iterate."""

    def __init__(self, message: str, result: SolveResult):
        super().__init__(message)
        self.result = result


def check_boundary_state(state: ParticleState, name: str = "boundary data") -> None:
    g = state.gaps()
    if not np.all(g > 0):
        raise ConfigurationError(f"degenerate boundary data: {name} has coincident or unordered particles")


def initial_guess(x0: ParticleState, xT: ParticleState, N_T: int, T: float = 1.0) -> TrajectoryGrid:
    """Linear interpolation between the boundary rows (in lifted coordinates)."""
    if x0.N != xT.N:
        raise ConfigurationError("initial and terminal states have different particle counts")
    if x0.domain is not xT.domain:
        raise ConfigurationError("initial and terminal states live on different domains")
    if N_T < 1:
        raise ConfigurationError("N_T must be ≥ 1")
    check_boundary_state(x0, "initial state")
    check_boundary_state(xT, "terminal state")
    s = np.arange(N_T + 1)[:, None] / N_T
    X = x0.positions[None, :] + s * (xT.positions - x0.positions)[None, :]
    X[0] = x0.positions
    X[-1] = xT.positions
    return TrajectoryGrid(X, T / N_T, x0.domain)


def random_feasible_guess(x0: ParticleState, xT: ParticleState, N_T: int, T: float = 1.0,
                          rng: np.random.Generator | None = None, scale: float = 0.45) -> TrajectoryGrid:
    """Linear interpolation with every interior particle jittered inside its ordering slack."""
    rng = np.random.default_rng(rng)
    base = initial_guess(x0, xT, N_T, T)
    X = np.array(base.positions)
    g = _gaps(X, base.domain)
    for n in range(1, N_T):
        left = g[n].copy()
        right = np.empty_like(left)
        right[:-1] = left[1:]
        right[-1] = left[0] if base.domain is Domain.TORUS else np.inf
        # each particle moves < scale * (smaller adjacent gap), so no gap can close for scale < 1/2
        room = np.minimum(left, right)
        X[n] += scale * room * rng.uniform(-1.0, 1.0, size=X.shape[1])
    return TrajectoryGrid(X, base.dt, base.domain)


def _max_step(grid: TrajectoryGrid, direction: np.ndarray, tau: float) -> float:
    K, N = grid.N_T - 1, grid.N
    d = direction.reshape(K, N)
    g = _gaps(grid.positions[1:-1], grid.domain)
    if grid.domain is Domain.TORUS:
        dg = d - np.roll(d, 1, axis=1)
    else:
        g = g[:, 1:]
        dg = d[:, 1:] - d[:, :-1]
    shrinking = dg < 0
    if not np.any(shrinking):
        return np.inf
    return float(np.min(-tau * g[shrinking] / dg[shrinking]))


def _lbfgs_direction(g: np.ndarray, memory: deque) -> np.ndarray:
    q = -g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, _ = memory[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    else:
        q /= max(1.0, float(np.max(np.abs(g))))
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _line_search(spec, config, grid, f, g, d, flat):
    """Armijo backtracking from the fraction-to-boundary cap; ``None`` if no step above 1e-16 works."""
    slope = float(g @ d)
    alpha = min(1.0, _max_step(grid, d, config.fraction_to_boundary))
    z = grid.interior
    g2 = float(np.linalg.norm(g))
    while alpha > 1e-16:
        trial = grid.with_interior(z + alpha * d)
        f_new = objective_scaled(trial, spec)
        # strict decrease: a step lost in round-off must not pass as sufficient decrease
        if f_new <= f + config.armijo_c1 * alpha * slope and f_new < f:
            return alpha, trial, f_new, gradient(trial, spec)
        # round-off floor: objective flat to machine precision, accept if the gradient shrinks
        if f_new <= f + flat(f):
            g_new = gradient(trial, spec)
            if np.linalg.norm(g_new) < g2:
                return alpha, trial, f_new, g_new
        alpha *= config.backtrack
    return None


def solve(spec: ProblemSpec, config: SolverConfig | None = None, guess: TrajectoryGrid | None = None,
          callback=None) -> SolveResult:
    """Minimize the N-scaled discrete objective over the interior rows of ``guess``.

    ``callback(grid)`` is called with every accepted iterate.  Raises
    :class:`SolverStalledError` when the line search cannot find an acceptable
    step; returns ``converged=False`` when ``max_iters`` is hit.
    """
    config = config or SolverConfig()
    if guess is None:
        raise ConfigurationError("solve needs an initial guess grid")
    if guess.N != spec.N or guess.domain is not spec.domain:
        raise ConfigurationError("guess does not match the problem (N or domain)")
    if not guess.is_feasible():
        raise ConfigurationError("initial guess is not strictly ordered")
    check_boundary_state(guess.state(0), "initial state")
    check_boundary_state(guess.state(guess.N_T), "terminal state")

    grid = guess
    if grid.N_T < 2:
        f = objective_scaled(grid, spec)
        return SolveResult(grid, 0, 0.0, f / spec.N, True, [f / spec.N])

    f = objective_scaled(grid, spec)
    g = gradient(grid, spec)
    history = [f / spec.N]
    memory: deque = deque(maxlen=config.lbfgs_memory)
    newton_steps = fallback_steps = 0
    eps = np.finfo(float).eps

    def flat(f):
        # objective values within this band are round-off; never more than 1e-12 in reported units
        return min(64 * eps * max(1.0, abs(f)), 1e-12 * spec.N)

    def result(converged, it):
        return SolveResult(grid, it, float(np.max(np.abs(g))), f / spec.N, converged, history,
                           newton_steps, fallback_steps)

    for it in range(int(config.max_iters)):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= config.grad_tol:
            return result(True, it)

        d = None
        if config.method is Method.NEWTON_CG:
            try:
                H = hessian_matrix(grid, spec)
                d = spla.splu(H).solve(-g)
                curvature = float(d @ (H @ d))
                if not (np.all(np.isfinite(d)) and curvature > 0 and g @ d < 0):
                    d = None
            except (RuntimeError, ValueError):
                d = None
            if d is None:
                fallback_steps += 1
            else:
                newton_steps += 1
        if d is None:
            if config.method is Method.GRADIENT_DESCENT:
                d = -g / max(1.0, gnorm)
            else:
                d = _lbfgs_direction(g, memory)
                if not g @ d < 0:
                    memory.clear()
                    d = -g / max(1.0, gnorm)

        step = _line_search(spec, config, grid, f, g, d, flat)
        if step is None and not np.array_equal(d, -g / max(1.0, gnorm)):
            # retry along steepest descent before giving up
            memory.clear()
            d = -g / max(1.0, gnorm)
            step = _line_search(spec, config, grid, f, g, d, flat)
        if step is None:
            raise SolverStalledError(f"line search failed at iteration {it} (grad norm {gnorm:.3e})", result(False, it))
        alpha, trial, f_new, g_new = step

        assert trial.is_feasible(), "fraction-to-boundary rule violated"
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            memory.append((s, y, 1.0 / sy))
        grid, f, g = trial, f_new, g_new
        history.append(f / spec.N)
        if callback is not None:
            callback(grid)
        logger.debug("iter %d  F=%.16e  |g|=%.3e  alpha=%.3e", it, f, float(np.max(np.abs(g))), alpha)

    gnorm = float(np.max(np.abs(g)))
    return result(gnorm <= config.grad_tol, int(config.max_iters))
