import numpy as np
import pytest

from mfgp import (
    CouplingSpec,
    HamiltonianSpec,
    ParticleState,
    PotentialSpec,
    ProblemSpec,
    SolverConfig,
    TrajectoryGrid,
    atomize,
    initial_guess,
    solve,
)
from mfgp.exact import reference


def make_spec(domain="torus", N=5, N_T=20, T=1.0, ham="quadratic", coupling="quadratic_half",
              potential="constant"):
    def spec(cls, v):
        if isinstance(v, cls):
            return v
        if isinstance(v, tuple):
            return cls(*v)
        return cls(v)

    return ProblemSpec(domain=domain, T=T, N=N, N_T=N_T,
                       hamiltonian=spec(HamiltonianSpec, ham),
                       coupling=spec(CouplingSpec, coupling),
                       potential=spec(PotentialSpec, potential))


def random_boundary(rng, N, domain, min_gap=0.05):
    """Ordered positions with every gap (wraparound included on the torus) >= min_gap."""
    while True:
        if domain == "torus":
            x = np.sort(rng.uniform(0, 1, N))
            g = np.diff(np.concatenate((x, [x[0] + 1])))
        else:
            x = np.sort(rng.uniform(-1, 1, N))
            g = np.diff(x)
        if g.min() >= min_gap:
            return x


def random_grid(rng, spec, jitter=0.3):
    """Feasible grid: linear interpolation between random boundary rows plus bounded noise."""
    dom = spec.domain.value
    x0 = random_boundary(rng, spec.N, dom)
    xT = random_boundary(rng, spec.N, dom)
    grid = initial_guess(ParticleState(x0, spec.domain), ParticleState(xT, spec.domain), spec.N_T, spec.T)
    X = grid.positions.copy()
    gaps = grid.gaps()[1:-1]
    if dom == "torus":
        room = np.minimum(gaps, np.roll(gaps, -1, axis=1))
    else:
        left = np.concatenate((np.full((gaps.shape[0], 1), np.inf), gaps[:, 1:]), axis=1)
        right = np.concatenate((gaps[:, 1:], np.full((gaps.shape[0], 1), np.inf)), axis=1)
        room = np.minimum(left, right)
    X[1:-1] += jitter * room * rng.uniform(-1, 1, room.shape)
    return TrajectoryGrid(X, spec.dt, spec.domain)


def solve_reference(ref_id, N, N_T=100, grad_tol=1e-8):
    ref = reference(ref_id)
    spec = ref.problem(N=N, N_T=N_T)
    x0 = atomize(spec.initial_density, N, spec.domain)
    xT = atomize(spec.terminal_density, N, spec.domain)
    guess = initial_guess(x0, xT, N_T, spec.T)
    return ref, spec, guess, solve(spec, SolverConfig(grad_tol=grad_tol), guess)


CONSTANT_V_BOUNDARY = (np.array([0.05, 0.2, 0.3, 0.55, 0.8]), np.array([0.15, 0.25, 0.5, 0.7, 0.9]))


def solve_constant_v(N_T, grad_tol=1e-10, boundary=CONSTANT_V_BOUNDARY, coupling="quadratic_half"):
    """Torus, quadratic L, constant V: the conserved-quantity setting."""
    spec = make_spec("torus", N=len(boundary[0]), N_T=N_T, coupling=coupling)
    x0, xT = (ParticleState(b, spec.domain) for b in boundary)
    guess = initial_guess(x0, xT, N_T, spec.T)
    return spec, solve(spec, SolverConfig(grad_tol=grad_tol), guess)


@pytest.fixture(scope="session")
def constant_v_runs():
    return {n: solve_constant_v(n) for n in (20, 40, 80)}
