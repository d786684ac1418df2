"""Trajectory grid and the fully discrete objective with its derivatives.

Positions are stored as an ``(N_T + 1, N)`` array: row ``n`` is time
``t_n = n * dt``, column ``i`` is particle ``i + 1``.  Rows 0 and ``N_T``
are boundary data; the unknowns are the interior rows flattened in C order.

The canonical optimized function is the *N-scaled* objective

    F(x) = sum_{n<N_T} sum_i [ L(v_i^n) + G(R_i^n) - V(x_i^n, t_n) ],

with forward velocities ``v_i^n = (x_i^{n+1} - x_i^n) / dt`` and gap
densities ``R_i^n = (1/N) / (x_i^n - x_{i-1}^n)``.  :func:`objective`
reports ``F / N``; :func:`gradient` and :func:`hessian_apply` differentiate
``F`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import Domain, ProblemSpec


class ParticleCollisionError(ValueError):
    """Two consecutive particles touch or cross."""


def _gaps(X: np.ndarray, domain: Domain) -> np.ndarray:
    """Gap ``x_i - x_{i-1}`` for every particle; column 0 is the left boundary gap."""
    X = np.asarray(X, dtype=float)
    g = np.empty_like(X)
    g[..., 1:] = X[..., 1:] - X[..., :-1]
    if domain is Domain.TORUS:
        g[..., 0] = X[..., 0] - (X[..., -1] - 1.0)
    else:
        g[..., 0] = np.inf
    return g


def _check_gaps(g: np.ndarray) -> None:
    if not np.all(g > 0):
        bad = np.argwhere(~(g > 0))[0]
        raise ParticleCollisionError(f"particle collision at index {tuple(int(b) for b in bad)}")


@dataclass(frozen=True)
class ParticleState:
    """One time slice of ordered particle positions (torus positions lifted to R)."""

    positions: np.ndarray
    domain: Domain = Domain.TORUS

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        if x.size < 1 or not np.all(np.isfinite(x)):
            raise ValueError("particle positions must be finite")

    @property
    def N(self) -> int:
        return self.positions.size

    def gaps(self) -> np.ndarray:
        return _gaps(self.positions, self.domain)

    def is_feasible(self) -> bool:
        return bool(np.all(self.gaps() > 0))

    def wrapped(self) -> np.ndarray:
        x = self.positions
        return x - np.floor(x) if self.domain is Domain.TORUS else x.copy()


@dataclass(frozen=True)
class DiscreteDensity:
    """Piecewise-constant density: value ``R_i`` on ``[x_{i-1}, x_i)``.

    ``values[0]`` is the left boundary gap (the wraparound gap on the torus,
    zero on the real line).  On the real line the gap right of the last
    particle also carries density zero and is not stored.
    """

    values: np.ndarray
    gaps: np.ndarray
    domain: Domain

    @property
    def mass(self) -> float:
        finite = np.isfinite(self.gaps)
        return float(np.sum(self.values[finite] * self.gaps[finite]))

    def lp_norm(self, p: float) -> float:
        finite = np.isfinite(self.gaps)
        return float(np.sum(self.values[finite] ** p * self.gaps[finite]) ** (1.0 / p))


def discrete_density(state: ParticleState) -> DiscreteDensity:
    g = state.gaps()
    _check_gaps(g)
    R = (1.0 / state.N) / g
    return DiscreteDensity(values=R, gaps=g, domain=state.domain)


@dataclass(frozen=True)
class TrajectoryGrid:
    """``(N_T + 1) x N`` particle positions with pinned first and last rows."""

    positions: np.ndarray
    dt: float
    domain: Domain = Domain.TORUS

    def __post_init__(self):
        X = np.array(self.positions, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("trajectory grid must have shape (N_T + 1, N) with N_T >= 1")
        X.setflags(write=False)
        object.__setattr__(self, "positions", X)
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @property
    def N_T(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def T(self) -> float:
        return self.dt * self.N_T

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N_T + 1) * self.dt

    @property
    def interior(self) -> np.ndarray:
        return self.positions[1:-1].reshape(-1).copy()

    @property
    def n_unknowns(self) -> int:
        return (self.N_T - 1) * self.N

    def with_interior(self, z: np.ndarray) -> "TrajectoryGrid":
        X = np.array(self.positions)
        X[1:-1] = np.asarray(z, dtype=float).reshape(self.N_T - 1, self.N)
        return TrajectoryGrid(X, self.dt, self.domain)

    def state(self, n: int) -> ParticleState:
        return ParticleState(self.positions[n], self.domain)

    @property
    def states(self) -> list[ParticleState]:
        return [self.state(n) for n in range(self.N_T + 1)]

    def gaps(self) -> np.ndarray:
        return _gaps(self.positions, self.domain)

    def densities(self) -> np.ndarray:
        """``R_i^n`` for every node; the real-line boundary column is 0."""
        return (1.0 / self.N) / self.gaps()

    def velocities(self) -> np.ndarray:
        """Forward differences ``(x^{n+1} - x^n) / dt``, shape ``(N_T, N)``."""
        return np.diff(self.positions, axis=0) / self.dt

    def is_feasible(self) -> bool:
        return bool(np.all(self.gaps() > 0))

    def min_gap(self) -> float:
        g = self.gaps()
        return float(np.min(g[np.isfinite(g)]))


def _check_grid(grid: TrajectoryGrid, spec: ProblemSpec) -> np.ndarray:
    if grid.domain is not spec.domain:
        raise ValueError("grid and problem domains differ")
    if grid.N != spec.N:
        raise ValueError(f"grid has {grid.N} particles, problem expects {spec.N}")
    g = grid.gaps()
    _check_gaps(g)
    return g


def objective_scaled(grid: TrajectoryGrid, spec: ProblemSpec) -> float:
    """The N-scaled discrete objective ``F`` (the function the solver minimizes)."""
    g = _check_grid(grid, spec)
    X = grid.positions
    dt = grid.dt
    t = grid.times[:-1, None]
    v = np.diff(X, axis=0) / dt
    kinetic = spec.hamiltonian.L(v)
    R = spec.delta / g[:-1]
    potential_energy = spec.coupling.G(R)
    Vn = spec.potential.V(X[:-1], t)
    if not np.all(np.isfinite(Vn)):
        raise FloatingPointError("potential is not finite on the grid")
    terms = kinetic + potential_energy - Vn
    # ascending n, then ascending i
    return float(np.sum(np.sum(terms, axis=1)))


def objective(grid: TrajectoryGrid, spec: ProblemSpec) -> float:
    """Fully discrete objective ``(1/N) sum_i sum_{n<N_T} [L + G - V]`` (dt dropped)."""
    return objective_scaled(grid, spec) / spec.N


def _gap_weights(g: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """``d/dgap G(delta/gap) = -G'(R) delta / gap^2``; zero for infinite gaps."""
    finite = np.isfinite(g)
    w = np.zeros_like(g)
    gf = g[finite]
    R = spec.delta / gf
    w[finite] = -spec.coupling.dG(R) * spec.delta / (gf * gf)
    return w


def _gap_curvatures(g: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """``d^2/dgap^2 G(delta/gap)``; zero for infinite gaps."""
    finite = np.isfinite(g)
    c = np.zeros_like(g)
    gf = g[finite]
    d = spec.delta
    R = d / gf
    c[finite] = spec.coupling.d2G(R) * d * d / gf**4 + 2.0 * spec.coupling.dG(R) * d / gf**3
    return c


def _left_neighbor(N: int) -> np.ndarray:
    return (np.arange(N) - 1) % N


def gradient(grid: TrajectoryGrid, spec: ProblemSpec) -> np.ndarray:
    """Gradient of the N-scaled objective with respect to the interior unknowns.

    Component ``(j, k)`` is

        [L'(v_j^{k-1}) - L'(v_j^k)] / dt
        + G'(R_{j+1}^k) delta / gap_{j+1}^2 - G'(R_j^k) delta / gap_j^2
        - V_x(x_j^k, t_k),

    returned flattened over ``k = 1..N_T-1`` (outer) and ``j`` (inner).
    """
    g = _check_grid(grid, spec)
    X = grid.positions
    dt = grid.dt
    if grid.N_T < 2:
        return np.zeros(0)
    dL = spec.hamiltonian.dL(np.diff(X, axis=0) / dt)
    kin = (dL[:-1] - dL[1:]) / dt
    w = _gap_weights(g[1:-1], spec)
    # particle j owns gap j (as right end) and gap j+1 (as left end)
    right = np.zeros_like(w)
    right[:, :-1] = w[:, 1:]
    if grid.domain is Domain.TORUS:
        right[:, -1] = w[:, 0]
    coup = w - right
    pot = spec.potential.V_x(X[1:-1], grid.times[1:-1, None])
    return (kin + coup - pot).reshape(-1)


def hessian_apply(grid: TrajectoryGrid, spec: ProblemSpec, direction: np.ndarray) -> np.ndarray:
    """Hessian-vector product of the N-scaled objective, by stencil.

    Unknown ``(j, k)`` couples to ``(j, k +- 1)`` through ``L''`` and to its
    particle neighbours (cyclically on the torus) through the gap terms.
    """
    g = _check_grid(grid, spec)
    K, N = grid.N_T - 1, grid.N
    d = np.asarray(direction, dtype=float).reshape(K, N)
    X = grid.positions
    dt = grid.dt
    a = spec.hamiltonian.d2L(np.diff(X, axis=0) / dt) / (dt * dt)  # (N_T, N)
    out = (a[:-1] + a[1:]) * d
    out[1:] -= a[1:-1] * d[:-1]
    out[:-1] -= a[1:-1] * d[1:]
    c = _gap_curvatures(g[1:-1], spec)
    # second difference across each gap: gap i spans particles (i-1, i)
    if grid.domain is Domain.TORUS:
        dgap = d - np.roll(d, 1, axis=1)
        flux = c * dgap
        out += flux - np.roll(flux, -1, axis=1)
    else:
        dgap = np.zeros_like(d)
        dgap[:, 1:] = d[:, 1:] - d[:, :-1]
        flux = c * dgap
        out += flux
        out[:, :-1] -= flux[:, 1:]
    out -= spec.potential.V_xx(X[1:-1], grid.times[1:-1, None]) * d
    return out.reshape(-1)


def hessian_matrix(grid: TrajectoryGrid, spec: ProblemSpec) -> sp.csc_matrix:
    """Assembled sparse Hessian of the N-scaled objective (same entries as :func:`hessian_apply`)."""
    g = _check_grid(grid, spec)
    K, N = grid.N_T - 1, grid.N
    X = grid.positions
    dt = grid.dt
    idx = np.arange(K * N).reshape(K, N)
    a = spec.hamiltonian.d2L(np.diff(X, axis=0) / dt) / (dt * dt)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [(a[:-1] + a[1:] - spec.potential.V_xx(X[1:-1], grid.times[1:-1, None])).ravel()]
    if K > 1:
        off = -a[1:-1].ravel()
        rows += [idx[:-1].ravel(), idx[1:].ravel()]
        cols += [idx[1:].ravel(), idx[:-1].ravel()]
        vals += [off, off]
    c = _gap_curvatures(g[1:-1], spec)
    if grid.domain is Domain.TORUS:
        left = idx[:, _left_neighbor(N)]
        cc = c
        me = idx
    else:
        left = idx[:, :-1]
        cc = c[:, 1:]
        me = idx[:, 1:]
    rows += [me.ravel(), left.ravel(), me.ravel(), left.ravel()]
    cols += [me.ravel(), left.ravel(), left.ravel(), me.ravel()]
    vals += [cc.ravel(), cc.ravel(), -cc.ravel(), -cc.ravel()]
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(K * N, K * N))
    return H.tocsc()


def euler_lagrange_residual(grid: TrajectoryGrid, spec: ProblemSpec) -> np.ndarray:
    """Semi-discrete optimality residual at interior nodes, shape ``(N_T - 1, N)``.

    ``L''(v^n) (x^{n+1} - 2 x^n + x^{n-1}) / dt^2 - N (B(R_{i+1}) - B(R_i)) + V_x``
    with ``B(r) = G'(r) r^2`` and forward velocities.
    """
    if grid.N_T < 2:
        raise ValueError("euler_lagrange_residual needs N_T >= 2")
    g = _check_grid(grid, spec)
    X = grid.positions
    dt = grid.dt
    v = np.diff(X, axis=0) / dt
    acc = (X[2:] - 2 * X[1:-1] + X[:-2]) / (dt * dt)
    R = spec.delta / g[1:-1]
    B = np.zeros_like(R)
    pos = R > 0
    B[pos] = spec.coupling.dG(R[pos]) * R[pos] ** 2
    B_right = np.zeros_like(B)
    B_right[:, :-1] = B[:, 1:]
    if grid.domain is Domain.TORUS:
        B_right[:, -1] = B[:, 0]
    Vx = spec.potential.V_x(X[1:-1], grid.times[1:-1, None])
    return spec.hamiltonian.d2L(v[1:]) * acc - spec.N * (B_right - B) + Vx
