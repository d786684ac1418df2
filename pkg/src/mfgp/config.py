"""Run configuration: a versioned JSON document.

Example::

    {
      "schema": "mfgp/1",
      "reference": "test1",
      "problem": {"domain": "torus", "T": 1.0, "N": 50, "N_T": 100,
                  "hamiltonian": {"family": "quadratic"},
                  "coupling": {"family": "quadratic_half"},
                  "potential": {"family": "test1"}},
      "solver": {"method": "newton_cg", "grad_tol": 1e-8, "max_iters": 5000},
      "diagnostics": {"series": ["momentum", "energy", "displacement", "lp", "el_residual"],
                      "U": ["exp_neg", "power:2", "entropy"], "p": [1, 2, 4]},
      "cdf_times": [0.5],
      "output_dir": "out/test1",
      "seed": 0
    }

Boundary densities default to the reference solution at ``t = 0`` and
``t = T``.  Otherwise ``problem.initial_density`` / ``terminal_density`` take
one of ``{"kind": "uniform", "a": .., "b": ..}``, ``{"kind": "tabulated",
"path": "m0.csv"}``, ``{"kind": "reference", "id": "test2"}``,
``{"kind": "points", "positions": [...]}`` or ``{"kind": "random",
"min_gap": 0.05}`` (drawn with ``seed``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .diagnostics import ConvexTestFunction
from .discretization import ParticleState
from .exact import ReferenceId, reference
from .model import ConfigurationError, CouplingSpec, Domain, HamiltonianSpec, PotentialSpec, ProblemSpec
from .optimizer import SolverConfig
from .quantile import DensitySpec, atomize

SCHEMA = "mfgp/1"
SERIES = ("momentum", "energy", "displacement", "lp", "el_residual")


@dataclass
class RunConfig:
    problem: ProblemSpec
    solver: SolverConfig
    initial: Mapping[str, Any]
    terminal: Mapping[str, Any]
    series: tuple[str, ...] = SERIES
    U: tuple[ConvexTestFunction, ...] = ()
    p: tuple[float, ...] = (1.0, 2.0, 4.0)
    reference: ReferenceId | None = None
    output_dir: Path = Path("mfgp-out")
    cdf_times: tuple[float, ...] = ()
    seed: int = 0
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    def boundary_states(self) -> tuple[ParticleState, ParticleState]:
        rng = np.random.default_rng(self.seed)
        x0 = _boundary_state(self.initial, self, 0.0, rng, "problem.initial_density")
        xT = _boundary_state(self.terminal, self, self.problem.T, rng, "problem.terminal_density")
        return x0, xT

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "RunConfig":
        """Copy with overrides for ``N``, ``N_T``, ``grad_tol``, ``max_iters`` or ``output_dir``."""
        raw = json.loads(json.dumps(self.raw))
        for key in ("N", "N_T"):
            if kw.get(key) is not None:
                raw.setdefault("problem", {})[key] = kw[key]
        for key in ("grad_tol", "max_iters"):
            if kw.get(key) is not None:
                raw.setdefault("solver", {})[key] = kw[key]
        if kw.get("output_dir") is not None:
            raw["output_dir"] = str(kw["output_dir"])
        return parse_config(raw, self.base_dir)


def _random_points(N: int, domain: Domain, min_gap: float, rng: np.random.Generator) -> np.ndarray:
    for _ in range(10000):
        if domain is Domain.TORUS:
            x = np.sort(rng.uniform(0.0, 1.0, N))
            gaps = np.diff(np.concatenate((x, [x[0] + 1.0])))
        else:
            x = np.sort(rng.uniform(-1.0, 1.0, N))
            gaps = np.diff(x)
        if gaps.min() >= min_gap:
            return x
    raise ConfigurationError("random boundary data: min_gap too large for N")


def _boundary_state(d: Mapping[str, Any], cfg: RunConfig, t: float, rng, where: str) -> ParticleState:
    spec = cfg.problem
    kind = d.get("kind")
    if kind == "points":
        x = np.asarray(d.get("positions", []), dtype=float)
        if x.size != spec.N:
            raise ConfigurationError(f"{where}.positions must hold N={spec.N} values")
        state = ParticleState(x, spec.domain)
    elif kind == "random":
        state = ParticleState(_random_points(spec.N, spec.domain, float(d.get("min_gap", 0.5 / spec.N)), rng),
                              spec.domain)
    else:
        state = atomize(_density(d, cfg, t, where), spec.N, spec.domain)
    if not state.is_feasible():
        raise ConfigurationError(f"degenerate boundary data in {where}")
    return state


def _density(d: Mapping[str, Any], cfg: RunConfig, t: float, where: str) -> DensitySpec:
    kind = d.get("kind")
    if kind == "uniform":
        return DensitySpec.uniform(float(d.get("a", 0.0)), float(d.get("b", 1.0)))
    if kind == "tabulated":
        if "path" not in d:
            raise ConfigurationError(f"{where}.path is required for tabulated densities")
        path = Path(d["path"])
        if not path.is_absolute():
            path = cfg.base_dir / path
        return DensitySpec.from_csv(path)
    if kind == "reference":
        return DensitySpec.from_reference(d.get("id", cfg.reference), float(d.get("t", t)))
    raise ConfigurationError(f"{where}.kind: unknown density kind {kind!r}")


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigurationError(f"missing field {where}.{key}")
    return mapping[key]


def parse_config(raw: Mapping[str, Any], base_dir: Path | str = ".") -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ConfigurationError("config must be a JSON object")
    schema = raw.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigurationError(f"schema: unsupported version {schema!r} (expected {SCHEMA!r})")
    prob = raw.get("problem") or {}
    ref_id = raw.get("reference")
    ref = None
    if ref_id is not None:
        try:
            ref = reference(ref_id)
        except ValueError as exc:
            raise ConfigurationError(f"reference: {exc}") from None

    def spec_field(name, cls, default):
        val = prob.get(name)
        if val is None:
            if ref is not None:
                return cls(default)
            return cls()
        if isinstance(val, str):
            val = {"family": val}
        try:
            return cls.from_dict(val)
        except ConfigurationError as exc:
            raise ConfigurationError(f"problem.{name}: {exc}") from None

    domain = prob.get("domain", ref.domain if ref else "torus")
    try:
        N = prob.get("N", 50)
        N_T = prob.get("N_T", 100)
        if isinstance(N, float) and N.is_integer():
            N = int(N)
        if isinstance(N_T, float) and N_T.is_integer():
            N_T = int(N_T)
        problem = ProblemSpec(
            domain=domain,
            T=float(prob.get("T", 1.0)),
            N=N,
            N_T=N_T,
            hamiltonian=spec_field("hamiltonian", HamiltonianSpec, ref.hamiltonian if ref else "quadratic"),
            coupling=spec_field("coupling", CouplingSpec, ref.coupling if ref else "linear"),
            potential=spec_field("potential", PotentialSpec, ref.potential_family if ref else "constant"),
        )
    except ConfigurationError as exc:
        msg = str(exc)
        raise ConfigurationError(msg if msg.startswith("problem.") else f"problem: {msg}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"problem: {exc}") from None

    if ref is not None:
        if problem.domain.value != ref.domain:
            raise ConfigurationError(f"problem.domain: {ref.id.value} requires {ref.domain}")
        if problem.coupling.family != ref.coupling:
            raise ConfigurationError(f"problem.coupling: {ref.id.value} requires {ref.coupling}")
        if not problem.potential.family.startswith(ref.potential_family):
            raise ConfigurationError(f"problem.potential: {ref.id.value} requires {ref.potential_family}")

    sol = dict(raw.get("solver") or {})
    try:
        solver = SolverConfig(
            method=sol.get("method", "newton_cg"),
            grad_tol=float(sol.get("grad_tol", 1e-8)),
            max_iters=int(sol.get("max_iters", 5000)),
            fraction_to_boundary=float(sol.get("fraction_to_boundary", 0.995)),
            armijo_c1=float(sol.get("armijo_c1", 1e-4)),
            backtrack=float(sol.get("backtrack", 0.5)),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"solver: {exc}") from None

    default_density = {"kind": "reference"} if ref is not None else None
    initial = prob.get("initial_density", default_density)
    terminal = prob.get("terminal_density", default_density)
    if initial is None:
        raise ConfigurationError("missing field problem.initial_density (or set 'reference')")
    if terminal is None:
        raise ConfigurationError("missing field problem.terminal_density (or set 'reference')")

    diag = raw.get("diagnostics") or {}
    series = tuple(diag.get("series", SERIES))
    unknown = [s for s in series if s not in SERIES]
    if unknown:
        raise ConfigurationError(f"diagnostics.series: unknown series {unknown}")
    try:
        U = tuple(ConvexTestFunction.parse(u) for u in diag.get("U", ("exp_neg", "power:2", "entropy")))
    except (ConfigurationError, ValueError) as exc:
        raise ConfigurationError(f"diagnostics.U: {exc}") from None
    p = tuple(float(q) for q in diag.get("p", (1, 2, 4)))
    if any(q < 0 for q in p):
        raise ConfigurationError("diagnostics.p: exponents must be non-negative")

    cdf_times = tuple(float(t) for t in raw.get("cdf_times", (problem.T / 2,)))
    if any(not 0.0 <= t <= problem.T for t in cdf_times):
        raise ConfigurationError("cdf_times: every time must lie in [0, T]")

    base_dir = Path(base_dir)
    out = Path(raw.get("output_dir", "mfgp-out"))
    if not out.is_absolute():
        out = base_dir / out
    return RunConfig(
        problem=problem,
        solver=solver,
        initial=dict(initial),
        terminal=dict(terminal),
        series=series,
        U=U,
        p=p,
        reference=ref.id if ref else None,
        output_dir=out,
        cdf_times=cdf_times,
        seed=int(raw.get("seed", 0)),
        base_dir=base_dir,
        raw=json.loads(json.dumps(raw)),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, path.parent)
