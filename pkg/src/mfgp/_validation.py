"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np
from sklearn.utils import check_array

from .model import ConfigurationError, CouplingSpec, Domain, HamiltonianSpec, PotentialSpec


def check_positions(x, domain: Domain | str, name: str = "positions") -> np.ndarray:
    """Return ``x`` as a finite, strictly ordered float vector (torus: spread < 1)."""
    arr = check_array(np.asarray(x, dtype=float).reshape(1, -1), ensure_2d=True, dtype=np.float64,
                      ensure_all_finite=True, input_name=name)[0]
    if arr.size < 2:
        raise ConfigurationError("N must be ≥ 2")
    if np.any(np.diff(arr) <= 0):
        raise ConfigurationError(f"degenerate boundary data: {name} must be strictly increasing")
    if Domain.parse(domain) is Domain.TORUS and not arr[-1] - arr[0] < 1.0:
        raise ConfigurationError(f"degenerate boundary data: {name} must span less than one period")
    return arr


def _coerce(cls, value: Any, default: str):
    if value is None:
        return cls(default)
    if isinstance(value, cls):
        return value
    if isinstance(value, str):
        return cls(value)
    if isinstance(value, Mapping):
        return cls.from_dict(value)
    raise ConfigurationError(f"cannot interpret {value!r} as {cls.__name__}")


def as_hamiltonian(value) -> HamiltonianSpec:
    return _coerce(HamiltonianSpec, value, "quadratic")


def as_coupling(value) -> CouplingSpec:
    return _coerce(CouplingSpec, value, "linear")


def as_potential(value) -> PotentialSpec:
    return _coerce(PotentialSpec, value, "constant")
