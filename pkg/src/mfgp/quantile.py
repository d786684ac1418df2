"""Atomization of densities into ordered particles and CDF reconstruction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .model import ConfigurationError, Domain

INVERSION_XTOL = 1e-12


@dataclass(frozen=True)
class DensitySpec:
    """A probability density given through its CDF.

    On the torus the CDF is the per-period distribution on ``[0, 1)``; on the
    real line it is the usual CDF.  Build instances with the ``uniform``,
    ``from_cdf``, ``tabulated``, ``from_csv`` and ``from_reference``
    constructors.
    """

    kind: str
    cdf: Callable[[np.ndarray], np.ndarray]
    pdf: Callable[[np.ndarray], np.ndarray] | None = None
    support: tuple[float, float] | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "DensitySpec":
        if not b > a:
            raise ConfigurationError("uniform density needs b > a")
        w = b - a
        return cls(
            "uniform",
            cdf=lambda x: np.clip((np.asarray(x, float) - a) / w, 0.0, 1.0),
            pdf=lambda x: np.where((np.asarray(x) >= a) & (np.asarray(x) < b), 1.0 / w, 0.0),
            support=(a, b),
            params={"a": a, "b": b},
        )

    @classmethod
    def from_cdf(cls, cdf: Callable, pdf: Callable | None = None, support=None) -> "DensitySpec":
        return cls("closed_form_cdf", cdf=cdf, pdf=pdf, support=support)

    @classmethod
    def from_reference(cls, id, t: float) -> "DensitySpec":
        from .exact import reference

        ref = reference(id)
        t = float(t)
        support = (0.0, 1.0) if ref.domain == "torus" else None
        return cls(
            "reference",
            cdf=lambda x: ref.cdf(np.asarray(x, float), t),
            pdf=lambda x: ref.m(np.asarray(x, float), t),
            support=support,
            params={"id": ref.id.value, "t": t},
        )

    @classmethod
    def tabulated(cls, x, density) -> "DensitySpec":
        """Piecewise-linear density through the samples, renormalized to mass 1."""
        xs = np.asarray(x, dtype=float)
        ds = np.asarray(density, dtype=float)
        if xs.ndim != 1 or xs.shape != ds.shape or xs.size < 2:
            raise ConfigurationError("tabulated density needs matching 1-D x and density columns")
        if np.any(np.diff(xs) <= 0):
            raise ConfigurationError("tabulated density x column must be strictly increasing")
        if np.any(ds < 0) or not np.all(np.isfinite(ds)):
            raise ConfigurationError("tabulated density must be finite and non-negative")
        h = np.diff(xs)
        seg = 0.5 * (ds[1:] + ds[:-1]) * h
        mass = seg.sum()
        if not mass > 0:
            raise ConfigurationError("tabulated density has zero mass")
        ds = ds / mass
        seg = seg / mass
        nodes = np.concatenate(([0.0], np.cumsum(seg)))
        slope = np.diff(ds) / h

        def cdf(x):
            x = np.asarray(x, dtype=float)
            k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
            dx = np.clip(x, xs[0], xs[-1]) - xs[k]
            val = nodes[k] + ds[k] * dx + 0.5 * slope[k] * dx * dx
            return np.clip(np.where(x >= xs[-1], 1.0, val), 0.0, 1.0)

        def pdf(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= xs[0]) & (x <= xs[-1]), np.interp(x, xs, ds), 0.0)

        return cls("tabulated", cdf=cdf, pdf=pdf, support=(float(xs[0]), float(xs[-1])),
                   params={"x": xs.tolist(), "density": ds.tolist()})

    @classmethod
    def from_csv(cls, path) -> "DensitySpec":
        """Load a two-column ``x, density`` CSV (header row optional)."""
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise ConfigurationError(f"malformed row in {path}: {row}") from None
        if not rows:
            raise ConfigurationError(f"no data rows in {path}")
        arr = np.array(rows)
        if np.any(np.diff(arr[:, 0]) <= 0):
            raise ConfigurationError(f"x column of {path} must be strictly increasing")
        return cls.tabulated(arr[:, 0], arr[:, 1])


@dataclass(frozen=True)
class CDFPoints:
    """Pairs ``(x_i, q_i)`` of particle positions and quantile levels at time ``t``.

    On the torus ``x`` is wrapped to ``[0, 1)`` and each level is shifted by
    the same whole number of periods, so levels may fall outside ``(0, 1]``
    while gap masses are preserved.
    """

    x: np.ndarray
    levels: np.ndarray
    t: float = 0.0


def _bisect(cdf, level, lo, hi, xtol=INVERSION_XTOL):
    """Leftmost ``x`` in ``[lo, hi]`` with ``cdf(x) >= level``."""
    lo, hi = float(lo), float(hi)
    while hi - lo > xtol * max(1.0, abs(lo), abs(hi)) and hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(cdf(mid)) >= level:
            hi = mid
        else:
            lo = mid
    return hi


def quantile(density: DensitySpec, level: float, domain: Domain | str = Domain.REAL_LINE) -> float:
    """Pseudo-inverse ``inf {x : F(x) >= level}`` by bisection."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"quantile level {level!r} outside (0, 1)")
    domain = Domain.parse(domain)
    if domain is Domain.TORUS:
        lo, hi = density.support or (0.0, 1.0)
        return _bisect(density.cdf, level, lo, hi)
    if density.support is not None:
        lo, hi = density.support
    else:
        lo, hi = -1.0, 1.0
        while float(density.cdf(lo)) >= level:
            lo *= 2.0
            if lo < -1e300:
                raise ValueError("CDF bracket search diverged")
        while float(density.cdf(hi)) < level:
            hi *= 2.0
            if hi > 1e300:
                raise ValueError("CDF bracket search diverged")
    return _bisect(density.cdf, level, lo, hi)


def atomize_levels(N: int, domain: Domain | str, q_offset: float | None = None) -> np.ndarray:
    """Quantile levels used to place ``N`` particles.

    Real line: midpoints ``(2i-1)/(2N)``.  Torus: ``(i-1)/N + q_offset`` with
    ``q_offset = 1/(2N)`` by default.
    """
    domain = Domain.parse(domain)
    i = np.arange(1, N + 1)
    if domain is Domain.REAL_LINE:
        return (2 * i - 1) / (2.0 * N)
    if q_offset is None:
        q_offset = 1.0 / (2 * N)
    return (i - 1) / N + q_offset


def atomize(density: DensitySpec, N: int, domain: Domain | str, q_offset: float | None = None):
    """Place ``N`` particles so consecutive particles bound mass ``1/N``."""
    from .discretization import ParticleState

    if N < 2:
        raise ConfigurationError("N must be ≥ 2")
    domain = Domain.parse(domain)
    levels = atomize_levels(N, domain, q_offset)
    if np.any(levels <= 0) or np.any(levels >= 1):
        raise ValueError("atomization level outside (0, 1)")
    xs = np.array([quantile(density, q, domain) for q in levels])
    return ParticleState(xs, domain)


def cdf_points(state, t: float = 0.0, level_offset: float = 0.0) -> CDFPoints:
    """Approximate CDF of a particle row: particle ``i`` sits at level ``i/N - level_offset``.

    ``level_offset = 1/(2N)`` matches the midpoint levels used by :func:`atomize`.
    """
    x = np.asarray(state.positions, dtype=float)
    N = x.size
    levels = np.arange(1, N + 1) / N - level_offset
    if state.domain is Domain.TORUS:
        periods = np.floor(x)
        xw = x - periods
        qw = levels - periods
        order = np.argsort(xw, kind="stable")
        return CDFPoints(xw[order], qw[order], float(t))
    return CDFPoints(x.copy(), levels, float(t))


def cdf_sup_error(points: CDFPoints, exact_cdf: Callable) -> float:
    """``max_i |F(x_i, t) - q_i|`` for an exact CDF ``F(x, t)``."""
    vals = np.asarray(exact_cdf(points.x, points.t), dtype=float)
    return float(np.max(np.abs(vals - points.levels)))


def lp_norm(density: DensitySpec, p: float, domain: Domain | str) -> float:
    """``||m||_p`` of a density by adaptive quadrature over its support."""
    from scipy import integrate

    if density.pdf is None:
        raise ValueError("density has no pdf")
    domain = Domain.parse(domain)
    if domain is Domain.TORUS:
        lo, hi = 0.0, 1.0
    elif density.support is not None:
        lo, hi = density.support
    else:
        lo, hi = quantile(density, 1e-12, domain), quantile(density, 1 - 1e-12, domain)
    if density.kind == "tabulated":
        # piecewise-linear density: 12-point Gauss-Legendre per segment is exact for integer p <= 23
        xs = np.asarray(density.params["x"])
        ds = np.asarray(density.params["density"])
        nodes, weights = np.polynomial.legendre.leggauss(12)
        a, b = xs[:-1, None], xs[1:, None]
        s = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = np.interp(s, xs, ds) ** p
        return float(np.sum(0.5 * (b - a) * weights * vals)) ** (1.0 / p)
    val, _ = integrate.quad(lambda s: float(density.pdf(s)) ** p, lo, hi, limit=500,
                            epsabs=1e-14, epsrel=1e-12)
    return val ** (1.0 / p)
