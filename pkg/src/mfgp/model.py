"""Problem instances: domain, Hamiltonian, coupling and potential families.

Every spec is a small frozen record ``(family, params)`` so it can be
serialized into a run config and shared read-only between evaluators.
Array arguments are accepted everywhere; scalar in, scalar-shaped out.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from . import exact


class ConfigurationError(ValueError):
    """Raised when a problem or solver description is invalid."""


class Domain(str, Enum):
    TORUS = "torus"
    REAL_LINE = "real_line"

    @classmethod
    def parse(cls, value: "Domain | str") -> "Domain":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"t": "torus", "periodic": "torus", "r": "real_line", "realline": "real_line", "real": "real_line"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigurationError(f"unknown domain {value!r}") from None


def _freeze(params: Mapping[str, Any] | None) -> tuple:
    if not params:
        return ()
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in params.items()))


def _as_float_array(v):
    return np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# Hamiltonian / Lagrangian
# ---------------------------------------------------------------------------

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section_max(fun, lo, hi, tol=1e-13, max_iter=200):
    """Maximize a concave scalar function on ``[lo, hi]``."""
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


class LegendreUnboundedError(ArithmeticError):
    """The supremum defining the Legendre transform diverges."""


@dataclass(frozen=True)
class HamiltonianSpec:
    """Convex Hamiltonian ``H`` with access to its Lagrangian ``L``.

    Families
    --------
    ``quadratic``   H(p) = p^2/2, L(v) = v^2/2.
    ``power``       H(p) = |p|^a / a with ``a > 1``; L(v) = |v|^b / b, b = a/(a-1).
    ``tabulated``   convex samples ``p``, ``H``; H' is interpolated linearly
                    between second-order node slopes and held constant outside
                    the table, so L is finite only for ``-v`` inside the slope
                    range.  L comes from inverting the piecewise-linear H'.
    """

    family: str = "quadratic"
    params: tuple = ()

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", _freeze(self.params))
        p = dict(self.params)
        if fam == "quadratic":
            pass
        elif fam == "power":
            a = float(p.get("exponent", 2.0))
            if not a > 1.0:
                raise ConfigurationError("power Hamiltonian requires exponent > 1")
        elif fam == "tabulated":
            ps = np.asarray(p.get("p", ()), dtype=float)
            hs = np.asarray(p.get("H", ()), dtype=float)
            if ps.size < 3 or ps.shape != hs.shape:
                raise ConfigurationError("tabulated Hamiltonian needs matching 'p' and 'H' arrays of length >= 3")
            if np.any(np.diff(ps) <= 0):
                raise ConfigurationError("tabulated Hamiltonian 'p' must be strictly increasing")
            secants = np.diff(hs) / np.diff(ps)
            if np.any(np.diff(secants) < -1e-12 * (1.0 + np.abs(secants[1:]))):
                raise ConfigurationError("tabulated Hamiltonian samples are not convex")
        else:
            raise ConfigurationError(f"unknown Hamiltonian family {self.family!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HamiltonianSpec":
        return cls(d.get("family", "quadratic"), _freeze(d.get("params")))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params}}

    # -- tabulated helpers -------------------------------------------------
    @functools.cached_property
    def _table(self):
        p = dict(self.params)
        ps = np.asarray(p["p"], dtype=float)
        hs = np.asarray(p["H"], dtype=float)
        # second-order node slopes lie between the adjacent secants, so H' stays
        # monotone; the edge slopes are clipped to keep that true at the ends
        secants = np.diff(hs) / np.diff(ps)
        slopes = np.gradient(hs, ps, edge_order=2)
        slopes[0] = min(slopes[0], secants[0])
        slopes[-1] = max(slopes[-1], secants[-1])
        return ps, hs, slopes

    def _tab_dH(self, q):
        ps, _, s = self._table
        return np.interp(q, ps, s)

    def _tab_d2H(self, q):
        ps, _, s = self._table
        k = np.clip(np.searchsorted(ps, q) - 1, 0, ps.size - 2)
        inside = (q > ps[0]) & (q < ps[-1])
        return np.where(inside, (s[k + 1] - s[k]) / (ps[k + 1] - ps[k]), 0.0)

    def _tab_H(self, q):
        ps, hs, s = self._table
        q = np.asarray(q, dtype=float)
        # exact integral of the piecewise-linear slope; the constant is the
        # least-squares fit to the samples
        seg = 0.5 * (s[1:] + s[:-1]) * np.diff(ps)
        nodes = np.concatenate(([0.0], np.cumsum(seg)))
        nodes = nodes + np.mean(hs - nodes)
        k = np.clip(np.searchsorted(ps, q) - 1, 0, ps.size - 2)
        qc = np.clip(q, ps[0], ps[-1])
        h = qc - ps[k]
        slope_k = (s[k + 1] - s[k]) / (ps[k + 1] - ps[k])
        val = nodes[k] + s[k] * h + 0.5 * slope_k * h * h
        val = val + np.where(q < ps[0], s[0] * (q - ps[0]), 0.0)
        val = val + np.where(q > ps[-1], s[-1] * (q - ps[-1]), 0.0)
        return val

    def _tab_argmax(self, v):
        """Maximizer of ``-p v - H(p)``: the root of ``H'(p) = -v`` on the piecewise-linear slope."""
        ps, _, s = self._table
        y = -np.asarray(v, dtype=float)
        if np.any(y < s[0]) or np.any(y > s[-1]):
            bad = v[(y < s[0]) | (y > s[-1])] if np.ndim(v) else v
            raise LegendreUnboundedError(f"Legendre transform unbounded at v={np.ravel(bad)[0]!r}")
        k = np.clip(np.searchsorted(s, y, side="left"), 1, ps.size - 1)
        lo, hi = s[k - 1], s[k]
        frac = np.where(hi > lo, (y - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
        return ps[k - 1] + np.clip(frac, 0.0, 1.0) * (ps[k] - ps[k - 1])

    # -- Hamiltonian --------------------------------------------------------
    def H(self, p):
        p = _as_float_array(p)
        if self.family == "quadratic":
            return 0.5 * p * p
        if self.family == "power":
            a = float(dict(self.params).get("exponent", 2.0))
            return np.abs(p) ** a / a
        return self._tab_H(p)

    def dH(self, p):
        p = _as_float_array(p)
        if self.family == "quadratic":
            return p
        if self.family == "power":
            a = float(dict(self.params).get("exponent", 2.0))
            return np.sign(p) * np.abs(p) ** (a - 1.0)
        return self._tab_dH(p)

    # -- Lagrangian ---------------------------------------------------------
    def _conj_exponent(self) -> float:
        a = float(dict(self.params).get("exponent", 2.0))
        return a / (a - 1.0)

    def L(self, v):
        v = _as_float_array(v)
        if self.family == "quadratic":
            return 0.5 * v * v
        if self.family == "power":
            b = self._conj_exponent()
            return np.abs(v) ** b / b
        pstar = self._tab_argmax(v)
        return -pstar * v - self._tab_H(pstar)

    def dL(self, v):
        v = _as_float_array(v)
        if self.family == "quadratic":
            return v.copy()
        if self.family == "power":
            b = self._conj_exponent()
            return np.sign(v) * np.abs(v) ** (b - 1.0)
        return -self._tab_argmax(v)

    def d2L(self, v):
        v = _as_float_array(v)
        if self.family == "quadratic":
            return np.ones_like(v)
        if self.family == "power":
            b = self._conj_exponent()
            with np.errstate(divide="ignore"):
                return (b - 1.0) * np.abs(v) ** (b - 2.0)
        curv = self._tab_d2H(self._tab_argmax(v))
        with np.errstate(divide="ignore"):
            return np.where(curv > 0, 1.0 / np.where(curv > 0, curv, 1.0), np.inf)


def _numeric_legendre(ham: HamiltonianSpec, v: float, p_max: float = 1e8):
    """Return ``(L(v), argmax p)`` by golden-section search on a growing bracket."""
    v = float(v)

    def obj(p):
        return float(-p * v - ham.H(p))

    P = 1.0
    while True:
        p = _golden_section_max(obj, -P, P)
        if abs(p) < 0.9 * P:
            break
        P *= 2.0
        if P > p_max:
            raise LegendreUnboundedError(f"Legendre transform unbounded at v={v!r}")
    if ham.family == "tabulated":
        # polish: H' is piecewise linear, so Newton on H'(p) = -v terminates quickly
        for _ in range(50):
            curv = float(ham._tab_d2H(p))
            if curv <= 0:
                break
            step = (float(ham._tab_dH(p)) + v) / curv
            p -= step
            if abs(step) < 1e-15 * max(1.0, abs(p)):
                break
    return obj(p), p


def legendre_transform(H: HamiltonianSpec, v, numeric: bool = False):
    """Evaluate ``L(v) = sup_p [-p v - H(p)]``.

    Closed forms are used for the quadratic and power families and the
    tabulated family solves ``H'(p) = -v`` on its slope table.  With
    ``numeric`` set the supremum is instead found by golden-section search on
    a bracket ``[-P, P]`` that doubles until the maximizer is interior.
    """
    v = _as_float_array(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity must be finite")
    if numeric:
        out = np.vectorize(lambda s: _numeric_legendre(H, s)[0], otypes=[float])(v)
        return out if out.ndim else float(out)
    out = H.L(v)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Coupling and its potential energy G
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingSpec:
    """Local coupling ``g(m)`` and the derived potential energy ``G``.

    ``G`` is fixed by ``G'(r) = r^-2 int_0^r s g'(s) ds`` and normalized so
    that ``G(0+) = 0``.  Families: ``zero``, ``linear`` (g = m),
    ``quadratic_half`` (g = m^2/2), ``power`` (g = c m^alpha, alpha >= 1,
    c > 0) and ``tabulated`` (monotone samples of g, PCHIP-interpolated and
    extended linearly; G from the exact antiderivative of the interpolant).
    ``quadrature=True`` evaluates the defining integrals numerically instead.
    """

    family: str = "linear"
    params: tuple = ()

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", _freeze(self.params))
        p = dict(self.params)
        if fam in ("zero", "linear", "quadratic_half"):
            pass
        elif fam == "power":
            alpha = float(p.get("alpha", 1.0))
            c = float(p.get("c", 1.0))
            if alpha < 1.0 or c <= 0.0:
                raise ConfigurationError("power coupling requires alpha >= 1 and c > 0")
        elif fam == "tabulated":
            ms = np.asarray(p.get("m", ()), dtype=float)
            gs = np.asarray(p.get("g", ()), dtype=float)
            if ms.size < 2 or ms.shape != gs.shape:
                raise ConfigurationError("tabulated coupling needs matching 'm' and 'g' arrays")
            if ms[0] != 0.0 or np.any(np.diff(ms) <= 0):
                raise ConfigurationError("tabulated coupling 'm' must start at 0 and increase strictly")
            if np.any(np.diff(gs) < 0):
                raise ConfigurationError("tabulated coupling must be non-decreasing")
        else:
            raise ConfigurationError(f"unknown coupling family {self.family!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CouplingSpec":
        return cls(d.get("family", "linear"), _freeze(d.get("params")))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.params}}

    def _power(self) -> tuple[float, float]:
        if self.family == "linear":
            return 1.0, 1.0
        if self.family == "quadratic_half":
            return 2.0, 0.5
        p = dict(self.params)
        return float(p.get("alpha", 1.0)), float(p.get("c", 1.0))

    @property
    def has_closed_form(self) -> bool:
        return self.family != "tabulated"

    @functools.cached_property
    def _table(self):
        """PCHIP interpolant of ``g``, its derivative and its antiderivative (tabulated only)."""
        p = dict(self.params)
        f = PchipInterpolator(np.asarray(p["m"], float), np.asarray(p["g"], float), extrapolate=False)
        return f, f.derivative(), f.antiderivative()

    def g(self, m):
        m = _as_float_array(m)
        if self.family == "zero":
            return np.zeros_like(m)
        if self.family == "tabulated":
            f, df, _ = self._table
            end = f.x[-1]
            over = np.maximum(m - end, 0.0)
            return f(np.minimum(m, end)) + df(end) * over
        alpha, c = self._power()
        return c * m**alpha

    def dg(self, m):
        m = _as_float_array(m)
        if self.family == "zero":
            return np.zeros_like(m)
        if self.family == "tabulated":
            _, df, _ = self._table
            return df(np.minimum(m, df.x[-1]))
        alpha, c = self._power()
        if alpha == 1.0:
            return np.full_like(m, c)
        return c * alpha * m ** (alpha - 1.0)

    def _antiderivative(self, r):
        """``int_0^r g`` for the tabulated family (linear extension past the table)."""
        f, df, F = self._table
        end = f.x[-1]
        over = np.maximum(r - end, 0.0)
        return F(np.minimum(r, end)) + f(end) * over + 0.5 * df(end) * over**2

    # G'(r) = r^-2 int_0^r s g'(s) ds integrates by parts to g(r)/r - Gamma(r)/r^2
    # and G(r) = Gamma(r)/r - g(0), with Gamma the antiderivative of g.
    # Closed forms for g = c m^alpha: G = c r^alpha / (alpha + 1).
    def G(self, r, quadrature: bool = False):
        r = _as_float_array(r)
        if np.any(r < 0):
            raise ValueError("density value must be non-negative")
        if self.family == "zero":
            return np.zeros_like(r)
        if quadrature:
            return _vec(lambda s: integrate.quad(lambda u: _dG_quad(self, u), 0.0, s, limit=200,
                                                 points=_knots(self, s), epsabs=0.0, epsrel=1e-12)[0]
                        if s > 0 else 0.0, r)
        if self.family == "tabulated":
            g0 = float(self.g(0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(r > 0, self._antiderivative(r) / np.where(r > 0, r, 1.0) - g0, 0.0)
        alpha, c = self._power()
        return c * r**alpha / (alpha + 1.0)

    def dG(self, r, quadrature: bool = False):
        r = _as_float_array(r)
        if self.family == "zero":
            return np.zeros_like(r)
        if quadrature:
            return _vec(lambda s: _dG_quad(self, s), r)
        if self.family == "tabulated":
            safe = np.where(r > 0, r, 1.0)
            return np.where(r > 0, self.g(r) / safe - self._antiderivative(r) / safe**2, 0.0)
        alpha, c = self._power()
        if alpha == 1.0:
            return np.full_like(r, c / 2.0)
        return c * alpha * r ** (alpha - 1.0) / (alpha + 1.0)

    def d2G(self, r, quadrature: bool = False):
        """Second derivative via ``r G'' + 2 G' = g'``."""
        r = _as_float_array(r)
        if self.family == "zero":
            return np.zeros_like(r)
        if quadrature or self.family == "tabulated":
            with np.errstate(divide="ignore", invalid="ignore"):
                return (self.dg(r) - 2.0 * self.dG(r, quadrature=quadrature)) / r
        alpha, c = self._power()
        if alpha == 1.0:
            return np.zeros_like(r)
        return c * alpha * (alpha - 1.0) * r ** (alpha - 2.0) / (alpha + 1.0)


def _dG_quad(coupling: CouplingSpec, s: float) -> float:
    if s <= 0.0:
        return 0.0
    inner, _ = integrate.quad(lambda u: u * float(coupling.dg(u)), 0.0, s, limit=200,
                              points=_knots(coupling, s), epsabs=0.0, epsrel=1e-13)
    return inner / (s * s)


def _knots(coupling: CouplingSpec, s: float):
    """Interior breakpoints of a tabulated coupling below ``s`` (quad needs them to converge)."""
    if coupling.family != "tabulated":
        return None
    knots = coupling._table[0].x
    inside = knots[(knots > 0.0) & (knots < s)]
    return inside if inside.size else None


def _vec(fun, r):
    return np.vectorize(fun, otypes=[float])(r)


def enthalpy_G(g: CouplingSpec, r, quadrature: bool = False):
    """Potential energy ``G(r)`` for the coupling ``g`` (``G(0+) = 0``)."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("enthalpy_G: density value must be non-negative")
    out = g.G(r, quadrature=quadrature)
    return out if np.ndim(out) else float(out)


def flux_B(g: CouplingSpec, r, quadrature: bool = False):
    """``B(r) = G'(r) r^2``; requires ``r > 0``."""
    ra = _as_float_array(r)
    if np.any(ra <= 0):
        raise ValueError("flux_B: density value must be positive")
    out = g.dG(ra, quadrature=quadrature) * ra * ra
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------

_POTENTIALS = ("constant", "test1", "test1_sin2", "test2", "test3", "polynomial")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential ``V(x, t)`` with analytic ``V_x`` and ``V_xx``.

    ``polynomial`` takes ``coeffs[k][j]`` for ``V = sum_kj c_kj x^k t^j``.
    ``test1`` is the periodic potential consistent with the Test 1 density and
    value function; ``test1_sin2`` squares the sine in the last denominator, a
    variant that fails the consistency check and is kept for comparison.
    """

    family: str = "constant"
    params: tuple = ()

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if isinstance(self.params, Mapping):
            params = dict(self.params)
            if "coeffs" in params:
                params["coeffs"] = tuple(tuple(float(c) for c in row) for row in params["coeffs"])
            object.__setattr__(self, "params", _freeze(params))
        if fam not in _POTENTIALS:
            raise ConfigurationError(f"unknown potential family {self.family!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PotentialSpec":
        return cls(d.get("family", "constant"), dict(d.get("params") or {}))

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.params:
            out[k] = [list(r) for r in v] if k == "coeffs" else v
        return {"family": self.family, "params": out}

    @property
    def is_constant(self) -> bool:
        if self.family == "constant":
            return True
        if self.family == "polynomial":
            coeffs = dict(self.params).get("coeffs", ())
            return all(c == 0.0 for row in coeffs[1:] for c in row)
        return False

    def _coeffs(self) -> np.ndarray:
        coeffs = dict(self.params).get("coeffs", ((0.0,),))
        width = max(len(r) for r in coeffs)
        return np.array([list(r) + [0.0] * (width - len(r)) for r in coeffs], dtype=float)

    def _poly(self, x, t, deriv):
        c = self._coeffs()
        tpow = np.asarray(t, float)[..., None] ** np.arange(c.shape[1])
        out = np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
        for k in range(deriv, c.shape[0]):
            fac = float(np.prod(np.arange(k - deriv + 1, k + 1))) if deriv else 1.0
            out = out + fac * np.asarray(x, float) ** (k - deriv) * (tpow @ c[k])
        return out

    def V(self, x, t):
        x, t = np.broadcast_arrays(_as_float_array(x), _as_float_array(t))
        fam = self.family
        if fam == "constant":
            return np.full(x.shape, float(dict(self.params).get("value", 0.0)))
        if fam == "polynomial":
            return self._poly(x, t, 0)
        return exact.potential(fam, x, t, 0)

    def V_x(self, x, t):
        x, t = np.broadcast_arrays(_as_float_array(x), _as_float_array(t))
        if self.family == "constant":
            return np.zeros(x.shape)
        if self.family == "polynomial":
            return self._poly(x, t, 1)
        return exact.potential(self.family, x, t, 1)

    def V_xx(self, x, t):
        x, t = np.broadcast_arrays(_as_float_array(x), _as_float_array(t))
        if self.family == "constant":
            return np.zeros(x.shape)
        if self.family == "polynomial":
            return self._poly(x, t, 2)
        return exact.potential(self.family, x, t, 2)

    def concavity_defect(self, domain: "Domain | str", T: float, n_x: int = 401, n_t: int = 21,
                         window: tuple[float, float] = (-10.0, 10.0)) -> float:
        """Largest sampled ``V_xx`` over space and ``[0, T]``, floored at 0.

        Uniqueness and the structural inequalities assume ``V`` concave in
        ``x``; the solver accepts any potential and this only reports how far
        a given one is from that assumption.  The real line is sampled on
        ``window``.
        """
        lo, hi = (0.0, 1.0) if Domain.parse(domain) is Domain.TORUS else window
        X, Tt = np.meshgrid(np.linspace(lo, hi, n_x), np.linspace(0.0, T, n_t))
        return float(max(0.0, np.max(self.V_xx(X, Tt))))


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """One planning-problem instance.

    Boundary densities live in :mod:`mfgp.quantile` and are optional here so
    that a spec can also be driven directly by particle positions.
    """

    domain: Domain = Domain.TORUS
    T: float = 1.0
    N: int = 50
    N_T: int = 100
    hamiltonian: HamiltonianSpec = field(default_factory=HamiltonianSpec)
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    initial_density: Any = None
    terminal_density: Any = None

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain.parse(self.domain))
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 2):
            raise ConfigurationError("N must be ≥ 2")
        if not (isinstance(self.N_T, (int, np.integer)) and self.N_T >= 1):
            raise ConfigurationError("N_T must be ≥ 1")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ConfigurationError("T must be > 0")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "N_T", int(self.N_T))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.N_T

    @property
    def delta(self) -> float:
        return 1.0 / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N_T + 1) * self.dt

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)
