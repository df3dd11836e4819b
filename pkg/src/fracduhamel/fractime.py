"""Fractional integrals and derivatives in time.

Two representations are supported throughout:

* catalog profiles (:class:`Monomial`, :class:`Polynomial`), transformed
  exactly by the power rules
  ``J^g t^p = Gamma(p+1)/Gamma(p+g+1) t^(p+g)`` and
  ``D^a t^p = Gamma(p+1)/Gamma(p-a+1) t^(p-a)``;
* sampled series on a uniform grid (:class:`TimeSeries`), transformed by
  product-trapezoidal quadrature (fractional integral) and the L1 scheme
  (Caputo derivative).

Catalog exponents may be negative (down to, but excluding, -1) because
Riemann-Liouville derivatives of constants produce ``t**(-g)`` terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .mittag_leffler import rgamma

__all__ = [
    "FracCalcError",
    "FractionalOrder",
    "TimeGrid",
    "Monomial",
    "Polynomial",
    "TimeSeries",
    "frac_integral",
    "caputo",
    "riemann_liouville",
    "initial_derivatives",
    "ShiftReport",
    "check_shift_relation",
    "fd_weights_at_start",
]

_INT_TOL = 1e-12


class FracCalcError(ValueError):
    """Invalid operand for a fractional-calculus operation."""


def _is_int(x: float) -> bool:
    return abs(x - round(x)) <= _INT_TOL


@dataclass(frozen=True)
class FractionalOrder:
    """An order ``alpha > 0`` together with its bracket ``m``, ``m-1 < alpha <= m``."""

    alpha: float
    m: int = field(init=False)

    def __post_init__(self):
        a = float(self.alpha)
        if not (a > 0 and math.isfinite(a)):
            raise FracCalcError(f"fractional order must be positive, got {self.alpha!r}")
        m = int(round(a)) if _is_int(a) else math.ceil(a)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "m", m)

    @property
    def is_integer(self) -> bool:
        return _is_int(self.alpha)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise FracCalcError(f"dt must be positive, got {self.dt!r}")
        if int(self.n_steps) < 1:
            raise FracCalcError(f"n_steps must be >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_horizon(cls, t_end: float, n_steps: int) -> "TimeGrid":
        return cls(t_end / n_steps, n_steps)

    @property
    def nodes(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.dt * self.n_steps


@dataclass(frozen=True)
class Monomial:
    """``coeff * t**power``."""

    power: float
    coeff: complex = 1.0

    def __post_init__(self):
        if not (self.power > -1):
            raise FracCalcError(f"exponent must exceed -1, got {self.power!r}")


@dataclass(frozen=True)
class Polynomial:
    """A finite sum of monomials with (possibly fractional) exponents."""

    terms: tuple[Monomial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def of(cls, *pairs) -> "Polynomial":
        """``Polynomial.of((2, 1.0), (0.5, -3))`` builds ``t**2 - 3 t**0.5``."""
        return cls(tuple(Monomial(float(p), c) for p, c in pairs))

    def simplify(self, tol: float = 0.0) -> "Polynomial":
        merged: dict[float, complex] = {}
        for term in self.terms:
            key = float(term.power)
            merged[key] = merged.get(key, 0) + term.coeff
        return Polynomial(
            tuple(Monomial(p, c) for p, c in sorted(merged.items()) if abs(c) > tol)
        )

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(self.terms + other.terms).simplify()

    def scale(self, c: complex) -> "Polynomial":
        return Polynomial(tuple(Monomial(t.power, t.coeff * c) for t in self.terms))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for term in self.terms:
                if term.power == 0:
                    out = out + term.coeff
                else:
                    out = out + term.coeff * t ** term.power
        return out

    def sample(self, grid: TimeGrid) -> "TimeSeries":
        return TimeSeries(grid, self(grid.nodes))

    def derivatives_at_zero(self, count: int) -> np.ndarray:
        """``f^(k)(0)`` for ``k < count``; ``inf`` where the derivative blows up."""
        out = np.zeros(count, dtype=complex)
        for term in self.terms:
            if term.coeff == 0:
                continue
            for k in range(count):
                if _is_int(term.power) and round(term.power) == k:
                    out[k] += math.factorial(k) * term.coeff
                elif not _is_int(term.power) and term.power < k:
                    out[k] = complex(np.inf, 0)
        return out

    def vanishing_initial(self, m: int) -> bool:
        """True iff ``f^(k)(0) = 0`` for ``k = 0..m-1``."""
        return all(t.power > m - 1 + _INT_TOL for t in self.terms if t.coeff != 0)


Profile = Union[Monomial, Polynomial]


def _as_poly(f: Profile) -> Polynomial:
    return Polynomial((f,)) if isinstance(f, Monomial) else f


@dataclass(frozen=True)
class TimeSeries:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1 or v.size != self.grid.n_steps + 1:
            raise FracCalcError(
                f"expected {self.grid.n_steps + 1} samples, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


# --------------------------------------------------------------------------
# weights


def product_trapezoid_weights(gamma: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Convolution weights for ``J^gamma`` with piecewise-linear interpolation.

    Returns ``(c, w0)`` such that, for unit step,
    ``J^g f(t_j) = sum_{i=1..j} c[j-i] f_i + w0[j] f_0`` (times ``dt**gamma``).
    """
    k = np.arange(n + 2, dtype=float)
    kp = k ** (gamma + 1)
    scale = rgamma(gamma + 2)
    c = np.empty(n + 1)
    c[0] = 1.0
    # interior node at lag l >= 1
    c[1:] = kp[2 : n + 2] - 2 * kp[1 : n + 1] + kp[0:n]
    j = k[: n + 1]
    with np.errstate(invalid="ignore"):
        w0 = (j - 1) ** (gamma + 1) - (j - gamma - 1) * j**gamma
    w0[0] = 0.0
    return c * scale, w0 * scale


def _causal_convolve(kernel: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.convolve(kernel, x)[: x.size]


def fd_weights_at_start(order: int, accuracy: int = 2) -> np.ndarray:
    """One-sided forward-difference weights for ``f^(order)(0)`` (unit step)."""
    npts = order + accuracy
    offsets = np.arange(npts, dtype=float)
    vander = np.vander(offsets, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def _sampled_derivative(values: np.ndarray, dt: float, order: int) -> np.ndarray:
    out = values
    for _ in range(order):
        out = np.gradient(out, dt, edge_order=2)
    return out


# --------------------------------------------------------------------------
# operations


def frac_integral(f, gamma: float):
    """Riemann-Liouville fractional integral ``J^gamma f``.

    Catalog input is transformed exactly; sampled input uses the
    product-trapezoidal rule (piecewise-linear ``f`` integrated exactly
    against ``(t-s)**(gamma-1)/Gamma(gamma)``). ``gamma == 0`` returns ``f``.
    """
    gamma = float(gamma)
    if not (gamma >= 0 and math.isfinite(gamma)):
        raise FracCalcError(f"integration order must be >= 0, got {gamma!r}")
    if gamma == 0:
        return f
    if isinstance(f, (Monomial, Polynomial)):
        poly = _as_poly(f)
        return Polynomial(
            tuple(
                Monomial(t.power + gamma, t.coeff * math.gamma(t.power + 1) * rgamma(t.power + gamma + 1))
                for t in poly.terms
            )
        )
    if isinstance(f, TimeSeries):
        n = f.grid.n_steps
        c, w0 = product_trapezoid_weights(gamma, n)
        v = f.values
        tail = np.concatenate(([0.0], v[1:]))
        out = _causal_convolve(c, tail) + w0 * v[0]
        return TimeSeries(f.grid, out * f.grid.dt**gamma)
    raise TypeError(f"unsupported operand {type(f).__name__}")


def _check_catalog_caputo(poly: Polynomial, order: FractionalOrder) -> None:
    m = order.m
    for t in poly.terms:
        if t.coeff == 0:
            continue
        p = t.power
        if p <= m - 1 + _INT_TOL and not _is_int(p):
            raise FracCalcError(
                f"t**{p:g} has no {m}-th derivative in the power-rule sense "
                f"(Caputo order {order.alpha:g})"
            )


def caputo(f, order: FractionalOrder | float):
    """Caputo derivative ``D_*^alpha f = J^(m-alpha) f^(m)``.

    Sampled input: the L1 scheme applied to ``f^(m-1)`` (obtained with
    second-order differences when ``m >= 2``); an integer order returns the
    second-order finite-difference derivative.
    """
    if not isinstance(order, FractionalOrder):
        order = FractionalOrder(order)
    a, m = order.alpha, order.m
    if isinstance(f, (Monomial, Polynomial)):
        poly = _as_poly(f)
        _check_catalog_caputo(poly, order)
        terms = []
        for t in poly.terms:
            if _is_int(t.power) and round(t.power) <= m - 1:
                continue
            terms.append(
                Monomial(t.power - a, t.coeff * math.gamma(t.power + 1) * rgamma(t.power - a + 1))
            )
        return Polynomial(tuple(terms))
    if isinstance(f, TimeSeries):
        n, dt = f.grid.n_steps, f.grid.dt
        if n < m + 1:
            raise FracCalcError(f"need at least {m + 1} steps for order {a:g}, got {n}")
        if order.is_integer:
            return TimeSeries(f.grid, _sampled_derivative(f.values, dt, m))
        g = _sampled_derivative(f.values, dt, m - 1) if m > 1 else f.values
        frac = a - (m - 1)
        k = np.arange(n, dtype=float)
        b = (k + 1) ** (1 - frac) - k ** (1 - frac)
        diffs = np.diff(g)
        out = np.zeros(n + 1, dtype=complex)
        out[1:] = _causal_convolve(b, diffs)
        return TimeSeries(f.grid, out * dt**-frac * rgamma(2 - frac))
    raise TypeError(f"unsupported operand {type(f).__name__}")


def initial_derivatives(f, count: int) -> np.ndarray:
    """``f^(k)(0)``, ``k < count``: exact for catalog, second-order one-sided for samples."""
    if isinstance(f, (Monomial, Polynomial)):
        return _as_poly(f).derivatives_at_zero(count)
    out = np.zeros(count, dtype=complex)
    for k in range(count):
        w = fd_weights_at_start(k, 2)
        if f.values.size < w.size:
            raise FracCalcError(f"need {w.size} samples to estimate f^({k})(0)")
        out[k] = np.dot(w, f.values[: w.size]) / f.grid.dt**k
    return out


def riemann_liouville(f, order: FractionalOrder | float):
    """Riemann-Liouville derivative via the Caputo bridge.

    ``D_+^a f = D_*^a f + sum_{k<m} f^(k)(0) t^(k-a) / Gamma(k-a+1)``.
    For sampled input, the t=0 node is NaN whenever a correction term with
    a negative exponent has a nonzero coefficient.
    """
    if not isinstance(order, FractionalOrder):
        order = FractionalOrder(order)
    a, m = order.alpha, order.m
    if isinstance(f, (Monomial, Polynomial)):
        poly = _as_poly(f)
        terms = []
        for t in poly.terms:
            c = t.coeff * math.gamma(t.power + 1) * rgamma(t.power - a + 1)
            if c != 0:
                terms.append(Monomial(t.power - a, c))
        return Polynomial(tuple(terms))
    if isinstance(f, TimeSeries):
        base = caputo(f, order)
        d0 = initial_derivatives(f, m)
        t = f.grid.nodes
        out = base.values.copy()
        singular = False
        for k in range(m):
            c = d0[k] * rgamma(k - a + 1)
            if c == 0:
                continue
            p = k - a
            out[1:] += c * t[1:] ** p
            if p < 0:
                singular = True
            elif p == 0:
                out[0] += c
        if singular:
            out[0] = complex(np.nan, np.nan)
        return TimeSeries(f.grid, out)
    raise TypeError(f"unsupported operand {type(f).__name__}")


@dataclass(frozen=True)
class ShiftReport:
    form: str  # "caputo" or "riemann_liouville"
    residual: float
    lhs: Polynomial
    rhs: Polynomial


def check_shift_relation(
    f: Profile,
    order: FractionalOrder | float,
    beta: float,
    t_end: float = 2.0,
    n_points: int = 201,
) -> ShiftReport:
    """Compare ``J^(beta+alpha) f`` with ``J^(beta+m) D^(m-alpha) f``.

    The Caputo form is used when ``f^(k)(0) = 0`` for ``k < m``; otherwise the
    Riemann-Liouville form, which holds for general ``f``.
    """
    if not isinstance(order, FractionalOrder):
        order = FractionalOrder(order)
    if beta < 0:
        raise FracCalcError(f"beta must be >= 0, got {beta!r}")
    poly = _as_poly(f)
    a, m = order.alpha, order.m
    lhs = frac_integral(poly, beta + a)
    gap = m - a
    vanishing = poly.vanishing_initial(m)
    if gap <= _INT_TOL:
        inner = poly
    elif vanishing:
        inner = caputo(poly, FractionalOrder(gap))
    else:
        inner = riemann_liouville(poly, FractionalOrder(gap))
    rhs = frac_integral(inner, beta + m)
    t = np.linspace(0.0, t_end, n_points)[1:]
    residual = float(np.max(np.abs(lhs(t) - rhs(t))))
    return ShiftReport("caputo" if vanishing else "riemann_liouville", residual, lhs, rhs)
