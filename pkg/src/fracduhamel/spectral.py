"""Periodic grids, discrete Fourier transforms and symbol multiplication.

Conventions: nodes ``x_j = j L / N``, wavenumbers ``xi_k = 2 pi k / L`` for
``k`` in ``[-N/2, N/2)``; the forward transform is unnormalised,
``u_hat_k = sum_j u_j exp(-i xi_k x_j)``, and the inverse carries
``1/N**dim``. The periodic torus stands in for ``R^n``: band-limited grid
functions play the role of functions with compactly supported Fourier
transform.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as _expr

__all__ = [
    "SpectralError",
    "SpaceGrid",
    "Field",
    "SpectralField",
    "SymbolSpec",
    "forward",
    "inverse",
    "apply_symbol",
    "apply_operator_function",
]


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceGrid:
    points: tuple[int, ...]
    lengths: tuple[float, ...] = ()

    def __post_init__(self):
        pts = tuple(int(n) for n in np.atleast_1d(self.points))
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths)) or (2 * math.pi,) * len(pts)
        if len(pts) not in (1, 2):
            raise SpectralError(f"only 1-D and 2-D grids are supported, got dim={len(pts)}")
        if len(lengths) != len(pts):
            raise SpectralError("one length per axis is required")
        for n in pts:
            if n < 4 or n % 2:
                raise SpectralError(f"points per axis must be even and >= 4, got {n}")
        for length in lengths:
            if not (length > 0 and math.isfinite(length)):
                raise SpectralError(f"axis length must be positive, got {length}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def axes(self) -> list[np.ndarray]:
        return [length * np.arange(n) / n for n, length in zip(self.points, self.lengths)]

    def coords(self) -> list[np.ndarray]:
        """Node coordinates, one array of ``shape`` per axis."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def wavenumbers_1d(self) -> list[np.ndarray]:
        return [
            2 * np.pi * np.fft.fftfreq(n, d=length / n)
            for n, length in zip(self.points, self.lengths)
        ]

    def wavenumbers(self) -> list[np.ndarray]:
        """``xi`` per axis, broadcast to ``shape`` (FFT ordering)."""
        return list(np.meshgrid(*self.wavenumbers_1d(), indexing="ij"))

    def mode_indices(self) -> list[np.ndarray]:
        """Integer ``k`` per axis, broadcast to ``shape`` (FFT ordering)."""
        ks = [np.fft.fftfreq(n, d=1.0 / n).round().astype(int) for n in self.points]
        return list(np.meshgrid(*ks, indexing="ij"))

    def nyquist_masks(self) -> list[np.ndarray]:
        return [k == -(n // 2) for k, n in zip(self.mode_indices(), self.points)]


@dataclass(frozen=True)
class Field:
    grid: SpaceGrid
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise SpectralError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if self.real:
            scale = max(1.0, float(np.max(np.abs(v.real), initial=0.0)))
            if np.max(np.abs(v.imag), initial=0.0) > 1e-12 * scale:
                raise SpectralError("field flagged real has a non-negligible imaginary part")
            v = v.real.astype(complex)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SpaceGrid, fn: Callable, real: bool = True) -> "Field":
        return cls(grid, np.asarray(fn(*grid.coords())) * np.ones(grid.shape), real)

    @classmethod
    def from_expression(cls, grid: SpaceGrid, text: str, t: float = 0.0) -> "Field":
        tree = _expr.parse_expression(text)
        coords = grid.coords()
        env = {"t": t}
        if grid.dim == 1:
            env["x"] = coords[0]
        env.update({f"x{i + 1}": c for i, c in enumerate(coords)})
        vals = np.broadcast_to(_expr.evaluate(tree, env), grid.shape)
        return cls(grid, vals, real=not np.iscomplexobj(vals))


@dataclass(frozen=True)
class SpectralField:
    grid: SpaceGrid
    coefficients: np.ndarray
    real: bool = False

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise SpectralError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coefficients", c)


def forward(field: Field) -> SpectralField:
    return SpectralField(field.grid, np.fft.fftn(field.values), field.real)


def _mirror(c: np.ndarray) -> np.ndarray:
    """``c[-k]`` for every ``k`` (FFT ordering)."""
    out = c
    for ax in range(c.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def inverse(sf: SpectralField, real: bool | None = None) -> Field:
    """Inverse transform; a real result requires Hermitian coefficients.

    Asymmetry up to ``1e-10`` (relative to the largest coefficient) is
    symmetrised away; anything larger raises :class:`SpectralError`.
    """
    real = sf.real if real is None else real
    c = sf.coefficients
    if real:
        conj_mirror = np.conj(_mirror(c))
        scale = max(float(np.max(np.abs(c), initial=0.0)), 1e-300)
        asym = float(np.max(np.abs(c - conj_mirror), initial=0.0)) / scale
        if asym > 1e-10:
            raise SpectralError(f"coefficients are not conjugate-symmetric (asymmetry {asym:.3e})")
        c = 0.5 * (c + conj_mirror)
        return Field(sf.grid, np.fft.ifftn(c).real, real=True)
    return Field(sf.grid, np.fft.ifftn(c), real=False)


_BUILTIN_KINDS = ("laplacian", "fractional_laplacian", "advection", "constant", "polynomial", "expression")


@dataclass(frozen=True)
class SymbolSpec:
    """The symbol ``A(xi)`` of a pseudo-differential operator.

    ``kind`` is one of ``laplacian`` (``-|xi|^2``), ``fractional_laplacian``
    (``-|xi|^s``), ``advection`` (``i c xi``, 1-D), ``constant`` (``lam``),
    ``polynomial`` (``sum_j coeffs[j] xi^j``, 1-D) or ``expression`` (text
    over ``xi`` in 1-D; ``xi1``, ``xi2`` and ``xi = |xi|`` in 2-D).

    ``zero_mode`` decides what happens where the symbol is singular at
    ``xi = 0``: ``"error"`` (default) or ``"zero"`` (the mode is set to 0).
    """

    kind: str
    s: float = 2.0
    c: float = 1.0
    lam: complex = 0.0
    coeffs: tuple[complex, ...] = ()
    text: str = ""
    zero_mode: str = "error"
    _tree: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in _BUILTIN_KINDS:
            raise SpectralError(f"unknown symbol kind {self.kind!r}; choose from {_BUILTIN_KINDS}")
        if self.zero_mode not in ("error", "zero"):
            raise SpectralError(f"zero_mode must be 'error' or 'zero', got {self.zero_mode!r}")
        if self.kind == "fractional_laplacian" and not self.s > 0:
            raise SpectralError(f"fractional_laplacian needs s > 0, got {self.s}")
        if self.kind == "expression":
            object.__setattr__(self, "_tree", _expr.parse_expression(self.text))
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    @classmethod
    def laplacian(cls) -> "SymbolSpec":
        return cls("laplacian")

    @classmethod
    def fractional_laplacian(cls, s: float) -> "SymbolSpec":
        return cls("fractional_laplacian", s=s)

    @classmethod
    def advection(cls, c: float) -> "SymbolSpec":
        return cls("advection", c=c)

    @classmethod
    def constant(cls, lam: complex) -> "SymbolSpec":
        return cls("constant", lam=lam)

    @classmethod
    def polynomial(cls, coeffs) -> "SymbolSpec":
        return cls("polynomial", coeffs=tuple(coeffs))

    @classmethod
    def expression(cls, text: str, zero_mode: str = "error") -> "SymbolSpec":
        return cls("expression", text=text, zero_mode=zero_mode)

    def describe(self) -> str:
        if self.kind == "fractional_laplacian":
            return f"fractional_laplacian(s={self.s:g})"
        if self.kind == "advection":
            return f"advection(c={self.c:g})"
        if self.kind == "constant":
            return f"constant({self.lam})"
        if self.kind == "polynomial":
            return f"polynomial({list(self.coeffs)})"
        if self.kind == "expression":
            return f"expression({self.text})"
        return self.kind

    def __call__(self, *xi) -> np.ndarray:
        """Evaluate at wavenumber arrays (one per axis)."""
        xi = [np.asarray(v, dtype=float) for v in xi]
        shape = np.broadcast_shapes(*(v.shape for v in xi))
        mag2 = sum(v * v for v in xi)
        if self.kind == "laplacian":
            out = -mag2
        elif self.kind == "fractional_laplacian":
            out = -np.sqrt(mag2) ** self.s
        elif self.kind == "constant":
            out = np.full(shape, complex(self.lam))
        elif self.kind == "advection":
            if len(xi) != 1:
                raise SpectralError("advection symbol is 1-D only")
            out = 1j * self.c * xi[0]
        elif self.kind == "polynomial":
            if len(xi) != 1:
                raise SpectralError("polynomial symbol is 1-D only")
            out = np.zeros(shape, dtype=complex)
            for c in reversed(self.coeffs):
                out = out * xi[0] + c
        else:
            if len(xi) == 1:
                env = {"xi": xi[0], "xi1": xi[0]}
            else:
                env = {"xi": np.sqrt(mag2), "xi1": xi[0], "xi2": xi[1]}
            out = _expr.evaluate(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=complex), shape)

    def values_on(self, grid: SpaceGrid) -> np.ndarray:
        """``A(xi_k)`` on every grid mode.

        At Nyquist modes (whose mirror ``-xi`` is not on the grid) the symbol
        is averaged over both signs so that Hermitian symbols map real fields
        to real fields.
        """
        xi = grid.wavenumbers()
        nyq = grid.nyquist_masks()
        zero = np.all([v == 0 for v in xi], axis=0)
        safe_xi = xi
        if self.zero_mode == "zero":
            safe_xi = [np.where(zero, 1.0, v) for v in xi]
        try:
            base = self(*safe_xi)
            total = np.zeros(grid.shape, dtype=complex)
            count = 0
            for signs in itertools.product((1, -1), repeat=grid.dim):
                flipped = [np.where(n, s * v, v) for s, v, n in zip(signs, safe_xi, nyq)]
                total += self(*flipped) if any(s < 0 for s in signs) else base
                count += 1
            vals = np.where(np.any(nyq, axis=0), total / count, base)
        except _expr.ExprEvalError as exc:
            bad = self._first_failure(grid)
            raise SpectralError(f"symbol {self.describe()} failed at xi={bad}: {exc}") from exc
        if self.zero_mode == "zero":
            vals = np.where(zero, 0.0, vals)
        if not np.all(np.isfinite(vals)):
            idx = np.argwhere(~np.isfinite(vals))[0]
            xi_bad = tuple(float(v[tuple(idx)]) for v in xi)
            raise SpectralError(f"symbol {self.describe()} is not finite at xi={xi_bad}")
        return vals

    def _first_failure(self, grid: SpaceGrid):
        xi = grid.wavenumbers()
        for idx in np.ndindex(grid.shape):
            try:
                self(*(np.asarray(v[idx]) for v in xi))
            except _expr.ExprEvalError:
                return tuple(float(v[idx]) for v in xi)
        return None

    def stability(self, grid: SpaceGrid) -> float:
        """``max_k Re A(xi_k)``; positive values mean growing modes."""
        return float(np.max(self.values_on(grid).real))

    def is_hermitian(self, grid: SpaceGrid, tol: float = 1e-12) -> bool:
        vals = self.values_on(grid)
        return bool(np.allclose(vals, np.conj(_mirror(vals)), rtol=tol, atol=tol))


def apply_symbol(sf: SpectralField, symbol: SymbolSpec) -> SpectralField:
    vals = symbol.values_on(sf.grid)
    real = sf.real and symbol.is_hermitian(sf.grid)
    return SpectralField(sf.grid, vals * sf.coefficients, real)


def apply_operator_function(sf: SpectralField, symbol: SymbolSpec, g: Callable) -> SpectralField:
    """``u_hat_k <- g(A(xi_k)) u_hat_k``; ``g`` takes and returns complex arrays."""
    vals = symbol.values_on(sf.grid)
    try:
        mult = np.asarray(g(vals), dtype=complex)
    except Exception as exc:
        raise SpectralError(f"operator function failed: {exc}") from exc
    bad = ~np.isfinite(mult)
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0])
        xi = tuple(float(v[idx]) for v in sf.grid.wavenumbers())
        raise SpectralError(f"operator function not finite at mode xi={xi}")
    mult = np.broadcast_to(mult, sf.grid.shape)
    real = sf.real and bool(np.allclose(mult, np.conj(_mirror(mult)), rtol=1e-12, atol=1e-300))
    return SpectralField(sf.grid, mult * sf.coefficients, real)


def warn_if_unstable(symbol: SymbolSpec, grid: SpaceGrid) -> str | None:
    sup = symbol.stability(grid)
    if sup > 0:
        msg = f"symbol {symbol.describe()} has sup Re A(xi) = {sup:g} > 0; solution may grow"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return msg
    return None
