"""Cauchy problems ``D_*^alpha u = A(D_x) u + f``, ``d^k u/dt^k(0) = phi_k``.

Everything is computed mode by mode on the periodic grid. For a mode with
symbol value ``lam``:

* the homogeneous part is mesh-free in time,
  ``u_hat(t) = sum_k t^(k-1) E_{alpha,k}(lam t^alpha) phi_hat_{k-1}``;
* the Duhamel part integrates the stage solutions
  ``V(t, tau) = (t-tau)^(m-1) E_{alpha,m}(lam (t-tau)^alpha) h(tau)`` over
  ``tau``, where the stage data ``h`` is the Caputo derivative of order
  ``m - alpha`` of the source (valid when its first ``m`` time derivatives
  vanish at 0) or the Riemann-Liouville one (valid in general);
* two independent oracles evaluate the same inhomogeneous part: the
  truncated Neumann series ``sum_n lam^n J^(alpha n + alpha) f`` and the
  variation-of-constants integral with kernel
  ``s^(alpha-1) E_{alpha,alpha}(lam s^alpha)``.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fractime import (
    FractionalOrder,
    Polynomial,
    TimeGrid,
    TimeSeries,
    caputo,
    fd_weights_at_start,
    frac_integral,
    riemann_liouville,
)
from .mittag_leffler import ml_array, rgamma
from .spectral import Field, SpaceGrid, SymbolSpec

__all__ = [
    "SolverError",
    "QuadratureError",
    "SourceTerm",
    "CauchyProblem",
    "Solution",
    "ResidualReport",
    "homogeneous_solution",
    "stage_solution",
    "duhamel_solution",
    "neumann_series_solution",
    "voc_oracle",
    "full_solve",
    "classic_duhamel_check",
    "residual_norm",
]

log = logging.getLogger(__name__)

FORCINGS = ("caputo", "riemann_liouville")
METHODS = ("duhamel", "neumann", "voc")
_ZERO_TOL = 1e-14


class SolverError(RuntimeError):
    pass


class QuadratureError(SolverError):
    pass


# --------------------------------------------------------------------------
# problem data


@dataclass(frozen=True)
class SourceTerm:
    """``f(t, x)`` as a sum of ``profile(t) * shape(x)`` or as a sampled cube.

    ``samples`` has shape ``(n_steps + 1, *grid.shape)`` on ``sample_grid``.
    """

    terms: tuple = ()
    samples: Optional[np.ndarray] = None
    sample_grid: Optional[TimeGrid] = None
    space_grid: Optional[SpaceGrid] = None

    def __post_init__(self):
        terms = tuple((p if isinstance(p, Polynomial) else Polynomial((p,)), s) for p, s in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.samples is None:
            if not terms:
                raise SolverError("a source needs catalog terms or samples")
            grids = {s.grid for _, s in terms}
            if len(grids) != 1:
                raise SolverError("all source shapes must share one grid")
            object.__setattr__(self, "space_grid", grids.pop())
        else:
            if terms:
                raise SolverError("give either catalog terms or samples, not both")
            if self.sample_grid is None or self.space_grid is None:
                raise SolverError("sampled sources need sample_grid and space_grid")
            arr = np.asarray(self.samples, dtype=complex)
            expected = (self.sample_grid.n_steps + 1, *self.space_grid.shape)
            if arr.shape != expected:
                raise SolverError(f"sampled source has shape {arr.shape}, expected {expected}")
            object.__setattr__(self, "samples", arr)

    @classmethod
    def catalog(cls, *terms) -> "SourceTerm":
        return cls(terms=tuple(terms))

    @property
    def is_catalog(self) -> bool:
        return self.samples is None

    @property
    def grid(self) -> SpaceGrid:
        return self.space_grid

    @property
    def is_real(self) -> bool:
        if self.is_catalog:
            return all(
                s.real and all(np.imag(t.coeff) == 0 for t in p.terms) for p, s in self.terms
            )
        return bool(np.all(self.samples.imag == 0))

    def vanishing_initial(self, m: int) -> bool:
        """Whether ``d^k f/dt^k(0, .) = 0`` for ``k < m`` (exact for catalog terms)."""
        if self.is_catalog:
            return all(p.vanishing_initial(m) for p, s in self.terms if np.any(s.values != 0))
        scale = max(float(np.max(np.abs(self.samples))), 1e-300)
        dt = self.sample_grid.dt
        for k in range(m):
            w = fd_weights_at_start(k, 2)
            if self.samples.shape[0] < w.size:
                return False
            dk = np.tensordot(w, self.samples[: w.size], axes=1) / dt**k
            if np.max(np.abs(dk)) > 1e-8 * scale * max(1.0, dt**-k):
                return False
        return True

    def modal_catalog(self) -> tuple[np.ndarray, list[Polynomial]]:
        """Active mode indices (flat) and the time profile of each active mode."""
        coeffs = [np.fft.fftn(s.values).ravel() for _, s in self.terms]
        scale = max((float(np.max(np.abs(c))) for c in coeffs), default=0.0)
        active = np.zeros(coeffs[0].shape, dtype=bool)
        for c in coeffs:
            active |= np.abs(c) > _ZERO_TOL * max(scale, 1e-300)
        idx = np.flatnonzero(active)
        profiles = []
        for k in idx:
            merged = Polynomial(())
            for (poly, _), c in zip(self.terms, coeffs):
                if c[k] != 0:
                    merged = merged + poly.scale(c[k])
            profiles.append(merged)
        return idx, profiles

    def modal_samples(self) -> np.ndarray:
        """Spectral samples, shape ``(n_t, n_modes_flat)``."""
        axes = tuple(range(1, self.samples.ndim))
        spec = np.fft.fftn(self.samples, axes=axes)
        return spec.reshape(spec.shape[0], -1)


@dataclass(frozen=True)
class CauchyProblem:
    order: FractionalOrder
    symbol: SymbolSpec
    initial: tuple
    horizon: TimeGrid
    source: Optional[SourceTerm] = None

    def __post_init__(self):
        order = self.order if isinstance(self.order, FractionalOrder) else FractionalOrder(self.order)
        object.__setattr__(self, "order", order)
        initial = tuple(self.initial)
        object.__setattr__(self, "initial", initial)
        if len(initial) != order.m:
            raise SolverError(
                f"expected {order.m} initial fields (m={order.m}) for alpha={order.alpha:g}, "
                f"got {len(initial)}"
            )
        grid = initial[0].grid
        if any(f.grid != grid for f in initial):
            raise SolverError("initial fields live on different grids")
        if self.source is not None:
            if self.source.grid != grid:
                raise SolverError("source and initial data live on different grids")
            if not self.source.is_catalog and self.source.sample_grid != self.horizon:
                raise SolverError("sampled source must use the problem's time grid")

    @property
    def grid(self) -> SpaceGrid:
        return self.initial[0].grid

    @property
    def alpha(self) -> float:
        return self.order.alpha

    @property
    def m(self) -> int:
        return self.order.m

    def symbol_values(self) -> np.ndarray:
        return self.symbol.values_on(self.grid).ravel()

    def without_source(self) -> "CauchyProblem":
        return CauchyProblem(self.order, self.symbol, self.initial, self.horizon, None)

    def homogeneous_data(self) -> "CauchyProblem":
        zeros = tuple(Field(self.grid, np.zeros(self.grid.shape), True) for _ in self.initial)
        return CauchyProblem(self.order, self.symbol, zeros, self.horizon, self.source)

    def is_real(self) -> bool:
        if not self.symbol.is_hermitian(self.grid):
            return False
        if not all(f.real for f in self.initial):
            return False
        return self.source is None or self.source.is_real


@dataclass(frozen=True)
class Solution:
    """Spectral history on every time node plus method metadata.

    ``spectral`` has shape ``(n_steps + 1, *grid.shape)``.
    """

    grid: SpaceGrid
    times: TimeGrid
    spectral: np.ndarray
    metadata: dict = field(default_factory=dict)
    real: bool = False

    def __post_init__(self):
        self.spectral.setflags(write=False)

    @property
    def t(self) -> np.ndarray:
        return self.times.nodes

    def values(self) -> np.ndarray:
        """Physical-space history ``(n_t, *grid.shape)``."""
        axes = tuple(range(1, self.spectral.ndim))
        spec = self.spectral
        if self.real:
            spec = 0.5 * (spec + np.conj(_mirror_history(spec)))
            return np.fft.ifftn(spec, axes=axes).real
        return np.fft.ifftn(spec, axes=axes)

    def field_at(self, j: int) -> Field:
        vals = np.fft.ifftn(self.spectral[j])
        if self.real:
            vals = vals.real
        return Field(self.grid, vals, self.real)

    def output_indices(self, every: int = 1) -> np.ndarray:
        idx = np.arange(0, self.times.n_steps + 1, max(1, int(every)))
        if idx[-1] != self.times.n_steps:
            idx = np.append(idx, self.times.n_steps)
        return idx

    def __add__(self, other: "Solution") -> "Solution":
        meta = dict(self.metadata)
        meta.update({k: v for k, v in other.metadata.items() if k not in meta})
        return Solution(self.grid, self.times, self.spectral + other.spectral, meta, self.real and other.real)


def _mirror_history(spec: np.ndarray) -> np.ndarray:
    out = spec
    for ax in range(1, spec.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


# --------------------------------------------------------------------------
# kernels and quadrature


def _powers(s: np.ndarray, p: float) -> np.ndarray:
    if p == 0:
        return np.ones_like(s)
    return s**p


def _ml_kernel(alpha: float, beta: float, lam: np.ndarray, s: np.ndarray, power: float) -> np.ndarray:
    """``s^power E_{alpha,beta}(lam s^alpha)`` on a (mode, lag) grid."""
    z = lam[:, None] * (s[None, :] ** alpha)
    return ml_array(alpha, beta, z) * _powers(s, power)[None, :]


def _kernel_moments(alpha: float, beta: float, lam: np.ndarray, s: np.ndarray):
    """Antiderivatives of ``K(s) = s^(beta-1) E_{alpha,beta}(lam s^alpha)`` and of ``s K(s)``.

    Termwise: ``int_0^s K = s^beta E_{alpha,beta+1}`` and
    ``int_0^s sigma K = s^(beta+1) (E_{alpha,beta+1} - E_{alpha,beta+2})``.
    """
    e1 = _ml_kernel(alpha, beta + 1, lam, s, 0.0)
    e2 = _ml_kernel(alpha, beta + 2, lam, s, 0.0)
    m0 = e1 * (s**beta)[None, :]
    m1 = (e1 - e2) * (s ** (beta + 1))[None, :]
    return m0, m1


def _product_conv(m0: np.ndarray, m1: np.ndarray, f: np.ndarray, ds: float) -> np.ndarray:
    """``int_0^{t_n} K(t_n - s) f(s) ds`` for piecewise-linear ``f``, given the moments of ``K``.

    Each lag cell is integrated exactly, so a kernel that is singular or
    merely non-smooth at lag 0 costs no accuracy.
    """
    s = ds * np.arange(m0.size)
    dm0 = np.diff(m0)
    dm1 = np.diff(m1)
    left = (dm1 - s[:-1] * dm0) / ds
    right = (s[1:] * dm0 - dm1) / ds
    n = f.size
    out = np.zeros(n, dtype=complex)
    tail = f.copy()
    tail[0] = 0
    out[1:] = np.convolve(left, f)[: n - 1] + np.convolve(right, tail)[1:n]
    return out


def _singular_weights(beta: float, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Product-integration weights for ``tau^beta`` (``-1 < beta < 0``).

    Cell ``[tau_j, tau_{j+1}]`` contributes ``a[j] g_j + b[j+1] g_{j+1}`` to
    ``int tau^beta g(tau) dtau`` for piecewise-linear ``g``.
    """
    dt = grid.dt
    tau = dt * np.arange(grid.n_steps + 2)
    i0 = np.diff(tau ** (beta + 1)) / (beta + 1)
    i1 = np.diff(tau ** (beta + 2)) / (beta + 2)
    a = (tau[1:] * i0 - i1) / dt
    b = np.zeros(grid.n_steps + 2)
    b[1:] = (i1 - tau[:-1] * i0) / dt
    return a[: grid.n_steps + 1], b[: grid.n_steps + 1]


def _singular_conv(kernel: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = kernel.size
    out = np.convolve(a, kernel)[:n] - a * kernel[0] + np.convolve(b, kernel)[:n]
    out[0] = 0.0
    return out


@dataclass
class _StageData:
    """Stage data per active mode: regular samples plus singular monomials."""

    modes: np.ndarray
    regular: np.ndarray  # (n_active, n_t)
    singular: list  # [(power, coeffs (n_active,))]


def _stage_data(p: CauchyProblem, forcing: str) -> _StageData:
    alpha, m = p.alpha, p.m
    gap = m - alpha
    grid = p.horizon
    t = grid.nodes
    src = p.source
    if src.is_catalog:
        modes, profiles = src.modal_catalog()
        regular = np.zeros((modes.size, t.size), dtype=complex)
        singular: dict[float, np.ndarray] = {}
        for i, poly in enumerate(profiles):
            if gap <= 1e-12:
                h = poly
            elif forcing == "caputo":
                h = caputo(poly, FractionalOrder(gap))
            else:
                h = riemann_liouville(poly, FractionalOrder(gap))
            for term in h.terms:
                if term.power < 0:
                    singular.setdefault(term.power, np.zeros(modes.size, dtype=complex))
                    singular[term.power][i] += term.coeff
                else:
                    regular[i] += Polynomial((term,))(t)
        return _StageData(modes, regular, sorted(singular.items()))

    spec = src.modal_samples()
    scale = max(float(np.max(np.abs(spec))), 1e-300)
    modes = np.flatnonzero(np.max(np.abs(spec), axis=0) > _ZERO_TOL * scale)
    regular = np.zeros((modes.size, t.size), dtype=complex)
    sing = np.zeros(modes.size, dtype=complex)
    for i, k in enumerate(modes):
        series = TimeSeries(grid, spec[:, k])
        regular[i] = series.values if gap <= 1e-12 else caputo(series, FractionalOrder(gap)).values
        if forcing == "riemann_liouville" and gap > 1e-12:
            sing[i] = spec[0, k] * rgamma(1 - gap)
    singular = [(-gap, sing)] if np.any(sing != 0) else []
    return _StageData(modes, regular, singular)


def _check_forcing(p: CauchyProblem, forcing: str) -> None:
    if forcing not in FORCINGS:
        raise SolverError(f"forcing must be one of {FORCINGS}, got {forcing!r}")
    # integer orders feed the source itself, so any source is admissible
    needs_check = forcing == "caputo" and p.source is not None and not p.order.is_integer
    if needs_check and not p.source.vanishing_initial(p.m):
        raise SolverError(
            "Caputo stage data requires d^k f/dt^k(0) = 0 for k < m; "
            "use forcing='riemann_liouville' for general sources"
        )


def _empty_history(p: CauchyProblem) -> np.ndarray:
    return np.zeros((p.horizon.n_steps + 1, p.grid.size), dtype=complex)


def _finish(p: CauchyProblem, flat: np.ndarray, meta: dict) -> Solution:
    spec = flat.reshape((flat.shape[0], *p.grid.shape))
    return Solution(p.grid, p.horizon, spec, meta, p.is_real())


# --------------------------------------------------------------------------
# public operations


def _homogeneous_modes(p: CauchyProblem, t: np.ndarray) -> np.ndarray:
    """``(n_t, n_modes)`` homogeneous solution at times ``t``."""
    alpha = p.alpha
    lam = p.symbol_values()
    out = np.zeros((t.size, lam.size), dtype=complex)
    for k, phi in enumerate(p.initial, start=1):
        coef = np.fft.fftn(phi.values).ravel()
        scale = float(np.max(np.abs(coef), initial=0.0))
        active = np.flatnonzero(np.abs(coef) > _ZERO_TOL * max(scale, 1e-300))
        if active.size == 0:
            continue
        kern = _ml_kernel(alpha, float(k), lam[active], t, float(k - 1))
        out[:, active] += (kern * coef[active][:, None]).T
    return out


def homogeneous_solution(p: CauchyProblem, t: float) -> Field:
    """Homogeneous solution at a single time ``t >= 0`` (mesh-free)."""
    if t < 0:
        raise SolverError(f"t must be >= 0, got {t}")
    vals = _homogeneous_modes(p, np.array([float(t)]))[0].reshape(p.grid.shape)
    real = p.is_real()
    phys = np.fft.ifftn(vals)
    return Field(p.grid, phys.real if real else phys, real)


def homogeneous_history(p: CauchyProblem) -> Solution:
    flat = _homogeneous_modes(p, p.horizon.nodes)
    # t = 0 reproduces phi_0 exactly
    flat[0] = np.fft.fftn(p.initial[0].values).ravel()
    return _finish(p, flat, {"part": "homogeneous"})


def stage_solution(p: CauchyProblem, tau: float, t: float, forcing: str = "caputo") -> Field:
    """The stage field ``V(t, tau)`` whose tau-integral is the Duhamel part."""
    if not (t >= tau >= 0):
        raise SolverError(f"need t >= tau >= 0, got t={t}, tau={tau}")
    _check_forcing(p, forcing)
    if p.source is None:
        return Field(p.grid, np.zeros(p.grid.shape), True)
    alpha, m = p.alpha, p.m
    gap = m - alpha
    lam = p.symbol_values()
    data = np.zeros(p.grid.size, dtype=complex)
    if p.source.is_catalog:
        modes, profiles = p.source.modal_catalog()
        for k, poly in zip(modes, profiles):
            if gap <= 1e-12:
                h = poly
            elif forcing == "caputo":
                h = caputo(poly, FractionalOrder(gap))
            else:
                h = riemann_liouville(poly, FractionalOrder(gap))
            if tau == 0 and any(term.power < 0 and term.coeff != 0 for term in h.terms):
                raise SolverError("Riemann-Liouville stage data is singular at tau = 0")
            data[k] = h(np.array([tau]))[0]
    else:
        j = tau / p.horizon.dt
        if abs(j - round(j)) > 1e-9:
            raise SolverError("sampled sources need tau on the time grid")
        sd = _stage_data(p, forcing)
        j = int(round(j))
        for i, k in enumerate(sd.modes):
            data[k] = sd.regular[i, j]
        for power, coeffs in sd.singular:
            if j == 0:
                raise SolverError("Riemann-Liouville stage data is singular at tau = 0")
            data[sd.modes] += coeffs * tau**power
    s = np.array([t - tau])
    active = np.flatnonzero(data != 0)
    vals = np.zeros(p.grid.size, dtype=complex)
    if active.size:
        vals[active] = _ml_kernel(alpha, float(m), lam[active], s, float(m - 1))[:, 0] * data[active]
    phys = np.fft.ifftn(vals.reshape(p.grid.shape))
    real = p.is_real()
    return Field(p.grid, phys.real if real else phys, real)


def duhamel_solution(p: CauchyProblem, forcing: str = "caputo") -> Solution:
    """Inhomogeneous part with zero initial data, by integrating stage solutions.

    The stage data is interpolated linearly and integrated exactly against
    the kernel ``s^(m-1) E_{alpha,m}(lam s^alpha)``, whose ``s^alpha`` term
    is not smooth at lag 0. The ``tau^(alpha-m)`` singularity of
    Riemann-Liouville stage data gets its own product weights.
    """
    _check_forcing(p, forcing)
    flat = _empty_history(p)
    tag = "duhamel_caputo" if forcing == "caputo" else "duhamel_rl"
    meta = {
        "method": tag,
        "forcing": forcing,
        "quadrature": "product-linear" + ("+product(tau^(alpha-m))" if forcing == "riemann_liouville" else ""),
        "dt": p.horizon.dt,
    }
    if p.source is None:
        return _finish(p, flat, meta)
    alpha, m = p.alpha, p.m
    dt = p.horizon.dt
    sd = _stage_data(p, forcing)
    if sd.modes.size == 0:
        return _finish(p, flat, meta)
    lam = p.symbol_values()[sd.modes]
    m0, m1 = _kernel_moments(alpha, float(m), lam, p.horizon.nodes)
    weights = [(_singular_weights(power, p.horizon), coeffs) for power, coeffs in sd.singular]
    kernel = _ml_kernel(alpha, float(m), lam, p.horizon.nodes, float(m - 1)) if weights else None
    for i, k in enumerate(sd.modes):
        v = _product_conv(m0[i], m1[i], sd.regular[i], dt)
        for (a, b), coeffs in weights:
            if coeffs[i] != 0:
                v = v + coeffs[i] * _singular_conv(kernel[i], a, b)
        flat[:, k] = v
    return _finish(p, flat, meta)


def neumann_series_solution(
    p: CauchyProblem, n_terms: int = 30, tol: float = 1e-10
) -> Solution:
    """Inhomogeneous part from ``sum_{n<n_terms} A^n J^(alpha n + alpha) f``.

    Catalog sources are integrated exactly by the power rule; sampled ones by
    product-trapezoidal quadrature. The sup-norm of the first omitted term is
    reported as ``truncation_estimate``; when it exceeds ``tol`` (relative to the
    solution) a divergence warning is recorded.
    """
    if n_terms < 1:
        raise SolverError(f"n_terms must be >= 1, got {n_terms}")
    alpha = p.alpha
    t = p.horizon.nodes
    flat = _empty_history(p)
    meta = {"method": "neumann", "n_terms": int(n_terms), "warnings": []}
    if p.source is None:
        meta["truncation_estimate"] = 0.0
        return _finish(p, flat, meta)
    lam_all = p.symbol_values()
    last = np.zeros(p.grid.size)
    if p.source.is_catalog:
        modes, profiles = p.source.modal_catalog()
        for k, poly in zip(modes, profiles):
            lam = lam_all[k]
            total = np.zeros(t.size, dtype=complex)
            for n in range(n_terms):
                total += frac_integral(poly, alpha * n + alpha)(t) * lam**n
            flat[:, k] = total
            last[k] = float(np.max(np.abs(frac_integral(poly, alpha * n_terms + alpha)(t) * lam**n_terms)))
    else:
        spec = p.source.modal_samples()
        for k in np.flatnonzero(np.max(np.abs(spec), axis=0) > 0):
            series = TimeSeries(p.horizon, spec[:, k])
            lam = lam_all[k]
            total = np.zeros(t.size, dtype=complex)
            for n in range(n_terms):
                total += frac_integral(series, alpha * n + alpha).values * lam**n
            flat[:, k] = total
            nxt = frac_integral(series, alpha * n_terms + alpha).values * lam**n_terms
            last[k] = float(np.max(np.abs(nxt)))
    est = float(np.max(last))
    meta["truncation_estimate"] = est
    size = float(np.max(np.abs(flat), initial=0.0))
    if est > tol * max(size, 1e-300):
        msg = f"Neumann series truncation estimate {est:.3e} exceeds tolerance; series may not have converged"
        meta["warnings"].append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return _finish(p, flat, meta)


def voc_oracle(p: CauchyProblem, tol: Optional[float] = None) -> Solution:
    """Inhomogeneous part from the variation-of-constants integral.

    ``v(t) = int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(lam (t-s)^alpha) f(s) ds``
    by product integration: the source is interpolated linearly and each
    cell is integrated exactly against the (weakly singular) kernel through
    its antiderivatives ``s^alpha E_{alpha,alpha+1}`` and
    ``s^(alpha+1) (E_{alpha,alpha+1} - E_{alpha,alpha+2})``.

    The difference against the same rule on every other node is reported as
    ``error_estimate``; exceeding ``tol`` raises :class:`QuadratureError`.
    """
    alpha = p.alpha
    t = p.horizon.nodes
    dt = p.horizon.dt
    flat = _empty_history(p)
    meta = {"method": "voc_oracle", "quadrature": "product-linear", "dt": dt}
    if p.source is None:
        meta["error_estimate"] = 0.0
        return _finish(p, flat, meta)
    lam_all = p.symbol_values()
    if p.source.is_catalog:
        modes, profiles = p.source.modal_catalog()
        fvals = np.array([poly(t) for poly in profiles]).reshape(len(profiles), t.size)
    else:
        spec = p.source.modal_samples()
        modes = np.flatnonzero(np.max(np.abs(spec), axis=0) > 0)
        fvals = spec[:, modes].T
    if not np.all(np.isfinite(fvals)):
        raise QuadratureError("source is not finite on the time grid")
    if modes.size == 0:
        meta["error_estimate"] = 0.0
        return _finish(p, flat, meta)
    m0, m1 = _kernel_moments(alpha, alpha, lam_all[modes], t)
    est = 0.0
    coarse_ok = p.horizon.n_steps >= 4 and p.horizon.n_steps % 2 == 0
    for i, k in enumerate(modes):
        v = _product_conv(m0[i], m1[i], fvals[i], dt)
        flat[:, k] = v
        if coarse_ok:
            vc = _product_conv(m0[i, ::2], m1[i, ::2], fvals[i, ::2], 2 * dt)
            scale = max(float(np.max(np.abs(v))), 1e-300)
            est = max(est, float(np.max(np.abs(vc - v[::2]))) / scale)
    meta["error_estimate"] = est if coarse_ok else None
    if tol is not None and coarse_ok and est > tol:
        raise QuadratureError(
            f"variation-of-constants quadrature error estimate {est:.3e} exceeds {tol:.3e}; refine the time step"
        )
    return _finish(p, flat, meta)


def full_solve(p: CauchyProblem, method: str = "duhamel", forcing: Optional[str] = None, **kwargs) -> Solution:
    """Homogeneous part plus the selected inhomogeneous part.

    The forcing variant defaults to Caputo stage data when the source's first
    ``m`` time derivatives vanish at 0, and Riemann-Liouville otherwise.
    """
    if method not in METHODS:
        raise SolverError(f"method must be one of {METHODS}, got {method!r}")
    started = time.perf_counter()
    meta: dict = {"alpha": p.alpha, "m": p.m, "symbol": p.symbol.describe(), "warnings": []}
    sup = p.symbol.stability(p.grid)
    meta["stability_sup_re"] = sup
    if sup > 0:
        msg = f"symbol {p.symbol.describe()} has sup Re A(xi) = {sup:g} > 0; solution may grow"
        meta["warnings"].append(msg)
        log.warning(msg)
    hom = homogeneous_history(p)
    if p.source is None:
        meta.update({"method": "homogeneous", "forcing": None, "source_hypothesis": "no source"})
        sol = Solution(p.grid, p.horizon, hom.spectral, meta, hom.real)
    else:
        vanishing = p.source.vanishing_initial(p.m)
        if forcing is None:
            forcing = "caputo" if vanishing else "riemann_liouville"
        meta["source_hypothesis"] = (
            "source time-derivatives vanish at t=0 up to order m-1" if vanishing else "general source"
        )
        if method == "duhamel":
            part = duhamel_solution(p, forcing)
        elif method == "neumann":
            part = neumann_series_solution(p, **kwargs)
            forcing = None
        else:
            part = voc_oracle(p, **kwargs)
            forcing = None
        for key, val in part.metadata.items():
            if key == "warnings":
                meta["warnings"].extend(val)
            else:
                meta[key] = val
        meta["forcing"] = forcing
        sol = Solution(p.grid, p.horizon, hom.spectral + part.spectral, meta, hom.real and part.real)
    meta["wall_time_s"] = time.perf_counter() - started
    return sol


# --------------------------------------------------------------------------
# diagnostics


def _phi12(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(e^x - 1)/x`` and ``(e^x - 1 - x)/x^2``, by series near 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 0.5
    xs = np.where(small, x, 0)
    phi1 = np.zeros_like(x)
    phi2 = np.zeros_like(x)
    power = np.ones_like(x)
    for n in range(20):
        phi1 += power / math.factorial(n + 1)
        phi2 += power / math.factorial(n + 2)
        power = power * xs
    xl = np.where(small, 1, x)
    with np.errstate(over="ignore", invalid="ignore"):
        big1 = np.expm1(xl) / xl
        big2 = (np.expm1(xl) - xl) / xl**2
    return np.where(small, phi1, big1), np.where(small, phi2, big2)


def _classical_roots(lam: complex, m: int) -> np.ndarray:
    rho = complex(lam) ** (1.0 / m)
    return rho * np.exp(2j * np.pi * np.arange(m) / m)


def _classical_basis(lam: complex, m: int, s: np.ndarray) -> np.ndarray:
    """``y_k(s)``, ``k < m``: solutions of ``y^(m) = lam y`` with ``y_k^(i)(0) = delta_ik``."""
    out = np.zeros((m, s.size), dtype=complex)
    if abs(lam) < 1e-12:
        for k in range(m):
            out[k] = s**k / math.factorial(k)
        return out
    roots = _classical_roots(lam, m)
    for k in range(m):
        out[k] = np.sum(roots[:, None] ** (-k) * np.exp(roots[:, None] * s[None, :]), axis=0) / m
    return out


def _classical_moments(lam: complex, m: int, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Antiderivatives of ``y_{m-1}`` and ``s y_{m-1}`` from 0."""
    if abs(lam) < 1e-12:
        return s**m / math.factorial(m), s ** (m + 1) * m / math.factorial(m + 1)
    roots = _classical_roots(lam, m)
    m0 = np.zeros(s.size, dtype=complex)
    m1 = np.zeros(s.size, dtype=complex)
    for r in roots:
        phi1, phi2 = _phi12(r * s)
        m0 += r ** (1 - m) * s * phi1
        m1 += r ** (1 - m) * s**2 * (phi1 - phi2)
    return m0 / m, m1 / m


@dataclass(frozen=True)
class ClassicCheck:
    difference: float
    reference_norm: float


def classic_duhamel_check(p: CauchyProblem) -> ClassicCheck:
    """Compare :func:`full_solve` with the classical integer-order construction.

    Only for integer ``alpha = m``: the stage problems then carry ``f(tau)``
    itself and are solved with elementary exponentials instead of
    Mittag-Leffler kernels, with the same product rule on the same grid.
    """
    if not p.order.is_integer:
        raise SolverError("classic Duhamel check needs an integer order")
    m = p.m
    sol = full_solve(p, "duhamel")
    t = p.horizon.nodes
    dt = p.horizon.dt
    lam_all = p.symbol_values()
    ref = np.zeros_like(sol.spectral.reshape(t.size, -1))
    phis = [np.fft.fftn(phi.values).ravel() for phi in p.initial]
    src_modes: dict[int, np.ndarray] = {}
    if p.source is not None:
        if p.source.is_catalog:
            modes, profiles = p.source.modal_catalog()
            src_modes = {int(k): poly(t) for k, poly in zip(modes, profiles)}
        else:
            spec = p.source.modal_samples()
            src_modes = {int(k): spec[:, k] for k in np.flatnonzero(np.max(np.abs(spec), axis=0) > 0)}
    for k in range(lam_all.size):
        basis = None
        if any(phi[k] != 0 for phi in phis) or k in src_modes:
            basis = _classical_basis(lam_all[k], m, t)
        if basis is None:
            continue
        for j, phi in enumerate(phis):
            ref[:, k] += basis[j] * phi[k]
        if k in src_modes:
            ref[:, k] += _product_conv(*_classical_moments(lam_all[k], m, t), src_modes[k], dt)
    ref[0] = phis[0]
    got = sol.spectral.reshape(t.size, -1)
    n = p.grid.size
    diff = float(np.max(np.abs(np.fft.ifft(got - ref, axis=1)))) if p.grid.dim == 1 else float(
        np.max(np.abs(np.fft.ifftn((got - ref).reshape(sol.spectral.shape), axes=tuple(range(1, sol.spectral.ndim)))))
    )
    norm = float(np.max(np.abs(ref))) / n
    return ClassicCheck(diff, norm)


@dataclass(frozen=True)
class ResidualReport:
    max: float
    l2: float
    source_max: float
    source_l2: float
    initial: tuple
    nodes: str = "interior"
    times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "max": self.max,
            "l2": self.l2,
            "source_max": self.source_max,
            "source_l2": self.source_l2,
            "initial": list(self.initial),
            "nodes": self.nodes,
        }


def _source_history(p: CauchyProblem) -> np.ndarray:
    t = p.horizon.nodes
    out = _empty_history(p)
    if p.source is None:
        return out
    if p.source.is_catalog:
        modes, profiles = p.source.modal_catalog()
        for k, poly in zip(modes, profiles):
            out[:, k] = poly(t)
        return out
    return p.source.modal_samples().copy()


def residual_norm(s: Solution, p: CauchyProblem) -> ResidualReport:
    """How well ``s`` satisfies the equation and the initial conditions.

    The Caputo derivative of the computed history is taken with the sampled
    scheme of :func:`fracduhamel.fractime.caputo`; norms are over interior
    time nodes and all grid points (``l2`` is a root-mean-square).
    """
    n_t = p.horizon.n_steps + 1
    if p.horizon.n_steps < p.m + 2:
        raise SolverError(f"need at least {p.m + 2} time steps for a residual, got {p.horizon.n_steps}")
    u = s.spectral.reshape(n_t, -1)
    f = _source_history(p)
    lam = p.symbol_values()
    res = -f.copy()
    for k in np.flatnonzero(np.max(np.abs(u), axis=0) > 0):
        du = caputo(TimeSeries(p.horizon, u[:, k]), p.order).values
        res[:, k] = du - lam[k] * u[:, k] - f[:, k]
    interior = slice(1, n_t - 1)
    shape = (n_t, *p.grid.shape)
    axes = tuple(range(1, len(shape)))

    def abs_phys(spec):
        return np.abs(np.fft.ifftn(spec.reshape(shape)[interior], axes=axes))

    def norms(a):
        return float(np.max(a, initial=0.0)), float(np.sqrt(np.mean(a**2)))

    r_abs = abs_phys(res)
    rmax, rl2 = norms(r_abs)
    fmax, fl2 = norms(abs_phys(f))
    profile = r_abs.reshape(r_abs.shape[0], -1).max(axis=1)
    init = []
    hist = s.values().reshape(n_t, -1)
    for k, phi in enumerate(p.initial):
        w = fd_weights_at_start(k, 2)
        est = np.tensordot(w, hist[: w.size], axes=1) / p.horizon.dt**k
        init.append(float(np.max(np.abs(est - phi.values.ravel()))))
    return ResidualReport(rmax, rl2, fmax, fl2, tuple(init), times=p.horizon.nodes[interior], profile=profile)
