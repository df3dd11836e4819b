"""Gamma and two-parameter Mittag-Leffler functions.

``ml(alpha, beta, z)`` evaluates

    E_{alpha,beta}(z) = sum_{n>=0} z**n / Gamma(alpha*n + beta)

by one of three regimes, chosen per point:

* a compensated Taylor sum in double precision, accepted only when the
  a-posteriori rounding estimate (driven by the cancellation ratio
  ``sum |terms| / |sum|``) is below ``TARGET_RELERR``;
* the large-argument expansion, i.e. the residues at the poles
  ``s_j = z**(1/alpha) * exp(2 pi i j / alpha)`` on the principal sheet plus
  the optimally truncated asymptotic series of the Hankel integral,
  ``-sum_k z**(-k) / Gamma(beta - alpha k)``;
* the Taylor sum in extended precision (mpmath) for everything else.

All three are evaluated elementwise; the result at a point never depends on
the other points in the batch.
"""
from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special

__all__ = [
    "MittagLefflerError",
    "gamma_fn",
    "rgamma",
    "ml",
    "ml_map",
    "ml_array",
]

EPS = np.finfo(float).eps
TARGET_RELERR = 1e-13
# Below this value of |z|**(1/alpha) the asymptotic expansion is not tried.
ASYMPTOTIC_MIN_R = 18.0
# Taylor terms are abandoned once |z|**(1/alpha) exceeds this (cancellation
# already ~ exp(2 R)).
TAYLOR_MAX_R = 20.0
_TAYLOR_MAX_TERMS = 600
_ASYMPTOTIC_MAX_TERMS = 400
_MP_MAX_TERMS = 200_000
_LOG_MAX = math.log(np.finfo(float).max)


class MittagLefflerError(ArithmeticError):
    """Raised when an argument is outside the domain or no regime converges."""


def gamma_fn(x: float) -> float:
    """Gamma function for real ``x``; raises at the poles 0, -1, -2, ..."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise MittagLefflerError(f"gamma has a pole at x={x:g}")
    return math.gamma(x)


def rgamma(x):
    """Reciprocal gamma ``1/Gamma(x)``; exactly zero at non-positive integers.

    Accepts scalars or arrays (real or complex).
    """
    out = special.rgamma(x)
    if np.ndim(out) == 0:
        return float(out) if np.isrealobj(out) else complex(out)
    return out


def _check_params(alpha: float, beta: float) -> None:
    if not (alpha > 0 and math.isfinite(alpha)):
        raise MittagLefflerError(f"alpha must be positive and finite, got {alpha!r}")
    if not (beta > 0 and math.isfinite(beta)):
        raise MittagLefflerError(f"beta must be positive and finite, got {beta!r}")


@lru_cache(maxsize=256)
def _rgamma_table(alpha: float, beta: float, n: int) -> np.ndarray:
    return special.rgamma(alpha * np.arange(n) + beta)


def _taylor(alpha: float, beta: float, z: np.ndarray):
    """Neumaier-compensated Taylor sum; returns (value, error estimate)."""
    coef = _rgamma_table(alpha, beta, _TAYLOR_MAX_TERMS)
    total = np.zeros_like(z)
    comp = np.zeros_like(z)
    abs_sum = np.zeros(z.shape)
    weighted = np.zeros(z.shape)
    power = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    absz = np.abs(z)
    # terms keep growing until alpha*n ~ |z|**(1/alpha)
    n_peak = np.abs(z) ** (1.0 / alpha) / alpha + 2.0
    for n in range(_TAYLOR_MAX_TERMS):
        term = np.where(active, power * coef[n], 0)
        t_abs = np.abs(term)
        s = total + term
        big = np.abs(total) >= t_abs
        comp += np.where(big, (total - s) + term, (term - s) + total)
        total = s
        abs_sum += t_abs
        weighted += (n + 2) * t_abs
        power = power * z
        done = (n > n_peak) & (t_abs <= 2.0**-60 * abs_sum)
        active &= ~done
        if not active.any():
            break
    value = total + comp
    err = 2 * EPS * weighted + np.where(active, np.inf, 0.0)
    # z**n underflow at tiny |z| is harmless
    err = np.where(absz == 0, 0.0, err)
    return value, err


def _asymptotic(alpha: float, beta: float, z: np.ndarray):
    """Pole residues plus truncated Hankel series; returns (value, error estimate)."""
    absz = np.abs(z)
    theta = np.angle(z)
    radius = absz ** (1.0 / alpha)
    value = np.zeros(z.shape, dtype=complex)
    err = np.zeros(z.shape)
    abs_sum = np.zeros(z.shape)

    jmax = int(math.ceil(alpha / 2.0)) + 1
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(-jmax, jmax + 1):
            phase = theta + 2 * np.pi * j
            inside = np.abs(phase) <= alpha * np.pi * (1 + 1e-15)
            on_cut = np.abs(np.abs(phase) - alpha * np.pi) <= 1e-13 * alpha * np.pi
            s = radius * np.exp(1j * phase / alpha)
            res = np.where(inside, s ** (1 - beta) * np.exp(s) / alpha, 0)
            # a pole on the branch cut contributes half from each side
            res = np.where(on_cut, 0.5 * res, res)
            value += res
            abs_sum += np.abs(res)
            # poles close to (but not on) the cut spoil the Hankel expansion
            gap = np.pi - np.abs(phase / alpha)
            near = inside & ~on_cut & (gap < 0.5)
            err += np.where(near, np.abs(res) / np.maximum(gap * radius, 1e-300), 0.0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        zinv = 1.0 / z
    hank = np.zeros(z.shape, dtype=complex)
    last = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    power = zinv.copy()
    x = beta - alpha * np.arange(1, _ASYMPTOTIC_MAX_TERMS + 1)
    coef = special.rgamma(x)
    # Truncation is steered by the envelope |Gamma(1-x)|/pi of 1/Gamma(x)
    # (reflection formula without the sine), so a coefficient that is
    # nearly zero only through rounding cannot fake convergence. Exact
    # zeros (x a non-positive integer in floating point) stay exact.
    with np.errstate(divide="ignore"):
        log_env = np.where(x < 0.5, special.gammaln(1 - x) - math.log(math.pi), np.log(np.abs(coef)))
    log_env = np.where((x <= 0) & (x == np.round(x)), -np.inf, log_env)
    log_absz = np.log(absz)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for k in range(_ASYMPTOTIC_MAX_TERMS):
            term = power * coef[k]
            env = np.exp(log_env[k] - (k + 1) * log_absz)
            # optimal truncation: stop before the envelope starts to grow again
            grow = active & ((env > last) | ~np.isfinite(term))
            active &= ~grow
            hank -= np.where(active, term, 0)
            abs_sum += np.where(active, np.abs(term), 0)
            err = np.where(grow, err + env, err)
            last = np.where(active & (env > 0), env, last)
            # converged: the envelope of every further term is negligible
            done = active & (env > 0) & (env <= 2.0**-60 * np.abs(value + hank))
            err = np.where(done, err + env, err)
            active &= ~done
            power = power * zinv
            if not active.any():
                break
    # an expansion whose coefficients all vanish is exact
    err = np.where(active & np.isfinite(last), err + last, err)
    err += 4 * EPS * abs_sum
    value += hank
    return value, err


def _mp_series(alpha: float, beta: float, z: complex) -> complex:
    """Extended-precision Taylor sum with precision sized from the cancellation."""
    r = abs(z) ** (1.0 / alpha)
    digits = int(r / math.log(10) * 2) + 30
    for _ in range(4):
        with mpmath.workdps(digits):
            zz = mpmath.mpc(z.real, z.imag)
            a = mpmath.mpf(alpha)
            b = mpmath.mpf(beta)
            total = mpmath.mpc(0)
            abs_total = mpmath.mpf(0)
            power = mpmath.mpc(1)
            tiny = mpmath.mpf(2) ** (-mpmath.mp.prec)
            n = 0
            peak = r / alpha + 2
            while True:
                term = power * mpmath.rgamma(a * n + b)
                total += term
                t_abs = abs(term)
                abs_total += t_abs
                if n > peak and t_abs <= tiny * abs_total:
                    break
                n += 1
                if n > _MP_MAX_TERMS:
                    raise MittagLefflerError(
                        f"extended-precision series did not converge for z={z!r}"
                    )
                power *= zz
            # digits lost to cancellation, with 20 digits to spare
            if total == 0 or abs_total / abs(total) < mpmath.mpf(10) ** (digits - 20):
                return complex(total)
            digits *= 2
    raise MittagLefflerError(f"cancellation too severe at z={z!r}")


def ml_array(alpha: float, beta: float, z) -> np.ndarray:
    """Vectorised ``E_{alpha,beta}`` over an array of complex arguments."""
    alpha = float(alpha)
    beta = float(beta)
    _check_params(alpha, beta)
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    if not np.all(np.isfinite(z)):
        bad = int(np.flatnonzero(~np.isfinite(z))[0])
        raise MittagLefflerError(f"non-finite argument at index {bad}")

    out = np.empty(z.shape, dtype=complex)
    todo = np.ones(z.shape, dtype=bool)
    radius = np.abs(z) ** (1.0 / alpha)

    zero = z == 0
    out[zero] = rgamma(beta)
    todo &= ~zero

    # at large radius the principal pole residue dominates inside the sector
    theta = np.angle(z)
    far = np.maximum(radius, ASYMPTOTIC_MIN_R)
    log_mag = (1 - beta) * np.log(far) + far * np.cos(theta / alpha) - math.log(alpha)
    huge = todo & (radius >= ASYMPTOTIC_MIN_R) & (np.abs(theta) < alpha * np.pi / 2) & (log_mag > _LOG_MAX)
    if huge.any():
        i = int(np.flatnonzero(huge)[0])
        raise MittagLefflerError(f"E_{{{alpha:g},{beta:g}}} overflows at index {i} (z={z[i]!r})")

    idx = np.flatnonzero(todo & (radius <= TAYLOR_MAX_R))
    if idx.size:
        val, err = _taylor(alpha, beta, z[idx])
        ok = np.isfinite(val) & (err <= TARGET_RELERR * np.abs(val))
        out[idx[ok]] = val[ok]
        todo[idx[ok]] = False

    idx = np.flatnonzero(todo & (radius >= ASYMPTOTIC_MIN_R))
    if idx.size:
        val, err = _asymptotic(alpha, beta, z[idx])
        ok = ~np.isnan(val) & (err <= TARGET_RELERR * np.abs(val))
        out[idx[ok]] = val[ok]
        todo[idx[ok]] = False

    for i in np.flatnonzero(todo):
        out[i] = _mp_series(alpha, beta, complex(z[i]))
    return out.reshape(shape)


def ml(alpha: float, beta: float, z: complex) -> complex:
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)``.

    >>> round(ml(1, 1, 1).real, 12)
    2.718281828459
    """
    return complex(ml_array(alpha, beta, np.array([z], dtype=complex))[0])


def ml_map(alpha: float, beta: float, zs) -> list[complex]:
    """Elementwise :func:`ml` over a sequence, preserving order.

    Failures are re-raised with the offending index.
    """
    zs = list(zs)
    if not zs:
        return []
    try:
        return [complex(v) for v in ml_array(alpha, beta, np.asarray(zs, dtype=complex))]
    except MittagLefflerError:
        for i, z in enumerate(zs):
            try:
                ml(alpha, beta, z)
            except MittagLefflerError as exc:
                raise MittagLefflerError(f"element {i}: {exc}") from exc
        raise
