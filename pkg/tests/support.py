"""Shared builders for the test modules."""
import numpy as np

from fracduhamel.fractime import FractionalOrder, Polynomial, TimeGrid, fd_weights_at_start
from fracduhamel.solver import CauchyProblem, SourceTerm
from fracduhamel.spectral import Field, SpaceGrid, SymbolSpec


def grid_1d(n: int = 16) -> SpaceGrid:
    return SpaceGrid((n,))


def field_of(grid: SpaceGrid, fn) -> Field:
    return Field.from_function(grid, fn)


def zeros(grid: SpaceGrid) -> Field:
    return Field(grid, np.zeros(grid.shape), True)


def problem(alpha, symbol=None, initial=None, profile=None, shape=None, t_end=1.0, steps=200, grid=None):
    """A 1-D problem on 16 points; ``profile`` pairs build a catalog source times ``shape``."""
    grid = grid or grid_1d()
    order = FractionalOrder(alpha)
    symbol = symbol or SymbolSpec.laplacian()
    if initial is None:
        initial = [zeros(grid)] * order.m
    initial = tuple(field_of(grid, f) if callable(f) else f for f in initial)
    source = None
    if profile is not None:
        shape = shape or np.cos
        poly = profile if isinstance(profile, Polynomial) else Polynomial.of(*profile)
        source = SourceTerm.catalog((poly, field_of(grid, shape)))
    return CauchyProblem(order, symbol, initial, TimeGrid.from_horizon(t_end, steps), source)


def rel_l2(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm((a - b).ravel()) / np.linalg.norm(b.ravel()))


def start_derivative(history: np.ndarray, dt: float, k: int) -> np.ndarray:
    """Second-order one-sided estimate of the k-th time derivative at t=0."""
    w = fd_weights_at_start(k, 2)
    return np.tensordot(w, history[: w.size], axes=1) / dt**k


METADATA_SCHEMA = {
    "type": "object",
    "required": [
        "config", "alpha", "m", "method", "forcing", "residual", "residual_relative",
        "residual_tolerance", "residual_ok", "stability", "warnings", "wall_time_s", "files",
    ],
    "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "method": {"enum": ["duhamel_caputo", "duhamel_rl", "neumann", "voc_oracle", "homogeneous"]},
        "forcing": {"enum": ["caputo", "riemann_liouville", None]},
        "residual": {
            "type": "object",
            "required": ["max", "l2", "source_max", "source_l2", "initial"],
            "properties": {
                "max": {"type": "number", "minimum": 0},
                "l2": {"type": "number", "minimum": 0},
                "initial": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "residual_relative": {"type": "number", "minimum": 0},
        "residual_ok": {"type": "boolean"},
        "stability": {
            "type": "object",
            "required": ["sup_re_symbol", "unstable"],
            "properties": {"unstable": {"type": "boolean"}},
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
        "wall_time_s": {"type": "number", "minimum": 0},
        "files": {
            "type": "object",
            "required": ["solution", "residual", "metadata"],
            "additionalProperties": {"type": "string"},
        },
    },
}
