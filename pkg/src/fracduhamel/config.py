"""JSON run configurations.

A configuration is one JSON object::

    {
      "alpha": 0.5,
      "symbol": "laplacian",
      "grid": {"points": 32, "length": 6.283185307179586},
      "time": {"t_end": 1.0, "steps": 1000, "output_every": 100},
      "initial": ["cos(x)"],
      "source": {"profile": [[1, 1.0]], "shape": "cos(x)"},
      "method": "duhamel",
      "tolerances": {"residual": 0.01},
      "output": {"dir": "out", "prefix": "run"}
    }

``symbol`` is a built-in name (``laplacian``), an object such as
``{"kind": "fractional_laplacian", "s": 1.5}``, or an expression in ``xi``.
``source`` is absent/null, one ``{profile, shape}`` term, a list of them
(summed), or ``{"samples": "file.npy"}`` holding an array of shape
``(steps + 1, *points)``. A ``profile`` lists ``[power, coefficient]``
pairs of ``sum c t^p``.

Validation collects every violation before failing.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr as _expr
from .fractime import FracCalcError, FractionalOrder, Monomial, Polynomial, TimeGrid
from .solver import FORCINGS, METHODS, CauchyProblem, SourceTerm
from .spectral import Field, SpaceGrid, SpectralError, SymbolSpec

__all__ = ["ConfigError", "RunConfig", "parse_config", "config_from_dict", "OUTPUT_DIR_ENV"]

OUTPUT_DIR_ENV = "FRACDUHAMEL_OUTPUT_DIR"
TOP_LEVEL_KEYS = {
    "alpha", "symbol", "grid", "time", "initial", "source",
    "method", "forcing", "tolerances", "output", "exact", "neumann_terms",
}
DEFAULT_RESIDUAL_TOL = 1e-2


class ConfigError(ValueError):
    """Every violation found in a configuration, not just the first."""

    def __init__(self, violations: list[str], origin: str = "config"):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{origin}: {len(self.violations)} violation(s)\n{lines}")


@dataclass(frozen=True)
class SourceSpec:
    terms: tuple = ()  # ((Polynomial, shape text), ...)
    samples_path: Optional[Path] = None


@dataclass(frozen=True)
class RunConfig:
    order: FractionalOrder
    symbol: SymbolSpec
    grid: SpaceGrid
    time: TimeGrid
    output_every: int
    initial: tuple
    source: Optional[SourceSpec]
    method: str = "duhamel"
    forcing: Optional[str] = None
    residual_tol: float = DEFAULT_RESIDUAL_TOL
    neumann_terms: int = 30
    output_dir: Path = Path(".")
    prefix: str = "solution"
    exact: Optional[str] = None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def alpha(self) -> float:
        return self.order.alpha

    def with_steps(self, steps: int) -> "RunConfig":
        return replace(self, time=TimeGrid.from_horizon(self.time.t_end, steps))

    def problem(self) -> CauchyProblem:
        initial = tuple(Field.from_expression(self.grid, text) for text in self.initial)
        source = None
        if self.source is not None:
            if self.source.samples_path is not None:
                samples = np.load(self.source.samples_path)
                source = SourceTerm(samples=samples, sample_grid=self.time, space_grid=self.grid)
            else:
                source = SourceTerm.catalog(
                    *((poly, Field.from_expression(self.grid, shape)) for poly, shape in self.source.terms)
                )
        return CauchyProblem(self.order, self.symbol, initial, self.time, source)


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _integer(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_expression(text, where: str, errors: list[str]) -> None:
    if not isinstance(text, str):
        errors.append(f"{where}: expected an expression string, got {type(text).__name__}")
        return
    try:
        _expr.parse_expression(text)
    except _expr.ExprSyntaxError as exc:
        errors.append(f"{where}: {exc}")


def _parse_symbol(spec, errors: list[str]) -> Optional[SymbolSpec]:
    try:
        if isinstance(spec, str):
            if spec == "laplacian":
                return SymbolSpec.laplacian()
            return SymbolSpec.expression(spec)
        if isinstance(spec, dict):
            kind = spec.get("kind")
            args = {k: v for k, v in spec.items() if k != "kind"}
            if kind == "expression":
                return SymbolSpec.expression(args.get("text", ""), args.get("zero_mode", "error"))
            if kind == "constant" and isinstance(args.get("lam"), list):
                re, im = args["lam"]
                args["lam"] = complex(re, im)
            return SymbolSpec(kind, **args)
        errors.append(f"symbol: expected a string or an object, got {type(spec).__name__}")
    except (SpectralError, _expr.ExpressionError, TypeError) as exc:
        errors.append(f"symbol: {exc}")
    return None


def _parse_profile(profile, where: str, errors: list[str]) -> Optional[Polynomial]:
    if not isinstance(profile, list) or not profile:
        errors.append(f"{where}: expected a non-empty list of [power, coefficient] pairs")
        return None
    terms = []
    for i, pair in enumerate(profile):
        if not (isinstance(pair, list) and len(pair) == 2 and all(_number(v) for v in pair)):
            errors.append(f"{where}[{i}]: expected [power, coefficient] numbers, got {pair!r}")
            continue
        try:
            terms.append(Monomial(float(pair[0]), float(pair[1])))
        except FracCalcError as exc:
            errors.append(f"{where}[{i}]: {exc}")
    return Polynomial(tuple(terms)) if len(terms) == len(profile) else None


def _parse_source(spec, base: Path, errors: list[str]) -> Optional[SourceSpec]:
    if spec is None:
        return None
    if isinstance(spec, dict) and "samples" in spec:
        extra = set(spec) - {"samples"}
        if extra:
            errors.append(f"source: unknown keys {sorted(extra)}")
        path = spec["samples"]
        if not isinstance(path, str):
            errors.append("source.samples: expected a file path")
            return None
        resolved = (base / path) if not os.path.isabs(path) else Path(path)
        if not resolved.exists():
            errors.append(f"source.samples: file not found: {resolved}")
        return SourceSpec(samples_path=resolved)
    items = spec if isinstance(spec, list) else [spec]
    terms = []
    for i, item in enumerate(items):
        where = "source" if not isinstance(spec, list) else f"source[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{where}: expected an object with 'profile' and 'shape'")
            continue
        extra = set(item) - {"profile", "shape"}
        if extra:
            errors.append(f"{where}: unknown keys {sorted(extra)}")
        missing = {"profile", "shape"} - set(item)
        if missing:
            errors.append(f"{where}: missing keys {sorted(missing)}")
            continue
        poly = _parse_profile(item["profile"], f"{where}.profile", errors)
        _check_expression(item["shape"], f"{where}.shape", errors)
        if poly is not None:
            terms.append((poly, item["shape"]))
    if not items:
        errors.append("source: empty list; use null for no source")
    return SourceSpec(terms=tuple(terms))


def config_from_dict(data: dict, base: Path | str = ".", origin: str = "config") -> RunConfig:
    """Validate a configuration object; raises :class:`ConfigError` listing every problem."""
    base = Path(base)
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError([f"expected a JSON object at top level, got {type(data).__name__}"], origin)
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        errors.append(f"unknown top-level keys {sorted(unknown)}")
    for key in ("alpha", "symbol", "grid", "time", "initial"):
        if key not in data:
            errors.append(f"missing required key {key!r}")

    order = None
    alpha = data.get("alpha")
    if "alpha" in data:
        if not _number(alpha) or alpha <= 0:
            errors.append(f"alpha: expected a positive number, got {alpha!r}")
        else:
            order = FractionalOrder(float(alpha))

    symbol = _parse_symbol(data["symbol"], errors) if "symbol" in data else None

    grid = None
    g = data.get("grid")
    if "grid" in data:
        if not isinstance(g, dict):
            errors.append("grid: expected an object with 'points' and optional 'length'")
        else:
            extra = set(g) - {"points", "length"}
            if extra:
                errors.append(f"grid: unknown keys {sorted(extra)}")
            pts = g.get("points")
            pts_list = pts if isinstance(pts, list) else [pts]
            if not pts_list or not all(_integer(n) for n in pts_list):
                errors.append(f"grid.points: expected an integer or a list of integers, got {pts!r}")
            else:
                length = g.get("length", [])
                lengths = length if isinstance(length, list) else [length]
                if not all(_number(v) for v in lengths):
                    errors.append(f"grid.length: expected numbers, got {length!r}")
                else:
                    try:
                        grid = SpaceGrid(tuple(pts_list), tuple(lengths))
                    except SpectralError as exc:
                        errors.append(f"grid: {exc}")

    tgrid = None
    every = 1
    tm = data.get("time")
    if "time" in data:
        if not isinstance(tm, dict):
            errors.append("time: expected an object with 't_end' and 'steps'")
        else:
            extra = set(tm) - {"t_end", "steps", "output_every"}
            if extra:
                errors.append(f"time: unknown keys {sorted(extra)}")
            t_end = tm.get("t_end")
            steps = tm.get("steps")
            every = tm.get("output_every", 1)
            ok = True
            if not _number(t_end) or t_end <= 0:
                errors.append(f"time.t_end: must be > 0, got {t_end!r}")
                ok = False
            min_steps = order.m + 2 if order else 3
            if not _integer(steps) or steps < min_steps:
                errors.append(f"time.steps: must be an integer >= m+2 = {min_steps}, got {steps!r}")
                ok = False
            if not _integer(every) or every < 1:
                errors.append(f"time.output_every: must be a positive integer, got {every!r}")
                every = 1
            if ok:
                tgrid = TimeGrid.from_horizon(float(t_end), int(steps))

    initial = data.get("initial")
    if "initial" in data:
        if not isinstance(initial, list):
            errors.append("initial: expected a list of expression strings")
            initial = None
        else:
            if order is not None and len(initial) != order.m:
                errors.append(f"expected {order.m} initial fields (m={order.m}), got {len(initial)}")
            for i, text in enumerate(initial):
                _check_expression(text, f"initial[{i}]", errors)

    source = _parse_source(data.get("source"), base, errors)

    method = data.get("method", "duhamel")
    if method not in METHODS:
        errors.append(f"method: expected one of {list(METHODS)}, got {method!r}")
    forcing = data.get("forcing", "auto")
    if forcing not in (*FORCINGS, "auto"):
        errors.append(f"forcing: expected one of {[*FORCINGS, 'auto']}, got {forcing!r}")

    tol = DEFAULT_RESIDUAL_TOL
    tols = data.get("tolerances", {})
    if not isinstance(tols, dict):
        errors.append("tolerances: expected an object")
    else:
        extra = set(tols) - {"residual"}
        if extra:
            errors.append(f"tolerances: unknown keys {sorted(extra)}")
        tol = tols.get("residual", DEFAULT_RESIDUAL_TOL)
        if not _number(tol) or tol <= 0:
            errors.append(f"tolerances.residual: must be > 0, got {tol!r}")

    n_terms = data.get("neumann_terms", 30)
    if not _integer(n_terms) or n_terms < 1:
        errors.append(f"neumann_terms: must be a positive integer, got {n_terms!r}")

    out = data.get("output", {})
    out_dir, prefix = Path("."), "solution"
    if not isinstance(out, dict):
        errors.append("output: expected an object with 'dir' and/or 'prefix'")
    else:
        extra = set(out) - {"dir", "prefix"}
        if extra:
            errors.append(f"output: unknown keys {sorted(extra)}")
        d = out.get("dir", ".")
        prefix = out.get("prefix", "solution")
        if not isinstance(d, str):
            errors.append("output.dir: expected a path string")
        else:
            out_dir = base / d if not os.path.isabs(d) else Path(d)
        if not isinstance(prefix, str) or not prefix or "/" in prefix:
            errors.append(f"output.prefix: expected a plain file name stem, got {prefix!r}")
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        out_dir = Path(env_dir)

    exact = data.get("exact")
    if exact is not None:
        _check_expression(exact, "exact", errors)

    if source is not None and source.samples_path is not None and tgrid is not None and grid is not None:
        if source.samples_path.exists():
            try:
                shape = np.load(source.samples_path, mmap_mode="r").shape
                want = (tgrid.n_steps + 1, *grid.shape)
                if shape != want:
                    errors.append(f"source.samples: array shape {shape}, expected {want}")
            except (OSError, ValueError) as exc:
                errors.append(f"source.samples: unreadable ({exc})")

    if errors:
        raise ConfigError(errors, origin)
    return RunConfig(
        order=order,
        symbol=symbol,
        grid=grid,
        time=tgrid,
        output_every=int(every),
        initial=tuple(initial),
        source=source,
        method=method,
        forcing=None if forcing == "auto" else forcing,
        residual_tol=float(tol),
        neumann_terms=int(n_terms),
        output_dir=out_dir,
        prefix=prefix,
        exact=exact,
        raw=data,
    )


def parse_config(path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"], str(path)) from None
    return config_from_dict(data, path.parent, str(path))
