"""Command-line entry point: ``fracduhamel <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver error,
4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import expr as _expr
from .config import OUTPUT_DIR_ENV, ConfigError, RunConfig, config_from_dict, parse_config
from .csvio import TableFormatError, format_number, read_table, write_solution, write_table
from .fractime import FracCalcError, FractionalOrder, TimeGrid, TimeSeries, caputo, frac_integral, riemann_liouville
from .mittag_leffler import MittagLefflerError, ml_array
from .solver import SolverError, full_solve, residual_norm
from .spectral import SpectralError

log = logging.getLogger("fracduhamel")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SOLVER_ERRORS = (SolverError, MittagLefflerError, SpectralError, FracCalcError, _expr.ExpressionError)

DEMOS = {
    "subdiffusion": {
        "alpha": 0.5,
        "symbol": "laplacian",
        "grid": {"points": 32},
        "time": {"t_end": 1.0, "steps": 1000, "output_every": 100},
        "initial": ["cos(x)"],
        "source": {"profile": [[1, 1.0]], "shape": "cos(x)"},
        "method": "duhamel",
        "tolerances": {"residual": 1e-2},
        "output": {"prefix": "subdiffusion"},
    },
    "superdiffusion": {
        "alpha": 1.5,
        "symbol": "laplacian",
        "grid": {"points": 32},
        "time": {"t_end": 1.0, "steps": 1000, "output_every": 100},
        "initial": ["cos(x)", "0"],
        "source": {"profile": [[0, 1.0], [1, 1.0]], "shape": "cos(x)"},
        "method": "duhamel",
        "tolerances": {"residual": 1e-2},
        "output": {"prefix": "superdiffusion"},
    },
}


def _evaluate_in_spacetime(text: str, grid, t: np.ndarray) -> np.ndarray:
    """Evaluate an expression in ``t`` and ``x`` on the full space-time grid."""
    tree = _expr.parse_expression(text)
    coords = grid.coords()
    tt = t.reshape((-1,) + (1,) * grid.dim)
    env = {"t": tt}
    if grid.dim == 1:
        env["x"] = coords[0][None]
    env.update({f"x{i + 1}": c[None] for i, c in enumerate(coords)})
    return np.broadcast_to(_expr.evaluate(tree, env), (t.size, *grid.shape))


def _build_problem(cfg: RunConfig):
    try:
        return cfg.problem()
    except _expr.ExpressionError as exc:
        raise ConfigError([f"while evaluating input fields: {exc}"]) from exc


def run_config(cfg: RunConfig) -> dict:
    """Solve, write the solution, residual and metadata files; return the metadata."""
    started = time.perf_counter()
    p = _build_problem(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        kwargs = {"n_terms": cfg.neumann_terms} if cfg.method == "neumann" else {}
        sol = full_solve(p, cfg.method, cfg.forcing, **kwargs)
    res = residual_norm(sol, p)
    u_max = float(np.max(np.abs(sol.values())))
    scale = max(res.source_max, u_max, 1e-300)
    # the tolerance applies to the RMS residual: the max is dominated by the
    # first nodes wherever the solution has a t^alpha initial layer
    rel = res.l2 / scale

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    sol_path = write_solution(out / f"{cfg.prefix}.csv", sol, cfg.output_every)
    res_path = write_table(out / f"{cfg.prefix}_residual.csv", ["t", "residual_max"], zip(res.times, res.profile))

    solver_meta = dict(sol.metadata)
    run_warnings = list(solver_meta.pop("warnings", []))
    extra = [str(w.message) for w in caught if str(w.message) not in run_warnings]
    run_warnings += extra
    meta = {
        "config": cfg.raw,
        "alpha": cfg.alpha,
        "m": cfg.order.m,
        "method": solver_meta.get("method"),
        "forcing": solver_meta.get("forcing"),
        "source_hypothesis": solver_meta.get("source_hypothesis"),
        "residual": res.as_dict(),
        "residual_relative": rel,
        "residual_relative_max": res.max / scale,
        "residual_tolerance": cfg.residual_tol,
        "residual_ok": bool(rel <= cfg.residual_tol),
        "stability": {
            "sup_re_symbol": solver_meta.get("stability_sup_re"),
            "unstable": bool(solver_meta.get("stability_sup_re", 0) > 0),
        },
        "warnings": run_warnings,
        "solver": {k: v for k, v in solver_meta.items() if _jsonable(v)},
        "files": {"solution": str(sol_path), "residual": str(res_path)},
    }
    if cfg.exact is not None:
        exact = _evaluate_in_spacetime(cfg.exact, cfg.grid, sol.t)
        meta["exact_error_max"] = float(np.max(np.abs(sol.values() - exact)))
    meta["wall_time_s"] = time.perf_counter() - started
    meta_path = out / f"{cfg.prefix}.json"
    meta["files"]["metadata"] = str(meta_path)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    for msg in extra:
        log.warning(msg)
    if not meta["residual_ok"]:
        log.warning("relative residual %.3e exceeds tolerance %.3e", rel, cfg.residual_tol)
    return meta


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma list, optionally in braces."""
    text = text.strip().strip("{}[]")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(v) for v in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"need step > 0 and stop >= start, got {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    if args.out_dir:
        cfg = replace(cfg, output_dir=Path(args.out_dir))
    meta = run_config(cfg)
    print(json.dumps({k: meta[k] for k in ("method", "forcing", "residual_relative", "residual_ok", "files")}))
    return EXIT_OK


def cmd_ml(args) -> int:
    try:
        zs = _parse_range(args.range)
    except ValueError as exc:
        raise ConfigError([f"range: {exc}"]) from exc
    vals = ml_array(args.alpha, args.beta, zs)
    rows = [(z, v.real, v.imag) for z, v in zip(zs, vals)]
    if args.out:
        write_table(args.out, ["z", "re", "im"], rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["z", "re", "im"])
        writer.writerows([format_number(v) for v in r] for r in rows)
    return EXIT_OK


def _read_series(path) -> TimeSeries:
    header, data = read_table(path)
    if not header or header[0] != "t":
        raise ConfigError([f"{path}: first column must be 't', got {header[:1]}"], "input series")
    if header[1:] == ["re", "im"] or header[1:4] == ["re", "im", "finite"]:
        values = data[:, 1] + 1j * data[:, 2]
    elif len(header) == 2:
        values = data[:, 1]
    else:
        raise ConfigError([f"{path}: expected columns t,value or t,re,im; got {header}"], "input series")
    t = data[:, 0]
    if t.size < 3:
        raise ConfigError([f"{path}: need at least 3 samples, got {t.size}"], "input series")
    if t[0] != 0:
        raise ConfigError([f"{path}: the t column must start at 0, got {t[0]!r}"], "input series")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(dt, 1e-300) + 1e-12 * abs(t[-1]):
        raise ConfigError([f"{path}: the t column is not uniformly spaced"], "input series")
    return TimeSeries(TimeGrid(dt, t.size - 1), values)


def cmd_fracop(args) -> int:
    series = _read_series(args.input)
    if args.op == "J":
        out = frac_integral(series, args.order)
    elif args.op == "caputo":
        out = caputo(series, FractionalOrder(args.order))
    else:
        out = riemann_liouville(series, FractionalOrder(args.order))
    vals = np.asarray(out.values, dtype=complex)
    finite = np.isfinite(vals)
    write_table(
        args.output,
        ["t", "re", "im", "finite"],
        ((t, v.real, v.imag, int(ok)) for t, v, ok in zip(series.t, vals, finite)),
    )
    print(json.dumps({"dt": series.grid.dt, "n_steps": series.grid.n_steps, "nonfinite_rows": int((~finite).sum())}))
    return EXIT_OK


def convergence_table(cfg: RunConfig, levels: int) -> dict:
    """Errors against ``exact`` (or against the variation-of-constants oracle) for halved steps."""
    if levels < 2:
        raise ConfigError([f"levels: need at least 2 refinement levels, got {levels}"])
    if cfg.source is not None and cfg.source.samples_path is not None:
        raise ConfigError(["convergence studies need a catalog source"])
    rows = []
    for level in range(levels):
        c = cfg.with_steps(cfg.time.n_steps * 2**level)
        p = _build_problem(c)
        sol = full_solve(p, cfg.method, cfg.forcing)
        if cfg.exact is not None:
            ref = _evaluate_in_spacetime(cfg.exact, cfg.grid, sol.t)
            reference = "exact"
        else:
            ref = full_solve(p, "voc").values()
            reference = "voc"
        err = float(np.max(np.abs(sol.values() - ref)))
        rows.append((c.time.dt, c.time.n_steps, err))
    orders = [math.nan] + [
        math.log2(rows[i - 1][2] / rows[i][2]) if rows[i][2] > 0 and rows[i - 1][2] > 0 else math.nan
        for i in range(1, len(rows))
    ]
    dts = np.array([r[0] for r in rows])
    errs = np.array([r[2] for r in rows])
    fitted = float(np.polyfit(np.log(dts), np.log(errs), 1)[0]) if np.all(errs > 0) else math.nan
    return {
        "reference": reference,
        "rows": [(*r, o) for r, o in zip(rows, orders)],
        "fitted_order": fitted,
    }


def cmd_convergence(args) -> int:
    cfg = parse_config(args.config)
    report = convergence_table(cfg, args.levels)
    out = Path(args.out) if args.out else cfg.output_dir / f"{cfg.prefix}_convergence.csv"
    write_table(out, ["dt", "steps", "error", "observed_order"], report["rows"])
    print(json.dumps({"reference": report["reference"], "fitted_order": report["fitted_order"], "table": str(out)}))
    return EXIT_OK


def cmd_demo(args) -> int:
    data = json.loads(json.dumps(DEMOS[args.name]))
    cfg = config_from_dict(data, ".", f"demo {args.name}")
    out_dir = args.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "."
    cfg = replace(cfg, output_dir=Path(out_dir))
    meta = run_config(cfg)
    print(json.dumps({k: meta[k] for k in ("method", "forcing", "residual_relative", "residual_ok", "files")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracduhamel",
        description="Time-fractional Cauchy problems on periodic grids via the fractional Duhamel principle.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the problem described by a JSON config")
    p.add_argument("config")
    p.add_argument("--out-dir", help=f"output directory (overrides the config and ${OUTPUT_DIR_ENV})")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("ml", help="tabulate E_{alpha,beta}(z) over real z")
    p.add_argument("alpha", type=float)
    p.add_argument("beta", type=float)
    p.add_argument("range", help="start:stop:step (inclusive) or a comma list such as -1,0,1")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_ml)

    p = sub.add_parser("fracop", help="apply J, caputo or rl of a given order to a sampled series")
    p.add_argument("op", choices=["J", "caputo", "rl"])
    p.add_argument("order", type=float)
    p.add_argument("input", help="CSV with columns t,value or t,re,im on a uniform grid from 0")
    p.add_argument("output")
    p.set_defaults(func=cmd_fracop)

    p = sub.add_parser("convergence", help="error versus dt over successive step halvings")
    p.add_argument("config")
    p.add_argument("levels", type=int)
    p.add_argument("--out", help="report CSV path")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("demo", help="run a built-in example")
    p.add_argument("name", choices=sorted(DEMOS))
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver error [{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, TableFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
