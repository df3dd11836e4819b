"""Acceptance criteria, one test and one printed pass/fail line each."""
import json
import math
import time

import jsonschema
import numpy as np
from scipy import special

from fracduhamel import cli
from fracduhamel.csvio import read_solution
from fracduhamel.fractime import (
    FractionalOrder,
    Polynomial,
    TimeGrid,
    TimeSeries,
    caputo,
    check_shift_relation,
    frac_integral,
)
from fracduhamel.mittag_leffler import MittagLefflerError, ml_array
from fracduhamel.solver import (
    classic_duhamel_check,
    duhamel_solution,
    full_solve,
    neumann_series_solution,
    residual_norm,
    voc_oracle,
)

from support import METADATA_SCHEMA, problem, rel_l2, start_derivative


def _max_rel(got, want):
    got, want = np.asarray(got), np.asarray(want)
    return float(np.max(np.abs(got - want) / np.abs(want)))


def test_mittag_leffler_identities(criterion):
    started = time.perf_counter()
    x = np.linspace(-20, 20, 81)
    err_exp = _max_rel(ml_array(1, 1, x), np.exp(x))

    y = np.linspace(0.1, 10, 100)
    err_cos = _max_rel(ml_array(2, 1, -(y**2)), np.cos(y))

    # finite-valued points of |z| <= 50; E grows like exp(z^(1/alpha)) on the
    # positive axis and overflows double range there for small alpha
    zs = np.concatenate([np.linspace(-50, 50, 41), 50 * np.exp(1j * np.linspace(0.3, 3.0, 10)),
                         10 * np.exp(1j * np.linspace(-3.0, 3.0, 13))])
    err_rec = 0.0
    skipped = 0
    for alpha in (0.3, 0.5, 1.5):
        for beta in (1.0, 2.0):
            for z in zs:
                try:
                    lhs = ml_array(alpha, beta, [z])[0]
                    rhs = 1 / math.gamma(beta) + z * ml_array(alpha, alpha + beta, [z])[0]
                except MittagLefflerError:
                    skipped += 1
                    continue
                if not (np.isfinite(lhs) and abs(lhs) < 1e300):
                    skipped += 1
                    continue
                err_rec = max(err_rec, abs(lhs - rhs) / abs(lhs))

    w = np.linspace(-5, 20, 101)
    err_erfc = _max_rel(ml_array(0.5, 1, -w), special.erfcx(w))
    elapsed = time.perf_counter() - started

    ok = err_exp <= 1e-10 and err_cos <= 1e-10 and err_rec <= 1e-10 and err_erfc <= 1e-8 and elapsed < 2
    criterion(
        1, ok,
        f"exp {err_exp:.1e}, cos {err_cos:.1e}, recurrence {err_rec:.1e} ({skipped} overflow points skipped), "
        f"erfc {err_erfc:.1e}; {elapsed:.2f} s",
    )
    assert ok


def test_l1_caputo_power_rule(criterion):
    order = FractionalOrder(0.5)
    exact = math.gamma(3) / math.gamma(2.5)
    errs = []
    dts = (4e-3, 2e-3, 1e-3)
    for dt in dts:
        grid = TimeGrid(dt, int(round(1 / dt)))
        d = caputo(TimeSeries(grid, grid.nodes**2), order)
        errs.append(abs(d.values[-1] - exact) / exact)
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    ok = errs[-1] <= 1e-3 and slope >= 2 - 0.5 - 0.1
    criterion(2, ok, f"rel err at t=1 {errs[-1]:.2e}, empirical order {slope:.3f} (need >= 1.4)")
    assert ok


def test_semigroup(criterion):
    grid = TimeGrid(1e-3, 1000)
    t = grid.nodes
    worst = {}
    for name, vals in (("1", np.ones_like(t)), ("t", t), ("t^2", t**2), ("sin t", np.sin(t))):
        f = TimeSeries(grid, vals)
        lhs = frac_integral(frac_integral(f, 0.7), 0.3).values
        rhs = frac_integral(f, 1.0).values
        worst[name] = float(np.max(np.abs(lhs - rhs)))
    ok = max(worst.values()) <= 5e-4
    criterion(3, ok, "sup gaps " + ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()))
    assert ok


def test_shift_relations(criterion):
    fixtures = [
        (Polynomial.of((1, 1.0)), 0.5, 0.0, "caputo"),
        (Polynomial.of((2, 1.0)), 1.5, 0.0, "caputo"),
        (Polynomial.of((0, 1.0)), 0.5, 0.5, "riemann_liouville"),
        (Polynomial.of((2, 1.0)), 1.5, 1.0, "caputo"),
        (Polynomial.of((0, 1.0), (1, -2.0), (2.5, 0.5)), 1.5, 0.25, "riemann_liouville"),
    ]
    worst = 0.0
    forms_ok = True
    for f, alpha, beta, form in fixtures:
        report = check_shift_relation(f, alpha, beta)
        worst = max(worst, report.residual)
        forms_ok &= report.form == form
    ok = worst <= 1e-10 and forms_ok
    criterion(4, ok, f"max catalog residual {worst:.1e} over {len(fixtures)} fixtures; forms as expected: {forms_ok}")
    assert ok


def _power_source_exact(alpha, lam, p, t):
    """Per-mode inhomogeneous part for f = t^p: Gamma(p+1) t^(p+alpha) E_{alpha,p+alpha+1}(lam t^alpha)."""
    return math.gamma(p + 1) * t ** (p + alpha) * ml_array(alpha, p + alpha + 1, lam * t**alpha)


def test_duhamel_matches_series_oracles(criterion):
    started = time.perf_counter()
    gaps = {}
    for alpha in (0.5, 0.8, 1.3, 1.7):
        p = problem(alpha, profile=[(2, 1.0)], steps=2000)
        d = duhamel_solution(p, "caputo").values()
        n = neumann_series_solution(p, n_terms=40).values()
        v = voc_oracle(p).values()
        t = p.horizon.nodes
        exact = np.real(_power_source_exact(alpha, -1.0, 2, t))[:, None] * np.cos(p.grid.coords()[0])[None]
        gaps[alpha] = (rel_l2(d, n), rel_l2(d, v), rel_l2(d, exact))
    elapsed = time.perf_counter() - started
    worst = max(max(g[0], g[1]) for g in gaps.values())
    ok = worst <= 1e-4 and elapsed < 30
    detail = "; ".join(f"a={a}: neumann {g[0]:.1e} voc {g[1]:.1e} closed-form {g[2]:.1e}" for a, g in gaps.items())
    criterion(5, ok, f"{detail}; {elapsed:.1f} s")
    assert ok


def test_riemann_liouville_path(criterion):
    p = problem(0.5, profile=[(0, 1.0)], steps=2000)
    rl = duhamel_solution(p, "riemann_liouville").values()
    gap_voc = rel_l2(rl, voc_oracle(p).values())
    t = p.horizon.nodes
    exact = np.real(_power_source_exact(0.5, -1.0, 0, t))[:, None] * np.cos(p.grid.coords()[0])[None]
    gap_exact = rel_l2(rl, exact)
    agree = 0.0
    for alpha in (0.5, 1.5):
        q = problem(alpha, profile=[(2, 1.0)], steps=2000)
        agree = max(agree, rel_l2(duhamel_solution(q, "caputo").values(),
                                  duhamel_solution(q, "riemann_liouville").values()))
    ok = gap_voc <= 1e-3 and agree <= 1e-6
    criterion(6, ok, f"RL vs voc {gap_voc:.1e} (closed form {gap_exact:.1e}); caputo vs RL with vanishing data {agree:.1e}")
    assert ok


def test_integer_order_recovery(criterion):
    x = None
    # alpha = 1: heat equation with forcing t^2 cos x, plus two initial modes
    p = problem(1.0, initial=[lambda x: np.cos(3 * x) + 0.5 * np.sin(x)], profile=[(2, 1.0)], steps=1000)
    x = p.grid.coords()[0]
    t = p.horizon.nodes[:, None]
    exact = (np.exp(-9 * t) * np.cos(3 * x) + 0.5 * np.exp(-t) * np.sin(x)
             + (t**2 - 2 * t + 2 - 2 * np.exp(-t)) * np.cos(x))
    err_heat = float(np.max(np.abs(full_solve(p).values() - exact)))

    # alpha = 2 homogeneous: d'Alembert modes, mesh-free
    p = problem(2.0, initial=[lambda x: np.cos(3 * x), lambda x: np.sin(2 * x)], t_end=5.0, steps=100)
    t = p.horizon.nodes[:, None]
    exact = np.cos(3 * t) * np.cos(3 * x) + np.sin(2 * t) / 2 * np.sin(2 * x)
    err_wave = float(np.max(np.abs(full_solve(p).values() - exact)))

    heat = classic_duhamel_check(problem(1.0, profile=[(2, 1.0)], steps=1000))
    p = problem(2.0, profile=[(2, 1.0)], steps=1000)
    wave = classic_duhamel_check(p)
    t = p.horizon.nodes[:, None]
    closed = (t**2 - 2 + 2 * np.cos(t)) * np.cos(x)
    wave_closed = float(np.max(np.abs(full_solve(p).values() - closed)))

    ok = err_heat <= 1e-6 and err_wave <= 1e-8 and heat.difference <= 1e-12 and wave.difference <= 1e-6 \
        and wave_closed <= 1e-6
    criterion(
        7, ok,
        f"heat {err_heat:.1e}, wave homogeneous {err_wave:.1e}, classic check m=1 {heat.difference:.1e}, "
        f"m=2 {wave.difference:.1e} (vs closed form {wave_closed:.1e})",
    )
    assert ok


def test_manufactured_solution(criterion):
    coeff = math.gamma(4) / math.gamma(2.5)
    p = problem(1.5, profile=[(1.5, coeff), (3, 1.0)], steps=1000)
    sol = full_solve(p)
    x = p.grid.coords()[0]
    err = float(np.max(np.abs(sol.values()[-1] - np.cos(x))))
    rep = residual_norm(sol, p)
    ok = err <= 1e-3 and rep.max <= 1e-2 * rep.source_max
    criterion(8, ok, f"rel err at t=1 {err:.1e}; residual {rep.max:.1e} vs 1e-2*|f| = {1e-2 * rep.source_max:.1e}")
    assert ok


def test_duhamel_part_initial_conditions(criterion):
    runs = [problem(a, profile=[(2, 1.0)], steps=2000) for a in (0.5, 0.8, 1.3, 1.7)]
    runs.append(problem(0.5, profile=[(0, 1.0)], steps=2000))
    runs += [problem(a, profile=[(2, 1.0)], steps=1000) for a in (1.0, 2.0)]
    runs.append(problem(1.5, profile=[(1.5, math.gamma(4) / math.gamma(2.5)), (3, 1.0)], steps=1000))
    worst = 0.0
    for p in runs:
        v = duhamel_solution(p, "caputo" if p.source.vanishing_initial(p.m) else "riemann_liouville")
        hist = v.values()
        for k in range(p.m):
            est = float(np.max(np.abs(start_derivative(hist, p.horizon.dt, k))))
            worst = max(worst, est / (10 * p.horizon.dt))
    ok = worst <= 1.0
    criterion(9, ok, f"max |d^k v/dt^k(0)| / (10 dt) = {worst:.2e} over {len(runs)} runs")
    assert ok


BAD_CONFIGS = {
    "wrong_initial_count": (
        {"alpha": 1.5, "symbol": "laplacian", "grid": {"points": 16},
         "time": {"t_end": 1.0, "steps": 50}, "initial": ["cos(x)"]},
        ["expected 2 initial fields (m=2)"],
    ),
    "many_violations": (
        {"alpha": -1, "symbol": "xi +", "grid": {"points": 7},
         "time": {"t_end": 0, "steps": 2}, "initial": ["cos(x"], "method": "euler", "colour": 1},
        ["alpha", "symbol", "grid", "time.t_end", "time.steps", "initial[0]", "method", "unknown top-level keys"],
    ),
}


def test_cli_contract(criterion, tmp_path, capsys):
    problems = []
    for name in ("subdiffusion", "superdiffusion"):
        code = cli.main(["demo", name, "--out-dir", str(tmp_path)])
        if code != 0:
            problems.append(f"demo {name} exit {code}")
            continue
        meta = json.loads((tmp_path / f"{name}.json").read_text())
        try:
            jsonschema.validate(meta, METADATA_SCHEMA)
        except jsonschema.ValidationError as exc:
            problems.append(f"{name} metadata: {exc.message}")
        header, data = read_solution(tmp_path / f"{name}.csv")
        if header != ["t", "x", "re", "im"] or data.shape != (11 * 32, 4) or not np.all(np.isfinite(data)):
            problems.append(f"{name} csv: header {header}, shape {data.shape}")
        if not meta["residual_ok"]:
            problems.append(f"{name} residual {meta['residual_relative']:.2e} above tolerance")
    for name, (cfg, needles) in BAD_CONFIGS.items():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        capsys.readouterr()
        code = cli.main(["solve", str(path)])
        err = capsys.readouterr().err
        missing = [n for n in needles if n not in err]
        if code != 2 or missing:
            problems.append(f"{name}: exit {code}, missing {missing}")
    ok = not problems
    criterion(10, ok, "demos exit 0 with schema-valid outputs; bad configs exit 2 listing every violation"
              if ok else "; ".join(problems))
    assert ok
