"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 failed check.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import config as cfg
from .csvio import (DataError, atomic_write, design_to_panel_data, dump_panel_csv, format_table,
                    provenance, read_panel_csv, rejection_csv, rejection_rows, to_json)
from .diagnostics import assumption_terms
from .estimators import METHODS
from .kernels import KernelSpec
from .linalg import IllConditionedError, spectral_norm
from .panel import DEFAULT_ALPHA_GRID, balanced_panel, concentration_report
from .regression import (ConvergenceError, NegativeVarianceError, ols_fit, resolve_kernel,
                         sandwich, within_transform)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _csv_list(text: str, cast=str) -> list:
    try:
        return [cast(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"could not parse list {text!r}") from None


def _methods(text: str) -> list[str]:
    methods = _csv_list(text)
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    return methods


def _emit(args, doc: dict) -> None:
    if getattr(args, "out", None):
        atomic_write(args.out, to_json(doc))


# --- estimate ----------------------------------------------------------------

def cmd_estimate(args) -> int:
    data = read_panel_csv(args.csv)
    design = data.design()
    if args.within:
        design = within_transform(design)
    intercept = args.intercept == "on" or (args.intercept == "auto" and not args.within)
    if intercept:
        design = design.with_intercept()
    fit = ols_fit(design)
    methods = _methods(args.methods)

    if args.bandwidth == "auto":
        kernel = resolve_kernel(fit, "auto")
        kernel = KernelSpec(args.kernel, kernel.bandwidth)
    else:
        try:
            kernel = KernelSpec(args.kernel, int(args.bandwidth))
        except ValueError:
            raise UsageError("--bandwidth must be 'auto' or a nonnegative integer") from None

    columns = []
    for m in methods:
        if m == "CHS" and not args.chs_drop_adjustment:
            columns += [("CHS", m, False), ("CHS-drop", m, True)]
        elif m == "CHS":
            columns.append(("CHS-drop", m, True))
        else:
            columns.append((m, m, False))

    results, failures = {}, {}
    for label, m, drop in columns:
        try:
            results[label] = sandwich(fit, m, kernel, drop)
        except NegativeVarianceError as exc:
            failures[label] = str(exc)

    header = ["", "estimate", *[c[0] for c in columns]]
    rows = []
    for j, name in enumerate(fit.names):
        row = [name, f"{fit.beta[j]:.4f}"]
        for label, _, _ in columns:
            row.append(f"{results[label].se[j]:.4f}" if label in results else "n/a")
        rows.append(row)
    sys.stdout.write(format_table(header, rows))
    sys.stdout.write(f"kernel={kernel.kind} M={kernel.bandwidth} "
                     f"({'auto' if args.bandwidth == 'auto' else 'fixed'}) "
                     f"within={'on' if args.within else 'off'} "
                     f"intercept={'on' if intercept else 'off'} n={design.panel.n} "
                     f"G={design.panel.G} T={design.panel.T}\n")
    for label, msg in failures.items():
        sys.stdout.write(f"{label}: FAILED {msg}\n")

    _emit(args, {
        "command": "estimate", "input": os.path.abspath(args.csv), "versions": provenance(),
        "options": {"methods": methods, "kernel": kernel.to_dict(),
                    "bandwidth": args.bandwidth, "within": args.within,
                    "intercept": intercept, "chs_drop_adjustment": args.chs_drop_adjustment},
        "n": design.panel.n, "G": design.panel.G, "T": design.panel.T,
        "beta": dict(zip(fit.names, fit.beta.tolist())),
        "results": {k: v.to_dict() for k, v in results.items()},
        "failures": failures,
    })
    return EXIT_OK if results else EXIT_DATA


# --- simulate ----------------------------------------------------------------

def _seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(cfg.SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{cfg.SEED_ENV}={env!r} is not an integer") from None
    return None


def cmd_simulate(args) -> int:
    from .simulation import run_monte_carlo

    doc = cfg.load(args.config)
    configs = cfg.simulation_configs(doc, args.reps, _seed(args))
    reports = []
    for c in configs:
        reports.append(run_monte_carlo(c, workers=args.threads, with_oracle=args.oracle))
    header, rows = rejection_rows(reports)
    table = format_table(header, rows)
    sys.stdout.write(table)
    outputs = doc.get("outputs", {})
    json_path = args.out or outputs.get("json")
    csv_path = args.csv or outputs.get("csv")
    if json_path:
        atomic_write(json_path, to_json({
            "command": "simulate", "versions": provenance(), "config": doc,
            "seed": configs[0].master_seed, "replications": configs[0].replications,
            "reports": [r.to_dict() for r in reports]}))
    if csv_path:
        atomic_write(csv_path, rejection_csv(reports))
    if outputs.get("table"):
        atomic_write(outputs["table"], table)
    return EXIT_OK


def cmd_draw(args) -> int:
    """Write one simulated replication as a panel CSV."""
    from .simulation import SimulationConfig, simulate_panel

    c = SimulationConfig(G=args.G, T=args.T, rho=args.rho, het_pattern=args.het_pattern,
                         master_seed=_seed(args) or 0, replications=1)
    text = dump_panel_csv(design_to_panel_data(simulate_panel(c, args.rep)))
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- check -------------------------------------------------------------------

def _line(ok: bool, text: str) -> bool:
    sys.stdout.write(f"{'PASS' if ok else 'FAIL'}  {text}\n")
    return ok


def check_example1() -> bool:
    from .oracle import example1_gap

    d1, d2 = example1_gap([0.5, -1.0, 0.5])
    ok = _line(d1 == -0.5, f"plug-in gap: D1(0.5,-1,0.5) = {d1:g} (expected -0.5); D2 = {d2:g}")
    rng = np.random.default_rng(1)
    worst = min(example1_gap(m)[1] for m in rng.normal(0, 3, (10_000, 3)))
    return _line(worst >= 0, f"plug-in gap: min D2 over 10000 random means = {worst:.4g} (>= 0)") and ok


def check_example3() -> bool:
    from .oracle import ComponentDgp, chs_mean_decomposition, v_chs_estimand, v_true

    table1 = np.array([[-1, -1, 1, 1], [1, -1, -1, 1]], dtype=float).ravel()
    d = ComponentDgp(balanced_panel(2, 4), table1, 0.0, 0.0, 0.0, 0.0)
    k = KernelSpec("uniform", 1)
    gap = float((v_chs_estimand(d, k) - v_true(d))[0, 0])
    dec = chs_mean_decomposition(d, k)
    terms = tuple(float(dec[key][0, 0]) for key in ("cluster", "time", "cell", "serial", "within"))
    ok = _line(gap == -4.0, f"2x4 sign table: CHS estimand - true variance = {gap:g} (expected -4)")
    return _line(terms == (0.0, 4.0, 8.0, -3.0, -3.0),
                 f"2x4 sign table: mean terms {tuple(round(t, 12) for t in terms)} "
                 f"(expected (0, 4, 8, -3, -3))") and ok


def check_example4() -> bool:
    from .oracle import ComponentDgp, v_true

    ok = True
    for T in range(2, 11):
        val = float(v_true(ComponentDgp.zero_mean(balanced_panel(T, T)))[0, 0])
        want = 2 * T ** 3 - 3 * T ** 2
        ok = _line(val == want, f"G=T closed form: T={T} true variance = {val:g} "
                                f"(expected 2T^3-3T^2 = {want})") and ok
    return ok


def check_props(trials: int = 200, seed: int = 7) -> bool:
    from .linalg import sym_eigen_min
    from .oracle import random_component_dgp, v_adj, v_con_estimand

    rng = np.random.default_rng(seed)
    passed = 0
    worst = np.inf
    for _ in range(trials):
        d, k = random_component_dgp(rng)
        vc = v_con_estimand(d, k)
        gap = sym_eigen_min(vc - v_adj(d, k)) / max(spectral_norm(vc), 1e-300)
        worst = min(worst, gap)
        passed += gap >= -1e-10
    return _line(passed == trials, f"conservative PSD: {passed}/{trials} PSD "
                                   f"(worst scaled min eigenvalue {worst:.3g})")


def cmd_check(args) -> int:
    which = args.examples
    checks = {"1": check_example1, "3": check_example3, "4": check_example4}
    ok = True
    for key in (["1", "3", "4"] if which == "all" else [which]):
        ok = checks[key]() and ok
    if args.props:
        ok = check_props() and ok
    return EXIT_OK if ok else EXIT_CHECK


# --- diagnose ----------------------------------------------------------------

def cmd_diagnose(args) -> int:
    data = read_panel_csv(args.csv, require_outcome=False)
    p = data.panel
    if args.s_max < 0:
        raise UsageError("--s-max must be nonnegative")
    m_values = _csv_list(args.m, int)
    k_values = _csv_list(args.k, float)
    grid = DEFAULT_ALPHA_GRID if args.alpha_grid is None else _csv_list(args.alpha_grid, float)
    if any(m < 0 for m in m_values) or any(k <= 0 for k in k_values):
        raise UsageError("--m values must be nonnegative and --k values positive")
    if any(a <= 1 for a in grid) or not grid:
        raise UsageError("--alpha-grid points must exceed 1")
    rep = concentration_report(p, range(args.s_max + 1), m_values, k_values, grid)
    rows = []
    for s in range(args.s_max + 1):
        for m in m_values:
            for k in k_values:
                rows.append([str(s), str(m), f"{k:g}", f"{rep.delta_boundary[(s, k)]:.6g}",
                             f"{rep.delta_window[(s, m, k)]:.6g}", f"{rep.cost[(s, m, k)]:.6g}"])
    sys.stdout.write(f"n={p.n} G={p.G} T={p.T}\n")
    sys.stdout.write(format_table(["s", "m", "k", "delta_boundary", "delta_window", "cost"], rows))

    m_n = args.m_n if args.m_n is not None else max(1, math.ceil(p.T ** (1 / 3)))
    M = args.bandwidth if args.bandwidth is not None else m_n
    if M >= p.T and M > 0:
        raise UsageError(f"--bandwidth {M} must be below T={p.T}")
    terms = assumption_terms(p, args.rho_theta, args.p, m_n, KernelSpec(args.kernel, M),
                             args.lambda_n, grid)
    sys.stdout.write(f"\nrate expressions (theta_s = {args.rho_theta:g}^s, p={args.p:g}, "
                     f"m_n={m_n}, M={M}, lambda_n={terms.lambda_n:.6g})\n")
    sys.stdout.write(format_table(["condition", "value"],
                                  [[name, f"{val:.6g}"] for name, val in terms.as_rows()]))
    _emit(args, {
        "command": "diagnose", "input": os.path.abspath(args.csv), "versions": provenance(),
        "n": p.n, "G": p.G, "T": p.T, "alpha_grid": rep.alpha_grid,
        "concentration": [dict(zip(["s", "m", "k", "delta_boundary", "delta_window", "cost"],
                                   [int(r[0]), int(r[1]), float(r[2]),
                                    rep.delta_boundary[(int(r[0]), float(r[2]))],
                                    rep.delta_window[(int(r[0]), int(r[1]), float(r[2]))],
                                    rep.cost[(int(r[0]), int(r[1]), float(r[2]))]]))
                          for r in rows],
        "rate_expressions": {"rho_theta": args.rho_theta, "p": args.p, "m_n": m_n,
                             "bandwidth": M, "lambda_n": terms.lambda_n,
                             "values": dict(terms.as_rows())},
    })
    return EXIT_OK


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmvar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="OLS with standard errors from every variance method")
    est.add_argument("csv")
    est.add_argument("--methods", default=",".join(METHODS))
    est.add_argument("--kernel", choices=["triangular", "uniform"], default="triangular")
    est.add_argument("--bandwidth", default="auto", help="'auto' or an integer lag")
    est.add_argument("--within", action="store_true", help="remove cluster and period effects")
    est.add_argument("--intercept", choices=["auto", "on", "off"], default="auto")
    est.add_argument("--chs-drop-adjustment", action="store_true",
                     help="report only the CHS variant without the double-counting correction")
    est.add_argument("--out", help="JSON report path")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="Monte Carlo rejection rates")
    sim.add_argument("config", help="run config JSON path, or 'table2' for the bundled campaign")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--seed", type=int, help=f"master seed (overrides ${cfg.SEED_ENV})")
    sim.add_argument("--threads", type=int, default=1, help="worker processes")
    sim.add_argument("--out", help="JSON report path")
    sim.add_argument("--csv", help="CSV export of the rejection table")
    sim.add_argument("--oracle", action="store_true",
                     help="include the exact score-sum variance in each report")
    sim.set_defaults(func=cmd_simulate)

    draw = sub.add_parser("draw", help="write one simulated panel as CSV")
    draw.add_argument("--G", type=int, default=50)
    draw.add_argument("--T", type=int, default=100)
    draw.add_argument("--rho", type=float, default=0.25)
    draw.add_argument("--het-pattern", default="checkerboard",
                      choices=["checkerboard", "time-alternating", "none"])
    draw.add_argument("--rep", type=int, default=0)
    draw.add_argument("--seed", type=int)
    draw.add_argument("--out")
    draw.set_defaults(func=cmd_draw)

    chk = sub.add_parser("check", help="analytic examples and property checks")
    chk.add_argument("--examples", choices=["all", "1", "3", "4"], default="all",
                     help="1: T=3 plug-in gap, 3: 2x4 sign table, 4: G=T closed form")
    chk.add_argument("--props", action="store_true", help="randomized PSD trials")
    chk.set_defaults(func=cmd_check)

    dia = sub.add_parser("diagnose", help="neighborhood concentration and rate expressions")
    dia.add_argument("csv")
    dia.add_argument("--s-max", type=int, default=2)
    dia.add_argument("--m", default="2", help="comma-separated window ends")
    dia.add_argument("--k", default="1,2", help="comma-separated exponents")
    dia.add_argument("--alpha-grid", help="comma-separated Hölder exponents (> 1)")
    dia.add_argument("--rho-theta", type=float, default=0.5)
    dia.add_argument("--p", type=float, default=8.0, help="moment order (> 4)")
    dia.add_argument("--m-n", type=int, help="CLT truncation distance (default ceil(T^(1/3)))")
    dia.add_argument("--bandwidth", type=int, help="estimator bandwidth M (default m_n)")
    dia.add_argument("--kernel", choices=["triangular", "uniform"], default="triangular")
    dia.add_argument("--lambda-n", type=float)
    dia.add_argument("--out", help="JSON report path")
    dia.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, cfg.ConfigError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (DataError, IllConditionedError, ConvergenceError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
