"""Command-line entry point.

Subcommands:
    run           sweep methods x M x seeds from a config file
    theory-check  run the Gaussian-divergence property sweeps
    bench-scaling time the objective+gradient across training sizes
    report        re-render SVG charts from an existing results CSV

Exit codes: 0 all cells ok, 2 partial cell failures, 1 config/IO error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .divergences import (
    GaussianNd,
    example1_closed_forms,
    kl_gaussian,
    prop1_construct,
    prop3_bound_check,
    w2_gaussian,
)
from .errors import ConfigError, PfgpError
from .experiment import ResultRow, bench_scaling, parse_config, run_experiment


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    if args.seed is not None:
        config.seeds = (args.seed,)
    if args.validation_mode:
        config.validation_mode = True
    if args.emit_svg:
        config.emit_svg = True
    result = run_experiment(config)
    ok = sum(1 for r in result.rows if r.status == "ok")
    print(f"{ok}/{len(result.rows)} cells ok -> {result.results_csv}")
    for r in result.rows:
        if r.status != "ok":
            print(f"  FAILED {r.dataset}/{r.method}/M={r.M}/seed={r.seed}: {r.status}")
    return 2 if result.any_failed else 0


def theory_checks(rng_seed: int = 0):
    """All divergence sweeps as (name, passed, detail) rows."""
    rng = np.random.default_rng(rng_seed)
    checks = []

    eta = prop1_construct(5.0, 0.0, 1.0)
    nu_t = GaussianNd([0.0], [[1.0]])
    kl = kl_gaussian(nu_t, eta)
    shift = abs(eta.mean[0]) / 1.0
    checks.append(("kl-pathology-construction",
                   abs(kl - 5.0) < 1e-10 and abs(shift - math.sqrt(math.expm1(10.0))) < 1e-6,
                   f"KL={kl:.12f}, |mean shift|/std={shift:.4f}"))

    worst = 0.0
    ok = True
    for _ in range(500):
        a = GaussianNd([rng.normal()], [[rng.uniform(0.1, 3.0) ** 2]])
        b = GaussianNd([rng.normal()], [[rng.uniform(0.1, 3.0) ** 2]])
        w2 = w2_gaussian(a, b)
        mean_gap = abs(a.mean[0] - b.mean[0])
        std_gap = abs(math.sqrt(a.cov[0, 0]) - math.sqrt(b.cov[0, 0]))
        ok &= mean_gap <= w2 + 1e-12 and std_gap <= 2 * w2 + 1e-12
        worst = max(worst, mean_gap - w2, std_gap - 2 * w2)
    checks.append(("w2-controls-moments-1d", bool(ok), f"max violation {worst:.2e}"))

    ok = True
    margin = np.inf
    for _ in range(100):
        d = int(rng.integers(1, 5))
        A = rng.normal(size=(d, d))
        B = rng.normal(size=(d, d))
        a = GaussianNd(rng.normal(size=d), A @ A.T + 0.1 * np.eye(d))
        b = GaussianNd(rng.normal(size=d), B @ B.T + 0.1 * np.eye(d))
        res = prop3_bound_check(a, b, 2.0)
        ok &= res.lhs <= res.rhs + 1e-10
        if res.lhs > 0:
            margin = min(margin, res.rhs / res.lhs)
    checks.append(("score-distance-bounds-w2", bool(ok), f"min rhs/lhs {margin:.3f}"))

    ok = True
    for t in (0.5, 1.0, 2.0):
        for tt in (-1.0, 0.0, 1.5):
            for s2 in (1.0, 0.1, 0.01):
                vals = example1_closed_forms(t, tt, s2)
                ok &= abs(vals.pf - vals.w2) <= 1e-10 * max(vals.w2, 1.0)
    ratios = [example1_closed_forms(1.0, 0.0, s2).fisher_over_w2 for s2 in (1.0, 0.1, 0.01)]
    expected = [2.0, 11.0, 101.0]
    ok &= all(abs(r / e - ratios[0] / expected[0]) < 1e-8
              for r, e in zip(ratios, expected))
    checks.append(("single-datum-identities", bool(ok),
                   f"fisher/w2 ratios {ratios[0]:g}:{ratios[1]:g}:{ratios[2]:g}"))
    return checks


def _cmd_theory_check(_args) -> int:
    checks = theory_checks()
    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, passed, detail in checks:
        mark = "PASS" if passed else "FAIL"
        failed += 0 if passed else 1
        print(f"{name:<{width}}  {mark}  {detail}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 2


def _cmd_bench_scaling(args) -> int:
    n_grid = tuple(int(v) for v in args.n_grid.split(","))
    points, slope = bench_scaling(n_grid=n_grid, m=args.m, aux_size=args.aux_size,
                                  repeats=args.repeats, seed=args.seed or 0)
    print(f"{'N':>8}  {'seconds':>12}")
    for p in points:
        print(f"{p.n:>8}  {p.seconds:>12.6f}")
    print(f"log-log slope: {slope:.3f}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["n,seconds"] + [f"{p.n},{p.seconds!r}" for p in points]
        (out / "bench_scaling.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_report(args) -> int:
    from .report import emit_report
    rows = []
    text = Path(args.results).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    for line in text[1:]:
        if not line.strip():
            continue
        vals = dict(zip(header, line.split(",")))
        rows.append(ResultRow(
            dataset=vals["dataset"], method=vals["method"],
            M=int(vals["M"]), seed=int(vals["seed"]),
            mean_rmse=float(vals["mean_rmse"]) if vals["mean_rmse"] else math.nan,
            std_rmse=float(vals["std_rmse"]) if vals["std_rmse"] else math.nan,
            pred_rmse=float(vals["pred_rmse"]) if vals["pred_rmse"] else math.nan,
            kl_to_exact=float(vals["kl_to_exact"]) if vals["kl_to_exact"] else math.nan,
            objective_final=float(vals["objective_final"]) if vals["objective_final"] else None,
            eps_bound=float(vals["eps_bound"]) if vals["eps_bound"] else None,
            wall_time_seconds=float(vals["wall_time_seconds"] or 0.0),
            status=vals.get("status", "ok"),
        ))
    written = emit_report(rows, args.out_dir or Path(args.results).parent)
    for path in written:
        print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pfgp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out-dir")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--validation-mode", action="store_true")
    run_p.add_argument("--emit-svg", action="store_true")
    run_p.set_defaults(fn=_cmd_run)

    theory_p = sub.add_parser("theory-check", help="run divergence property sweeps")
    theory_p.set_defaults(fn=_cmd_theory_check)

    bench_p = sub.add_parser("bench-scaling", help="time objective+gradient across N")
    bench_p.add_argument("--n-grid", default="1000,2000,4000,8000")
    bench_p.add_argument("--m", type=int, default=20)
    bench_p.add_argument("--aux-size", type=int, default=100)
    bench_p.add_argument("--repeats", type=int, default=3)
    bench_p.add_argument("--seed", type=int)
    bench_p.add_argument("--out-dir")
    bench_p.set_defaults(fn=_cmd_bench_scaling)

    report_p = sub.add_parser("report", help="render SVG charts from a results CSV")
    report_p.add_argument("--results", required=True)
    report_p.add_argument("--out-dir")
    report_p.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PfgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
