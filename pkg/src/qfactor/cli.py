"""Command-line front door.

Subcommands: ``simulate``, ``fit``, ``select-r``, ``benchmark``, ``backtest``.
Every output artifact embeds the resolved configuration and seed, and reruns
with identical flags produce byte-identical files for any ``--threads`` value.

Exit codes: 0 success, 1 I/O error, 2 numerical degeneracy, 3 bad arguments.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io as qio
from .baselines import fit_pca
from .errors import InvalidParameterError, QFactorError
from .panel import PanelData
from .portfolio import BacktestConfig, backtest, contamination_sensitivity
from .rip import RipConfig, fit_rip
from .selection import SelectionConfig, select_factor_number
from .simlab import SCENARIOS, gen_dgp, run_scenario, scenario_config

EXIT_OK = 0
EXIT_IO = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures to exit code 3
        raise _UsageError(message)


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        p_str, t_str = text.lower().split("x")
        return int(p_str), int(t_str)
    except ValueError as exc:
        raise _UsageError(f"--dims expects PxT, got {text!r}") from exc


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qfactor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a panel from a named scenario")
    sim.add_argument("--scenario", required=True, choices=SCENARIOS)
    sim.add_argument("--dims", required=True, help="panel size as PxT, e.g. 150x100")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--alpha", type=float, default=1.5, help="stable tail index")
    sim.add_argument("--nu", type=float, default=3.0, help="t degrees of freedom")
    sim.add_argument("--family", default="gaussian", help="scenario B innovation family")
    sim.add_argument("--tau", type=float, default=0.5,
                     help="quantile level; non-median values shift the panel")
    sim.add_argument("--r", type=int, default=3)
    sim.add_argument("--out", required=True)

    fit = sub.add_parser("fit", help="fit a factor model to a panel CSV")
    fit.add_argument("input")
    fit.add_argument("--method", choices=("rip", "pca"), default="rip")
    fit.add_argument("--r", type=int, required=True)
    fit.add_argument("--tau", type=float, default=0.5)
    fit.add_argument("--starts", type=int, default=5)
    fit.add_argument("--max-iter", type=int, default=100)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True)

    sel = sub.add_parser("select-r", help="estimate the number of factors")
    sel.add_argument("input")
    sel.add_argument("--methods", default="rer,er,ic")
    sel.add_argument("--r-max", type=int, default=8)
    sel.add_argument("--tau", type=float, default=0.5)
    sel.add_argument("--starts", type=int, default=5)
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--out")

    bench = sub.add_parser("benchmark", help="Monte Carlo study of a scenario")
    bench.add_argument("--scenario", required=True, choices=SCENARIOS)
    bench.add_argument("--dims", required=True)
    bench.add_argument("--reps", type=int, default=50)
    bench.add_argument("--methods", default="rip,pca",
                       help="fit methods (rip,pca) and/or selectors (rer,er,ic)")
    bench.add_argument("--tau", type=float, default=0.5)
    bench.add_argument("--r", type=int, default=3)
    bench.add_argument("--r-max", type=int, default=8)
    bench.add_argument("--alpha", type=float, default=1.5)
    bench.add_argument("--nu", type=float, default=3.0)
    bench.add_argument("--family", default="gaussian")
    bench.add_argument("--starts", type=int, default=5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--out", required=True)

    back = sub.add_parser("backtest", help="rolling minimum-variance backtest")
    back.add_argument("input")
    back.add_argument("--window", type=int, default=52)
    back.add_argument("--refit-every", type=int, default=1)
    back.add_argument("--method", choices=("rip", "pca"), default="rip")
    back.add_argument("--r-selection", choices=("fixed", "rer", "er"), default="fixed")
    back.add_argument("--r", type=int, default=1)
    back.add_argument("--r-max", type=int, default=8)
    back.add_argument("--tau", type=float, default=0.5)
    back.add_argument("--starts", type=int, default=5)
    back.add_argument("--seed", type=int, default=0)
    back.add_argument("--contamination", default="",
                      help="comma list of proportions for the sensitivity curve")
    back.add_argument("--contamination-reps", type=int, default=20)
    back.add_argument("--out", required=True)
    return parser


def _cmd_simulate(args) -> int:
    p, T = _parse_dims(args.dims)
    cfg = scenario_config(
        args.scenario, p, T, args.seed, alpha=args.alpha, nu=args.nu,
        family=args.family, tau=args.tau, r=args.r,
    )
    sim = gen_dgp(cfg)
    out = _outdir(args.out)
    qio.write_panel_csv(out / "panel.csv", sim.panel)
    qio.write_matrix_csv(out / "loadings.csv", sim.loadings)
    qio.write_matrix_csv(out / "scores.csv", sim.scores)
    qio.dump_json(out / "meta.json", {"config": asdict(cfg), "command": "simulate"})
    print(f"wrote {p}x{T} panel for scenario {args.scenario} to {out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    panel = qio.read_panel_csv(args.input)
    if args.method == "rip":
        cfg = RipConfig(r=args.r, tau=args.tau, n_starts=args.starts,
                        max_iter=args.max_iter, seed=args.seed)
        fit = fit_rip(panel, cfg)
        config = asdict(cfg)
    else:
        fit = fit_pca(panel, args.r)
        config = {"r": args.r, "method": "pca"}
    out = _outdir(args.out)
    doc = qio.fit_to_dict(fit)
    doc["config"] = {**config, "method": args.method, "seed": args.seed}
    qio.dump_json(out / "fit.json", doc)
    print(
        f"{args.method} fit: r={args.r} loss={fit.loss:.6g} "
        f"iterations={fit.iterations} converged={fit.converged}"
    )
    return EXIT_OK


def _cmd_select_r(args) -> int:
    panel = qio.read_panel_csv(args.input)
    methods = tuple(m.strip().lower() for m in args.methods.split(",") if m.strip())
    cfg = SelectionConfig(r_max=args.r_max, tau=args.tau, methods=methods)
    rip_cfg = RipConfig(r=args.r_max, tau=args.tau, n_starts=args.starts, seed=args.seed)
    report = select_factor_number(panel, cfg, rip_cfg)
    doc = report.to_dict()
    doc["config"] = {"r_max": args.r_max, "tau": args.tau, "methods": list(methods),
                     "seed": args.seed}
    text_pairs = ", ".join(f"{k}={v}" for k, v in report.estimates.items())
    print(f"estimated factor counts: {text_pairs}")
    if args.out:
        out = _outdir(args.out)
        qio.dump_json(out / "selection.json", doc)
    else:
        import json

        print(json.dumps(doc, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    from .report import benchmark_table, save_benchmark_figure, write_benchmark_table

    p, T = _parse_dims(args.dims)
    tokens = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    fit_methods = tuple(m for m in tokens if m in ("rip", "pca"))
    selection_methods = tuple(m for m in tokens if m in ("rer", "er", "ic"))
    leftovers = set(tokens) - set(fit_methods) - set(selection_methods)
    if leftovers:
        raise _UsageError(f"unknown methods: {sorted(leftovers)}")
    report = run_scenario(
        args.scenario, p, T, args.reps,
        fit_methods=fit_methods, selection_methods=selection_methods,
        tau=args.tau, r=args.r, r_max=args.r_max, seed=args.seed,
        alpha=args.alpha, nu=args.nu, family=args.family,
        workers=args.threads, n_starts=args.starts,
    )
    out = _outdir(args.out)
    doc = report.to_dict()
    doc["config"] = {
        "scenario": args.scenario, "dims": f"{p}x{T}", "reps": args.reps,
        "methods": tokens, "tau": args.tau, "r": args.r, "r_max": args.r_max,
        "alpha": args.alpha, "nu": args.nu, "family": args.family,
        "starts": args.starts, "seed": args.seed,
    }
    qio.dump_json(out / "report.json", doc)
    write_benchmark_table(out / "table.csv", report)
    save_benchmark_figure(out / "figure.png", report)
    print(benchmark_table(report))
    return EXIT_OK


def _cmd_backtest(args) -> int:
    from .report import (
        save_contamination_figure,
        save_netvalue_figure,
        write_contamination_csv,
        write_netvalue_csv,
    )

    panel = qio.read_panel_csv(args.input)
    cfg = BacktestConfig(
        window=args.window, refit_every=args.refit_every, method=args.method,
        r_selection=args.r_selection, r=args.r, r_max=args.r_max, tau=args.tau,
        seed=args.seed, n_starts=args.starts,
    )
    result = backtest(panel, cfg)
    out = _outdir(args.out)
    doc = result.to_dict()
    doc["config"] = {**asdict(cfg)}
    qio.dump_json(out / "backtest.json", doc)
    write_netvalue_csv(out / "netvalue.csv", result)
    save_netvalue_figure(out / "netvalue.png", result, label=args.method.upper())
    print(
        f"backtest ({args.method}): {len(result.periods)} periods, "
        f"final net value {result.net_value[-1]:.4f}, "
        f"square R2 {result.r2_square:.4f}, absolute R2 {result.r2_absolute:.4f}"
        + (" [degenerate]" if result.degenerate else "")
    )
    if args.contamination:
        props = [float(x) for x in args.contamination.split(",") if x.strip()]
        curve = contamination_sensitivity(
            panel, props, args.contamination_reps, args.method, args.seed,
            r=args.r, tau=args.tau, n_starts=args.starts,
        )
        qio.dump_json(out / "contamination.json",
                      {"curve": curve.to_dict(), "config": doc["config"]})
        write_contamination_csv(out / "contamination.csv", [curve])
        save_contamination_figure(out / "contamination.png", [curve])
        pairs = ", ".join(
            f"{p_:.3g}:{d:.4f}" for p_, d in zip(curve.proportions, curve.mean_distance)
        )
        print(f"contamination mean distances: {pairs}")
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "select-r": _cmd_select_r,
    "benchmark": _cmd_benchmark,
    "backtest": _cmd_backtest,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QFactorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
