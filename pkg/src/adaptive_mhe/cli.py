"""Command-line interface.

    adaptive-mhe bench    [--config F] [--trials N] [--seed S] [--scenario X] ...
    adaptive-mhe estimate LOG [--config F] [--variant V] [--out DIR]
    adaptive-mhe loss     [--alpha A ...] [--c C] [--r-max R] [--out DIR]
    adaptive-mhe plot     [--config F] [--out DIR] [--scenario X]

Settings resolve as command-line flag > ``ADAPTIVE_MHE_OUT`` (output
directory only) > config file > built-in defaults. Exit status: 0 on
success, 1 for configuration or input errors, 2 for runtime failures
(including any failed trial).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import report
from .bench import (aggregate, check_paired, run_estimator, run_scenario,
                    squared_errors)
from .config import (ConfigError, Config, default_config, dump_config, load_config,
                     scenario_spec, validate)
from .mhe import SolverFailure
from .robust_loss import phi, rho

ENV_OUT = "ADAPTIVE_MHE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("adaptive_mhe")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _common(p, *, scenario=True, variant=True):
    p.add_argument("--config", type=Path, help="config file (INI sections, key = value)")
    p.add_argument("--out", help=f"output directory (env {ENV_OUT}; config bench.out)")
    p.add_argument("--seed", type=int, help="base seed (bench.seed)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    if scenario:
        p.add_argument("--scenario", action="append", choices=("normal", "uniform"),
                       help="scenario to run (bench.scenarios); repeatable")
    if variant:
        p.add_argument("--variant", action="append",
                       help="variant name(s) from the config (variants.names); "
                            "repeatable or comma separated")


def build_parser():
    parser = argparse.ArgumentParser(prog="adaptive-mhe", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the Monte-Carlo comparison")
    _common(b)
    b.add_argument("--trials", type=int, help="trials per scenario (bench.trials)")
    b.add_argument("--full-scale", action="store_true", default=None,
                   help="use bench.full_scale_trials (1000 by default)")
    b.add_argument("--workers", type=int, help="worker processes (bench.workers)")
    b.add_argument("--dump", action="store_true", default=None,
                   help="also write trajectory logs and estimates per trial (bench.dump)")
    b.add_argument("--print-config", action="store_true",
                   help="print the effective configuration and exit")

    e = sub.add_parser("estimate", help="re-run estimators on a trajectory log")
    _common(e)
    e.add_argument("log", type=Path, help="trajectory CSV written by `bench --dump`")
    e.add_argument("--jsonl", type=Path,
                   help="diagnostics file (default <out>/estimate/<log stem>.jsonl)")

    lo = sub.add_parser("loss", help="tabulate and plot rho and phi")
    _common(lo, scenario=False, variant=False)
    lo.add_argument("--alpha", type=float, action="append",
                    help="shape parameter(s); default 1.1, 1.5, 1.9")
    lo.add_argument("--c", type=float, default=1.0, help="scale (default 1)")
    lo.add_argument("--r-max", type=float, default=5.0, help="grid half-width (default 5)")
    lo.add_argument("--points", type=int, default=201, help="grid points (default 201)")

    pl = sub.add_parser("plot", help="summary table and plots from bench results")
    _common(pl, variant=False)
    return parser


# --- configuration --------------------------------------------------------------

def resolve_config(args, environ=None) -> Config:
    """Defaults, then the file, then the environment, then flags."""
    environ = os.environ if environ is None else environ
    cfg = load_config(args.config) if args.config else default_config()
    if environ.get(ENV_OUT):
        cfg.set("bench.out", environ[ENV_OUT])
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value.strip())
    flags = {
        "bench.out": args.out,
        "bench.seed": args.seed,
        "bench.trials": getattr(args, "trials", None),
        "bench.full_scale": getattr(args, "full_scale", None),
        "bench.workers": getattr(args, "workers", None),
        "bench.dump": getattr(args, "dump", None),
        "bench.scenarios": getattr(args, "scenario", None),
    }
    variants = getattr(args, "variant", None)
    if variants:
        flags["variants.names"] = [n for v in variants for n in _csv_list(v)]
    for key, value in flags.items():
        if value is not None:
            cfg.set(key, value)
    validate(cfg)
    return cfg


# --- commands -------------------------------------------------------------------

def cmd_bench(args, cfg: Config):
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    out = Path(cfg["bench"]["out"])
    workers = cfg["bench"]["workers"]
    tables, failed = {}, 0
    for scenario in cfg["bench"]["scenarios"]:
        spec = scenario_spec(cfg, scenario)
        log.info("scenario %s: %d trials, %d variants", scenario, spec.trials,
                 len(spec.variants))

        def dump(data, scenario=scenario):
            report.write_trajectory(report.trajectory_file(out, scenario, data.trial), data)
            for label, est in data.estimates.items():
                report.write_estimates(
                    report.estimate_file(out, scenario, data.trial, label), est)

        by_variant = run_scenario(
            spec, workers=workers,
            progress=lambda t: log.debug("trial %d done", t),
            on_data=dump if cfg["bench"]["dump"] else None)
        if not check_paired(by_variant):
            raise RuntimeError("variants did not see identical measurement sequences")
        summaries = {}
        for label, metrics in by_variant.items():
            failed += sum(m.failed for m in metrics)
            try:
                summaries[label] = aggregate(metrics)
            except ValueError:
                summaries[label] = None
        report.emit_scenario(out, scenario, by_variant, summaries)
        tables[scenario] = {k: s for k, s in summaries.items() if s is not None}
    report.write_summary(out / "summary.md", tables, cfg.variant_names())
    sys.stdout.write(report.summary_markdown(tables, cfg.variant_names()))
    if failed:
        log.error("%d variant runs failed; see the 'failed' column of trials.csv", failed)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_estimate(args, cfg: Config):
    try:
        data = report.read_trajectory(args.log)
    except FileNotFoundError:
        raise ConfigError(f"trajectory log not found: {args.log}") from None
    except report.ParseError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = scenario_spec(cfg, cfg["bench"]["scenarios"][0])
    target = args.jsonl or Path(cfg["bench"]["out"]) / "estimate" / f"{args.log.stem}.jsonl"
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8") as fh:
        for variant in spec.variants:
            def record(k, sol, label=variant.label):
                fh.write(json.dumps({
                    "variant": label, "k": k,
                    "inner_iterations": int(sol.inner_iterations),
                    "cost_trace": [float(c) for c in sol.cost_trace],
                    "alpha": sol.alpha.tolist(),
                    "state": sol.current.tolist(),
                }) + "\n")

            estimates, _, _, _ = run_estimator(spec, variant, data.measurements,
                                               data.controls, data.prior, on_step=record)
            sq, pos = squared_errors(estimates, data.states)
            psi, delta = float(np.mean(sq)), float(np.mean(pos))
            fh.write(json.dumps({"variant": variant.label, "psi": psi, "delta": delta}) + "\n")
            print(f"{variant.label}: psi={psi!r} delta={delta!r}")
    log.info("wrote %s", target)
    return EXIT_OK


def loss_table(alpha, c, r):
    return np.column_stack([r, rho(r, alpha, c), phi(r, alpha, c)])


def cmd_loss(args, cfg: Config):
    alphas = args.alpha or [1.1, 1.5, 1.9]
    if not args.c > 0:
        raise ConfigError("--c: scale must be positive")
    if not args.r_max > 0 or args.points < 2:
        raise ConfigError("--r-max must be positive and --points at least 2")
    for a in alphas:
        if not 1.0 < a < 2.0:
            raise ConfigError(f"--alpha: {a} outside (1, 2)")
    out = Path(cfg["bench"]["out"]) / "loss"
    r = np.linspace(-args.r_max, args.r_max, args.points)
    curves = {}
    for a in alphas:
        table = loss_table(a, args.c, r)
        report.write_rows(out / f"loss_alpha{a:g}.csv", ("r", "rho", "phi"),
                           [[repr(float(v)) for v in row] for row in table])
        curves[a] = (table[:, 1], table[:, 2])
    report.plot_loss(out / "loss.svg", r, curves, args.c)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_plot(args, cfg: Config):
    out = Path(cfg["bench"]["out"])
    tables = {}
    for scenario in cfg["bench"]["scenarios"]:
        try:
            by_variant = report.load_scenario(out, scenario)
        except FileNotFoundError as exc:
            log.warning("%s", exc)
            continue
        summaries = {k: aggregate(v) for k, v in by_variant.items()
                     if any(not m.failed for m in v)}
        tables[scenario] = summaries
        curves = {k: s.iteration_curve for k, s in summaries.items() if s.iteration_curve.size}
        if curves:
            report.plot_iteration_curves(out / scenario / "iteration_curve.svg", curves,
                                         title=scenario)
        for path in report.list_dumps(out, scenario):
            data = report.read_trajectory(path)
            estimates = {}
            for label in by_variant:
                f = report.estimate_file(out, scenario, data.trial, label)
                if f.is_file():
                    estimates[label] = report.read_estimates(f)
            report.plot_trajectory(path.with_suffix(".svg"), data, estimates,
                                   title=f"{scenario}, trial {data.trial}")
    if not tables:
        raise ConfigError(f"no bench results found under {out}")
    report.write_summary(out / "summary.md", tables, cfg.variant_names())
    sys.stdout.write(report.summary_markdown(tables, cfg.variant_names()))
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "estimate": cmd_estimate, "loss": cmd_loss, "plot": cmd_plot}


def main(argv=None, environ=None):
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = resolve_config(args, environ)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, report.ParseError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (SolverFailure, RuntimeError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
