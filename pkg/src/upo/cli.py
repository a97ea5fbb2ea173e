"""Command line entry point: ``upo run | curves | metrics | constants``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from upo.grid import AssumptionViolation, NonUniqueMaximizerError, estimate_assumption_constants
from upo.harness import (
    ConfigError,
    ExperimentConfig,
    build_objective,
    compute_metrics,
    compute_references,
    export_curves,
    format_config,
    format_metrics,
    load_config,
    read_traces,
    run_experiment,
    write_traces,
)
from upo.oracles import convergence_constants
from upo.selectors import SelectorKind

log = logging.getLogger("upo")


def _config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "selector", None):
        wanted = [SelectorKind(n.strip()) for n in args.selector.split(",") if n.strip()]
        known = {s.kind: s for s in config.selectors}
        missing = [k.value for k in wanted if k not in known]
        if missing:
            raise ConfigError(f"selector(s) {missing} not present in the config")
        changes["selectors"] = tuple(known[k] for k in wanted)
    return dataclasses.replace(config, **changes) if changes else config


def cmd_run(args: argparse.Namespace) -> int:
    config = _config(args)
    out = Path(config.out)
    objective = build_objective(config)
    traces = run_experiment(config, objective)
    write_traces(traces.values(), out / "traces.csv")
    refs = compute_references(objective, config.horizon)
    metrics = compute_metrics(traces, refs)
    (out / "metrics.csv").write_text(format_metrics(metrics, refs))
    (out / "config.txt").write_text(format_config(config))
    for m in metrics.values():
        print(
            f"{m.selector:12s} off={m.steps_off_optimum:4d} total={m.total_value:.3f} "
            f"moves={m.perturbation_count:4d} vs_po={m.gain_vs_po:+.2%} "
            f"vs_const={m.gain_vs_constant:+.2%} oracle_gap={m.gap_to_oracle:.2%}"
        )
    print(f"wrote {out / 'traces.csv'}")
    return 0


def cmd_curves(args: argparse.Namespace) -> int:
    config = _config(args)
    ks = [int(k) for k in args.k.split(",") if k.strip()] if args.k else []
    for k in ks:
        if k < 0:
            raise ValueError(f"time steps must be >= 0, got {k}")
    path = export_curves(build_objective(config), ks, Path(config.out) / "curves.csv")
    print(f"wrote {path}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    config = _config(args)
    traces_path = Path(args.traces) if args.traces else Path(config.out) / "traces.csv"
    traces = read_traces(traces_path)
    if getattr(args, "selector", None):
        wanted = [n.strip() for n in args.selector.split(",") if n.strip()]
        traces = {n: traces[n] for n in wanted}
    refs = compute_references(build_objective(config), config.horizon)
    sys.stdout.write(format_metrics(compute_metrics(traces, refs), refs))
    return 0


def cmd_constants(args: argparse.Namespace) -> int:
    config = _config(args)
    objective = build_objective(config)
    upo = next((s for s in config.selectors if s.kind is SelectorKind.UPO), None)
    tau = args.tau if args.tau is not None else (upo.tau if upo else 0.01)
    nu = args.nu_max if args.nu_max is not None else (upo.nu if upo else 3.0)
    assumptions = estimate_assumption_constants(objective, None, config.horizon - 1)
    consts = convergence_constants(assumptions, objective.grid.spacing, tau, config.rho, nu, args.k0)
    print(f"objective    {config.objective}")
    print(f"L_b          {assumptions.L_b!r}")
    print(f"L_k          {assumptions.L_k!r}")
    for f in dataclasses.fields(consts):
        print(f"{f.name:12s} {getattr(consts, f.name)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="upo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log selector warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: config 'out')")
        p.add_argument("--selector", help="comma-separated subset of selectors")

    p = sub.add_parser("run", help="run the configured selectors and write traces and metrics")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("curves", help="write k,u,value rows of the noiseless objective")
    common(p)
    p.add_argument("--k", default="50,150,250", help="comma-separated time steps")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("metrics", help="recompute metrics from a trace file")
    common(p)
    p.add_argument("--traces", help="trace CSV (default: <out>/traces.csv)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("constants", help="assumption and tracking constants for the objective")
    common(p)
    p.add_argument("--tau", type=float)
    p.add_argument("--nu-max", type=float)
    p.add_argument("--k0", type=int, default=1)
    p.set_defaults(func=cmd_constants)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AssumptionViolation, NonUniqueMaximizerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
