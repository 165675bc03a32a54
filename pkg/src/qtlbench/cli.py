"""Command-line front end.

Exit codes: 0 success, 1 run failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys

from .data import save_bundle, synthesize_features
from .errors import ConfigurationError, FormatError, QtlBenchError
from .harness import SweepSpec, load_config, run_experiment, run_sweep
from .metrics import (
    aggregate_runs,
    aggregates_csv,
    aggregates_table,
    run_reports_csv,
    run_reports_from_csv,
    write_text_atomic,
)
from .verify import self_verify

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtlbench",
                                     description="Hybrid quantum-classical head benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one configuration across its seeds")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="run a single seed instead of the config's seed list")
    p_run.add_argument("--out", default=None, help="write the run-report CSV here")

    p_sweep = sub.add_parser("sweep", help="grid sweep over qubit count and depth")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--qubits", default=None, help="comma list, e.g. 4,6")
    p_sweep.add_argument("--depth", default=None, help="comma list, e.g. 2,4,6")
    p_sweep.add_argument("--out", default=None, help="write the aggregate CSV here")

    p_synth = sub.add_parser("synth", help="write a synthetic feature bundle")
    p_synth.add_argument("out")
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--per-class", type=int, required=True)
    p_synth.add_argument("--sep", type=float, required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--no-teacher-logits", action="store_true")

    p_report = sub.add_parser("report", help="aggregate run-report CSVs")
    p_report.add_argument("csv", nargs="+")
    p_report.add_argument("--format", choices=("csv", "table"), default="table")

    sub.add_parser("verify", help="run the built-in oracle suite")
    return parser


def _axis(raw: str | None, fallback: int) -> tuple[int, ...]:
    if raw is None:
        return (fallback,)
    try:
        vals = tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigurationError(f"axis {raw!r} is not a comma-separated int list")
    if not vals:
        raise ConfigurationError(f"axis {raw!r} is empty")
    return vals


def _cmd_run(args) -> int:
    config = load_config(args.config)
    seeds = (args.seed,) if args.seed is not None else config.seeds
    reports = [run_experiment(config, seed) for seed in seeds]
    text = run_reports_csv(reports)
    if args.out:
        write_text_atomic(text, args.out)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    spec = SweepSpec(config,
                     _axis(args.qubits, config.head.n_qubits),
                     _axis(args.depth, config.head.depth))
    results = run_sweep(spec)
    rows = [(r.config_id, r.aggregate, r.status) for r in results]
    text = aggregates_csv(rows)
    if args.out:
        write_text_atomic(text, args.out)
    sys.stdout.write(text)
    for r in results:
        for seed, msg in r.failures:
            sys.stderr.write(f"failed: {r.config_id} seed {seed}: {msg}\n")
    if any(r.aggregate is None for r in results):
        return EXIT_RUN_FAILURE
    return EXIT_OK


def _cmd_synth(args) -> int:
    bundle = synthesize_features(args.classes, args.dim, args.per_class,
                                 args.sep, args.seed,
                                 with_teacher_logits=not args.no_teacher_logits)
    save_bundle(bundle, args.out)
    sys.stdout.write(f"wrote {bundle.n_records} records to {args.out}\n")
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = []
    for path in args.csv:
        with open(path, "r", encoding="utf-8") as fh:
            reports.extend(run_reports_from_csv(fh.read()))
    by_config: dict[str, list] = {}
    for r in reports:
        by_config.setdefault(r.config_id, []).append(r)
    rows = [(cid, aggregate_runs(group), "ok") for cid, group in by_config.items()]
    render = aggregates_csv if args.format == "csv" else aggregates_table
    sys.stdout.write(render(rows))
    return EXIT_OK


def _cmd_verify() -> int:
    ok, lines = self_verify()
    for line in lines:
        sys.stdout.write(line + "\n")
    return EXIT_OK if ok else EXIT_RUN_FAILURE


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_verify()
    except (ConfigurationError, FormatError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG_ERROR
    except FileNotFoundError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG_ERROR
    except QtlBenchError as exc:
        sys.stderr.write(f"run failure: {type(exc).__name__}: {exc}\n")
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
