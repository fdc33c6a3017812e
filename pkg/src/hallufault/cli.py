"""Command-line entry point: run, batch, consolidate, analyze, report."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .engine import run as run_once
from .experiments import (BASE_SEED_ENV, BatchError, BatchParams, condition_matrix, consolidate,
                          default_base_seed, read_dataset, run_batch, write_dataset)
from .hallucination import HIConfig, HIConfigError
from .world import ConfigurationError, ScenarioConfig

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("hallufault")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class CliError(Exception):
    pass


def _read_json(path: str, what: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {what} file {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise CliError(f"{what} file {path} must hold a JSON object")
    return data


def _scenario(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        cfg = ScenarioConfig.from_dict(_read_json(path, "scenario"))
        cfg.validate()
        return cfg
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise CliError(f"scenario file {path}: {exc}") from None


def cmd_run(args) -> int:
    scenario = _scenario(args.scenario)
    try:
        hi = HIConfig.from_dict(_read_json(args.hi, "HI"))
    except HIConfigError as exc:
        raise CliError(f"HI file {args.hi}: {exc}") from None
    result = run_once(scenario, hi, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = result.write(out)
    if not result.valid:
        print(f"invalid run: {result.error}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{result.outcome.value} min_distance={result.min_distance:.3f} -> {csv_path}, {json_path}")
    return EXIT_OK


def cmd_batch(args) -> int:
    matrix = None
    if args.params:
        try:
            params, matrix = BatchParams.from_json(Path(args.params).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read params file {args.params}: {exc}") from None
        except (ValueError, TypeError, HIConfigError, KeyError) as exc:
            raise CliError(f"params file {args.params}: {exc}") from None
    else:
        params = BatchParams()
    if args.runs is not None:
        params.runs_per_condition = args.runs
    if args.baseline_runs is not None:
        params.baseline_runs = args.baseline_runs
    if args.seed is not None:
        params.base_seed = args.seed
    try:
        params.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    matrix = matrix if matrix is not None else condition_matrix()
    out = Path(args.out)
    logs = out / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    (out / "batch.json").write_text(params.to_json(matrix) + "\n", encoding="utf-8")
    try:
        res = run_batch(matrix, params.runs_per_condition, params.baseline_runs, params.base_seed,
                        parallelism=args.jobs, scenario=params.scenario, log_dir=logs,
                        retry_budget=params.retry_budget)
    except BatchError as exc:
        print(f"batch failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{len(res.records)} valid runs ({res.retries} retries) -> {logs}")
    return EXIT_OK


def cmd_consolidate(args) -> int:
    try:
        cons = consolidate(args.logs)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    write_dataset(cons.records, args.out)
    c = cons.counts
    print(f"{len(cons.records)} rows ({c['OFF']} HI OFF, {c['ON']} HI ON); "
          f"{cons.invalid} invalid excluded; {len(cons.skipped)} malformed skipped -> {args.out}")
    for name, why in cons.skipped:
        print(f"  skipped {name}: {why}", file=sys.stderr)
    return EXIT_OK


def _load_dataset(path: str):
    try:
        return read_dataset(path)
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(f"dataset {path}: {exc}") from None


def cmd_analyze(args) -> int:
    from .stats import hypothesis_battery

    report = hypothesis_battery(_load_dataset(args.dataset))
    paths = report.write(args.out)
    for hid, why in report.skips():
        print(f"{hid} skipped: {why}", file=sys.stderr)
    print(f"{len(paths)} files -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import write_report
    from .stats import hypothesis_battery

    report = hypothesis_battery(_load_dataset(args.dataset))
    paths = report.write(args.out) + write_report(report, args.out, figures=not args.no_figures)
    for r in report.results:
        verdict = {True: "accepted", False: "rejected", None: "not tested"}[r.accepted]
        print(f"{r.factor.hid} {r.factor.name}: {verdict}")
    print(f"{len(paths)} files -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hallufault", description="Hallucination injection test bench.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one execution")
    r.add_argument("--scenario", help="scenario JSON (defaults when omitted)")
    r.add_argument("--hi", required=True, help="HI configuration JSON")
    r.add_argument("--seed", required=True, type=lambda s: int(s, 0))
    r.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run the condition matrix")
    b.add_argument("--params", help="batch parameters JSON, optionally with a 'matrix' list")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--runs", type=int, help="runs per HI condition")
    b.add_argument("--baseline-runs", type=int)
    b.add_argument("--seed", type=lambda s: int(s, 0), help=f"base seed (else ${BASE_SEED_ENV}, else default)")
    b.set_defaults(func=cmd_batch)

    c = sub.add_parser("consolidate", help="build dataset.csv from a log directory")
    c.add_argument("--logs", required=True)
    c.add_argument("--out", default="dataset.csv")
    c.set_defaults(func=cmd_consolidate)

    a = sub.add_parser("analyze", help="hypothesis tests as OR and linear-model tables")
    a.add_argument("--dataset", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("report", help="tables plus narrative, plot series and figures")
    rp.add_argument("--dataset", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        default_base_seed()
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # bad HALLUFAULT_BASE_SEED and similar
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
