"""Command-line front end: ``corrthermo {run,compare,sweep,validate}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import (
    ConvergenceError,
    CorrThermoError,
    InvariantViolation,
    ScenarioError,
    StepSizeError,
    TruncationError,
)
from .runner import compare_analytic, comparison_table, format_series, run_scenario, summary_bytes
from .scenario import parse_scenario, with_override

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INVARIANT = 3
EXIT_CONVERGENCE = 4


def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InvariantViolation):
        return EXIT_INVARIANT
    if isinstance(exc, (ConvergenceError, StepSizeError, TruncationError)):
        return EXIT_CONVERGENCE
    if isinstance(exc, (ScenarioError, CorrThermoError, ValueError)):
        return EXIT_VALIDATION
    raise exc


def load_scenario(path: str, alpha_s: float | None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    scenario = parse_scenario(text)
    if alpha_s is not None:
        scenario = with_override(scenario, "split.alpha_s", alpha_s)
    return scenario


def execute_run(scenario, out: Path, fmt: str) -> dict:
    result = run_scenario(scenario)
    if fmt == "csv":
        write_atomic(out / "ledger.csv", result.csv_bytes())
    else:
        write_atomic(out / "ledger.json", result.json_bytes())
    write_atomic(out / "summary.json", summary_bytes(result.summary))
    for name in scenario.outputs:
        write_atomic(out / f"series_{name}.csv", format_series(result.table, name))
    return result.summary


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, args.alpha_s)
    summary = execute_run(scenario, Path(args.out), args.format)
    print(f"wrote {summary['rows']} rows to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_scenario(args.scenario, args.alpha_s)
    print("ok")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario, args.alpha_s)
    profile = {"default": args.tolerance} if args.tolerance is not None else None
    report = compare_analytic(scenario, profile)
    table = comparison_table(report)
    print(table, end="")
    if args.out:
        out = Path(args.out)
        write_atomic(out / "comparison.json", (json.dumps(report, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        write_atomic(out / "comparison.txt", table.encode("utf-8"))
    if report["pass"]:
        return EXIT_OK
    if any("leakage" in f for f in report["failures"]):
        return EXIT_CONVERGENCE
    return EXIT_INVARIANT


def _parse_values(text: str) -> list:
    values = []
    for item in text.split(","):
        item = item.strip()
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def _sweep_job(job: tuple[str, str, object, str, str]) -> tuple[str, int, str]:
    text, param, value, out, fmt = job
    label = f"{param.rsplit('.', 1)[-1]}={value}"
    try:
        scenario = with_override(parse_scenario(text), param, value)
        execute_run(scenario, Path(out) / label, fmt)
        return label, EXIT_OK, "ok"
    except Exception as exc:  # reported per scenario, never shared
        return label, exit_code_for(exc), str(exc)


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario, args.alpha_s)
    text = json.dumps(scenario.model_dump(mode="json", by_alias=True, exclude_none=True))
    values = _parse_values(args.values)
    jobs = [(text, args.param, v, args.out, args.format) for v in values]
    # validate every override up front so a typo fails before any work starts
    for _, param, value, _, _ in jobs:
        with_override(scenario, param, value)
    workers = max(1, min(args.workers or os.cpu_count() or 1, len(jobs)))
    if workers == 1:
        results = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    report = [{"run": label, "exit_code": code, "message": msg} for label, code, msg in results]
    write_atomic(Path(args.out) / "sweep.json", (json.dumps(report, indent=2) + "\n").encode("utf-8"))
    for entry in report:
        print(f"{entry['run']}: {entry['message']}")
    codes = [code for _, code, _ in results if code != EXIT_OK]
    return codes[0] if codes else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrthermo", description="Correlation-aware thermodynamic ledgers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, metavar="PATH", help="scenario JSON document")
        p.add_argument("--alpha-s", type=float, default=None, dest="alpha_s", help="override split.alpha_s")

    p = sub.add_parser("run", help="simulate a scenario and write its ledger")
    common(p)
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare a scenario against its closed-form oracle")
    common(p)
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--tolerance", type=float, default=None, help="absolute tolerance for every column")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="run one scenario over a list of values of a single parameter")
    common(p)
    p.add_argument("--param", required=True, help="dotted field path, e.g. parameters.lambda")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default=".", metavar="DIR")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="parse and validate a scenario without running it")
    common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
