"""Batch driver: `run <file>` executes a scenario, `validate <file>` audits its metric."""
import argparse
import json
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import settings
from errors import FinslerError, NoConvergenceError
from models.scenario import Report, Scenario
from services.calculus_service import volume_form
from services.finsler_service import audit_metric
from services.report_service import ReportWriter
from tasks import TaskContext, run_task

logger = logging.getLogger("finsler")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3

STATUS_MARKS = {"pass": "✅", "fail": "❌", "degenerate": "⚠️"}


class ScenarioError(Exception):
    """Scenario file could not be read or validated."""


def configure_logging() -> None:
    logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _location(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def read_scenario(path: str, audit: bool = True) -> Scenario:
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file")
    except tomllib.TOMLDecodeError as e:
        # message already ends with "(at line L, column C)"
        raise ScenarioError(f"{path}: {e}")
    try:
        return Scenario.model_validate(data, context={"audit": audit})
    except ValidationError as e:
        lines = [f"{path}: invalid scenario"]
        lines += [f"  {_location(err)}: {err['msg']}" for err in e.errors()]
        raise ScenarioError("\n".join(lines))


def exit_code(reports: List[Report]) -> int:
    if any(r.error and r.error.get("error") == "no-convergence" for r in reports):
        return EXIT_NO_CONVERGENCE
    if any(r.error and r.error.get("error") == "invalid-input" for r in reports):
        return EXIT_INVALID
    if all(r.status == "pass" for r in reports):
        return EXIT_OK
    return EXIT_FAILED


def run(path: str, out: Optional[str] = None, seed: Optional[int] = None, jobs: Optional[int] = None) -> int:
    try:
        scenario = read_scenario(path)
    except ScenarioError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVALID

    out_dir = out or scenario.output or settings.REPORT_DIR
    seed = scenario.seed if seed is None else seed
    jobs = jobs or settings.DEFAULT_JOBS
    writer = ReportWriter(out_dir)
    try:
        volume = volume_form(scenario.metric, scenario.volume, settings.INDICATRIX_NODES)
    except FinslerError as e:
        print(f"❌ {path}: volume {scenario.volume}: {e.message}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE if isinstance(e, NoConvergenceError) else EXIT_INVALID
    ctx = TaskContext(spec=scenario.metric, volume=volume, seed=seed, jobs=jobs)

    logger.info("scenario %s: %d task(s), metric %s, volume %s, seed %d",
                scenario.name, len(scenario.tasks), scenario.metric.kind, scenario.volume, seed)
    reports = []
    for index, task in enumerate(scenario.tasks):
        report = run_task(task, index, ctx, writer)
        reports.append(report)
        detail = f" ({report.error['error']})" if report.error else ""
        print(f"{STATUS_MARKS[report.status]} [{index:02d}] {task.task}: {report.status}{detail}")

    code = exit_code(reports)
    print(f"Reports written to {Path(out_dir).resolve()}")
    return code


def validate(path: str) -> int:
    try:
        scenario = read_scenario(path, audit=False)
    except ScenarioError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVALID

    diagnostics = audit_metric(scenario.metric)
    print(json.dumps([d.model_dump() for d in diagnostics], indent=2, sort_keys=True))
    if diagnostics:
        print(f"⚠️ {len(diagnostics)} diagnostic(s) for {path}", file=sys.stderr)
        return EXIT_FAILED
    print(f"✅ {path} is well formed", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finsler", description=settings.APP_NAME)
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="execute the tasks of a scenario file")
    run_parser.add_argument("file")
    run_parser.add_argument("--out", help=f"output directory (default: scenario output, then {settings.REPORT_DIR})")
    run_parser.add_argument("--seed", type=int, help="override the scenario seed")
    run_parser.add_argument("--jobs", type=int, help="worker threads for chart solves")

    validate_parser = commands.add_parser("validate", help="audit the metric of a scenario file")
    validate_parser.add_argument("file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    if args.command == "run":
        return run(args.file, out=args.out, seed=args.seed, jobs=args.jobs)
    return validate(args.file)


if __name__ == "__main__":
    sys.exit(main())
