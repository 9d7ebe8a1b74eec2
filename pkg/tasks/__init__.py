"""Scenario task registry and the runner that turns handler results into reports."""
import logging
from typing import Callable, Dict

from errors import (ChartDegenerateError, ConditioningError, DegenerateDirectionError, FinslerError,
                    NotBerwaldError, PullbackDegenerateError)
from models.scenario import Report
from services.report_service import ReportWriter
from tasks.base import TaskContext, TaskOutcome
from tasks.berwald import run_berwald, run_ricci_identity, run_szabo
from tasks.charts import run_harmonic_chart, run_rescaling
from tasks.core import run_structure_conditions, run_verify_core
from tasks.curvature import run_curvature

logger = logging.getLogger(__name__)

HANDLERS: Dict[str, Callable[..., TaskOutcome]] = {
    "verify-core": run_verify_core,
    "structure-conditions": run_structure_conditions,
    "harmonic-chart": run_harmonic_chart,
    "rescaling": run_rescaling,
    "curvature": run_curvature,
    "berwald": run_berwald,
    "szabo": run_szabo,
    "ricci-identity": run_ricci_identity,
}

DEGENERATE_ERRORS = (NotBerwaldError, ChartDegenerateError, DegenerateDirectionError, PullbackDegenerateError,
                     ConditioningError)


def run_task(task, index: int, ctx: TaskContext, writer: ReportWriter) -> Report:
    """Run one task, write its tables and report; library errors become statuses."""
    handler = HANDLERS[task.task]
    prefix = f"{index:02d}_{task.task}"
    try:
        outcome = handler(task, ctx)
    except DEGENERATE_ERRORS as e:
        logger.warning("task %s degenerate: %s", prefix, e.message)
        report = Report(task=task.task, index=index, status="degenerate", error=e.to_dict())
    except FinslerError as e:
        logger.error("task %s failed: %s", prefix, e.message)
        report = Report(task=task.task, index=index, status="fail", error=e.to_dict())
    else:
        # first table is the main one; the rest (chart fields) get a suffix
        tables = []
        for position, (name, frame) in enumerate(outcome.tables.items()):
            tables.append(writer.table(prefix if position == 0 else f"{prefix}_{name}", frame))
        error = None
        if not outcome.passed:
            error = {"error": "check-failed", "message": f"{task.task} checks did not pass",
                     "witness": outcome.witness or {}}
        report = Report(task=task.task, index=index, status="pass" if outcome.passed else "fail",
                        metrics=outcome.metrics, tables=tables, error=error)
    writer.report(report)
    return report


__all__ = ["HANDLERS", "TaskContext", "TaskOutcome", "run_task"]
