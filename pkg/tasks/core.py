"""verify-core and structure-conditions tasks."""
import logging

import numpy as np
import pandas as pd

from models.grid import Ball
from models.scenario import StructureConditionsTask, VerifyCoreTask
from services.audit_service import verify_core
from services.calculus_service import verify_structure_conditions
from tasks.base import TaskContext, TaskOutcome

logger = logging.getLogger(__name__)


def run_verify_core(task: VerifyCoreTask, ctx: TaskContext) -> TaskOutcome:
    checks = verify_core(ctx.spec, samples=task.samples, seed=ctx.seed)
    failed = [c for c in checks if not c.passed]
    metrics = {c.identity: c.max_error for c in checks}
    witness = None
    if failed:
        witness = {"failed": [c.row() for c in failed], "seed": ctx.seed, "samples": task.samples}
    return TaskOutcome(passed=not failed, metrics=metrics,
                       tables={"identities": pd.DataFrame([c.row() for c in checks])}, witness=witness)


def run_structure_conditions(task: StructureConditionsTask, ctx: TaskContext) -> TaskOutcome:
    domain = Ball(center=(0.0,) * ctx.spec.dimension, radius=task.radius)
    report = verify_structure_conditions(ctx.spec, ctx.volume, domain, task.samples, seed=ctx.seed)
    metrics = {
        "C": report.C,
        "growth_constant": report.growth_constant,
        "growth_sum_constant": report.growth_sum_constant,
        "ellipticity_constant": report.ellipticity_constant,
        "monotonicity_constant": report.monotonicity_constant,
        "min_ellipticity": report.min_ellipticity,
        "samples": report.samples,
        "pairs": report.pairs,
        "violations": len(report.violations),
    }
    counts = {c: sum(1 for v in report.violations if v.condition == c) for c in (1, 2, 3)}
    table = pd.DataFrame({
        "condition": [1, 2, 3],
        "constant": [report.growth_constant, report.ellipticity_constant, report.monotonicity_constant],
        "violations": [counts[1], counts[2], counts[3]],
    })
    witness = None
    if report.violations:
        first = report.violations[0]
        witness = {"condition": first.condition, "x": first.x, "omega": first.omega,
                   "omega_other": first.omega_other, "measured": first.measured}
    passed = not report.violations and bool(np.isfinite(report.C))
    return TaskOutcome(passed=passed, metrics=metrics, tables={"conditions": table}, witness=witness)
