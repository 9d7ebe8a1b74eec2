"""berwald, szabo and ricci-identity tasks."""
import logging

import jax.numpy as jnp
import numpy as np
import pandas as pd

from models.scenario import BerwaldTask, RicciIdentityTask, SzaboTask
from services.berwald_service import (averaged_metric, is_berwald, quadratic_structure_audit,
                                      ricci_identity_check, szabo_check)
from tasks.base import TaskContext, TaskOutcome

logger = logging.getLogger(__name__)

QUADRATIC_TOL = 1e-8


def _matrix_frame(matrix) -> pd.DataFrame:
    matrix = np.asarray(matrix)
    rows = [{"i": i, "j": j, "value": float(matrix[i, j])}
            for i in range(matrix.shape[0]) for j in range(matrix.shape[1])]
    return pd.DataFrame(rows)


def run_berwald(task: BerwaldTask, ctx: TaskContext) -> TaskOutcome:
    spec = ctx.spec
    found = is_berwald(spec, tol=task.tol, seed=ctx.seed)
    metrics = {"berwald": found["berwald"], "max_nonlinearity": found["max_nonlinearity"], "tol": task.tol}
    tables = {}
    passed = task.expect is None or found["berwald"] == task.expect
    if found["berwald"]:
        origin = np.zeros(spec.dimension)
        h = averaged_metric(spec, task.nodes)
        quadratic = quadratic_structure_audit(spec, origin, seed=ctx.seed)
        metrics.update({"quadratic_structure_error": quadratic, "h_measure": h.measure})
        tables["h_origin"] = _matrix_frame(h(jnp.asarray(origin)))
        passed = passed and quadratic <= QUADRATIC_TOL
    witness = None if passed else {"expected": task.expect, **(found["witness"] or {}),
                                   "max_nonlinearity": found["max_nonlinearity"]}
    return TaskOutcome(passed=passed, metrics=metrics, tables=tables, witness=witness)


def run_szabo(task: SzaboTask, ctx: TaskContext) -> TaskOutcome:
    found = szabo_check(ctx.spec, task.nodes, tol=task.tol, samples=task.samples, measure=task.measure,
                        seed=ctx.seed)
    witness = None if found["passed"] else {"max_deviation": found["max_deviation"], "seed": ctx.seed}
    return TaskOutcome(passed=found["passed"], metrics=found, witness=witness)


def run_ricci_identity(task: RicciIdentityTask, ctx: TaskContext) -> TaskOutcome:
    spec = ctx.spec
    found = ricci_identity_check(spec, task.nodes, tol=task.tol, samples=task.samples, measure=task.measure,
                                 seed=ctx.seed)
    first = found.pop("first_sample")
    metrics = dict(found)
    passed = found["passed"]
    tables = {"ricci": _matrix_frame(first["ricci_chern"])}
    if task.curvature is not None:
        # Einstein oracle: Ric = (m - 1) K h
        expected = (spec.dimension - 1) * task.curvature * np.asarray(first["h"])
        oracle = float(np.abs(np.asarray(first["ricci_chern"]) - expected).max())
        metrics["constant_curvature_deviation"] = oracle
        passed = passed and oracle <= task.tol
    witness = None if passed else {"x": first["x"], "ricci_spray": first["ricci_spray"],
                                   "ricci_chern": first["ricci_chern"], "h": first["h"]}
    return TaskOutcome(passed=passed, metrics=metrics, tables=tables, witness=witness)
