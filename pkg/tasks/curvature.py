"""curvature task: R^i_k and the Ricci scalar at random (x, y)."""
import logging

import numpy as np
import pandas as pd

from models.scenario import CurvatureTask
from services.finsler_service import eval_F, sample_directions, sample_points
from services.spray_service import riemann_curvature
from tasks.base import TaskContext, TaskOutcome, coordinate_columns

logger = logging.getLogger(__name__)

FLAT_TOL = 1e-7


def run_curvature(task: CurvatureTask, ctx: TaskContext) -> TaskOutcome:
    spec = ctx.spec
    m = spec.dimension
    rng = np.random.default_rng(ctx.seed)
    xs = sample_points(spec, task.samples, rng, radius=task.radius)
    ys = sample_directions(m, task.samples, rng) * rng.uniform(0.5, 2.0, (task.samples, 1))

    rows = []
    for x, y in zip(xs, ys):
        data = riemann_curvature(spec, x, y)
        F2 = eval_F(spec, x, y) ** 2
        rows.append([*x, *y, data.ricci_scalar, F2, data.ricci_scalar / F2, float(np.abs(data.Rk).max())])
    columns = coordinate_columns(m) + coordinate_columns(m, prefix="v") + ["ricci_scalar", "F2", "ratio", "max_abs_Rk"]
    table = pd.DataFrame(rows, columns=columns)

    metrics = {"samples": task.samples, "max_abs_Rk": float(table["max_abs_Rk"].max()),
               "ratio_min": float(table["ratio"].min()), "ratio_max": float(table["ratio"].max())}
    passed = bool(np.all(np.isfinite(table.to_numpy())))
    worst = None
    if task.expect == "flat":
        tolerance = min(task.tolerance, FLAT_TOL)
        worst = int(table["max_abs_Rk"].idxmax())
        passed = passed and metrics["max_abs_Rk"] <= tolerance
    elif task.expect == "constant":
        target = (m - 1) * task.curvature
        errors = (table["ratio"] - target).abs()
        worst = int(errors.idxmax())
        metrics.update({"expected_ratio": target, "max_ratio_error": float(errors.max())})
        passed = passed and metrics["max_ratio_error"] <= task.tolerance
    witness = None
    if not passed and worst is not None:
        witness = {"x": xs[worst].tolist(), "y": ys[worst].tolist(), "row": table.iloc[worst].to_dict()}
    return TaskOutcome(passed=passed, metrics=metrics, tables={"curvature": table}, witness=witness)
