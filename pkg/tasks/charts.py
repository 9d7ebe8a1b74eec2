"""harmonic-chart and rescaling tasks."""
import logging

import numpy as np
import pandas as pd

from config import settings
from models.grid import Grid
from models.scenario import HarmonicChartTask, RescalingTask
from services.calculus_service import a_map
from services.chart_service import (DirichletSolver, build_chart, competitor_audit, max_principle_audit,
                                    rescaling_experiment, weak_residual_audit)
from services.finsler_service import is_x_independent
from tasks.base import TaskContext, TaskOutcome, points_frame

logger = logging.getLogger(__name__)

WEAK_RESIDUAL_TOL = 1e-6
IDENTITY_TOL = 1e-7


def run_harmonic_chart(task: HarmonicChartTask, ctx: TaskContext) -> TaskOutcome:
    """Chart on B_eps solved in rescaled coordinates x = eps * x~ on the unit ball."""
    spec = ctx.spec
    grid = Grid.ball(1.0, task.spacing, dimension=spec.dimension)
    chart = build_chart(spec, ctx.volume, grid, jobs=ctx.jobs, scale=task.epsilon)
    m = spec.dimension
    origin_det = float(chart.determinant[grid.origin_node()])
    metrics = {
        "epsilon": task.epsilon,
        "spacing": task.spacing,
        "nodes": grid.node_count,
        "certified_radius": task.epsilon * chart.certified_radius,
        "det_threshold": chart.det_threshold,
        "det_at_origin": origin_det,
        "jacobian_deviation_at_origin": float(np.linalg.norm(chart.origin_jacobian() - np.eye(m), ord=2)),
        "identity_deviation": chart.identity_deviation(),
        "residuals": chart.residual,
        "energies": chart.energies,
        "degenerate_cells": len(chart.degenerate_cells),
    }
    passed = max(chart.residual) <= settings.SOLVER_TOL
    witness = None
    x_independent = is_x_independent(spec)
    if x_independent and metrics["identity_deviation"] > task.tolerance:
        passed = False
        witness = {"identity_deviation": metrics["identity_deviation"], "tolerance": task.tolerance}

    if task.audits:
        solver = DirichletSolver(a_map(spec, ctx.volume, task.epsilon), grid)
        rng = np.random.default_rng(ctx.seed)
        weak = [weak_residual_audit(solver, f.values, rng) for f in chart.fields]
        gaps = [competitor_audit(solver, f.values, rng) for f in chart.fields]
        excursions = [max_principle_audit(grid, f.values) for f in chart.fields]
        metrics.update({"weak_residual": max(weak), "min_competitor_gap": min(gaps),
                        "max_principle_excursion": max(excursions)})
        if max(weak) > WEAK_RESIDUAL_TOL or min(gaps) < 0.0:
            passed = False
            witness = {"weak_residual": weak, "competitor_gaps": gaps}
        if x_independent and max(excursions) > IDENTITY_TOL:
            passed = False
            witness = {"max_principle_excursion": excursions}

    physical = task.epsilon * (grid.points - grid.center)
    tables = {"nodes": points_frame(physical, determinant=chart.determinant)}
    for i, f in enumerate(chart.fields):
        tables[f"u{i + 1}"] = points_frame(physical, value=task.epsilon * f.values)
    return TaskOutcome(passed=passed, metrics=metrics, tables=tables, witness=witness)


def run_rescaling(task: RescalingTask, ctx: TaskContext) -> TaskOutcome:
    result = rescaling_experiment(ctx.spec, ctx.volume, task.epsilons, spacing=task.spacing, jobs=ctx.jobs)
    deviations = np.asarray(result.deviations)
    low, high = task.slope_range
    vanishing = bool(deviations.max() <= IDENTITY_TOL)
    slope = result.slope
    metrics = {"deviations": result.deviations, "epsilons": result.epsilons, "slope": slope,
               "decreasing": result.decreasing, "vanishing": vanishing}
    passed = vanishing or (result.decreasing and low <= slope <= high)
    witness = None if passed else {"epsilons": result.epsilons, "deviations": result.deviations, "slope": slope}
    return TaskOutcome(passed=passed, metrics=metrics, tables={"rescaling": pd.DataFrame(result.rows())},
                       witness=witness)
