"""Dirichlet problems for the Finsler Laplacian and the harmonic chart built from them."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from config import settings
from errors import ChartDegenerateError, InvalidInputError, NoConvergenceError
from models.geometry import RescalingResult, VolumeForm
from models.grid import Grid, HarmonicChart, ScalarField
from services.calculus_service import AMap, a_map

logger = logging.getLogger(__name__)


@dataclass
class DirichletResult:
    values: np.ndarray
    energy: float
    residual: float
    iterations: int
    newton_iterations: int
    degenerate_cells: List[int] = field(default_factory=list)


class DirichletSolver:
    """Minimises the discrete energy sum_cells vol * sigma * ½F*²(du) over interior values.

    Piecewise-linear elements on the grid's simplices; the Euclidean stiffness
    matrix restricted to interior nodes preconditions the nonlinear conjugate
    gradient phase and Newton (Hessian sigma * g*) finishes once no cell is
    degenerate.
    """

    def __init__(self, amap: AMap, grid: Grid, tol: Optional[float] = None):
        self.amap = amap
        self.grid = grid
        self.tol = settings.SOLVER_TOL if tol is None else tol
        self.interior = np.flatnonzero(grid.interior)
        if len(self.interior) == 0:
            raise InvalidInputError("grid has no interior nodes")
        self._simplices = grid.simplices
        self._operators = grid.gradient_operators
        self._volumes = grid.volumes
        self._centroids = grid.centroids
        self.stiffness = self._assemble(np.broadcast_to(np.eye(grid.dimension),
                                                        (len(grid.simplices), grid.dimension, grid.dimension)))
        interior_block = self.stiffness[self.interior][:, self.interior].tocsc()
        self._preconditioner = splu(interior_block)

    # ----------------------
    # Assembly
    # ----------------------

    def _assemble(self, coefficients: np.ndarray) -> sp.csr_matrix:
        G = self._operators
        local = self._volumes[:, None, None] * np.einsum("sia,sij,sjb->sab", G, coefficients, G)
        rows = np.repeat(self._simplices[:, :, None], self._simplices.shape[1], axis=2)
        cols = np.repeat(self._simplices[:, None, :], self._simplices.shape[1], axis=1)
        n = self.grid.node_count
        return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()

    def differentials(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("sij,sj->si", self._operators, u[self._simplices])

    def energy(self, u: np.ndarray) -> float:
        du = self.differentials(u)
        fluxes = self.amap.flux(self._centroids, du)
        return float(np.sum(self._volumes * 0.5 * np.einsum("si,si->s", du, fluxes)))

    def energy_gradient(self, u: np.ndarray):
        """(E, dE/du over all nodes)."""
        du = self.differentials(u)
        fluxes = self.amap.flux(self._centroids, du)
        energy = float(np.sum(self._volumes * 0.5 * np.einsum("si,si->s", du, fluxes)))
        local = self._volumes[:, None] * np.einsum("sij,si->sj", self._operators, fluxes)
        grad = np.zeros(self.grid.node_count)
        np.add.at(grad, self._simplices, local)
        return energy, grad

    def degenerate_cells(self, u: np.ndarray) -> np.ndarray:
        du = self.differentials(u)
        scale = 1.0 + np.abs(u).max()
        return np.flatnonzero(np.linalg.norm(du, axis=1) <= 1e-12 * scale)

    def hessian(self, u: np.ndarray) -> sp.csr_matrix:
        du = self.differentials(u)
        coefficients = np.asarray(self.amap.omega_jacobian_batch(jnp.asarray(self._centroids), jnp.asarray(du)))
        return self._assemble(0.5 * (coefficients + np.swapaxes(coefficients, 1, 2)))

    def extension(self, boundary_values: np.ndarray) -> np.ndarray:
        """Discrete Euclidean-harmonic extension of boundary data (the starting iterate)."""
        u = np.array(boundary_values, dtype=float)
        u[self.interior] = 0.0
        rhs = -(self.stiffness @ u)[self.interior]
        u[self.interior] = self._preconditioner.solve(rhs)
        return u

    # ----------------------
    # Solve
    # ----------------------

    def solve(self, boundary_values: np.ndarray) -> DirichletResult:
        boundary_values = np.asarray(boundary_values, dtype=float)
        if boundary_values.shape != (self.grid.node_count,) or not np.all(
                np.isfinite(boundary_values[self.grid.boundary])):
            raise InvalidInputError("boundary data must be finite on boundary nodes")
        I = self.interior
        u = self.extension(boundary_values)
        energy, grad = self.energy_gradient(u)
        r = grad[I]
        residual = float(np.abs(r).max())
        z = self._preconditioner.solve(r)
        d = -z
        k, newton_steps = 0, 0
        switch = max(self.tol, 1e-4 * (1.0 + residual))

        while residual > self.tol and k < settings.SOLVER_MAX_ITER:
            if residual <= switch and len(self.degenerate_cells(u)) == 0:
                u, energy, residual, steps = self._newton(u, energy, grad)
                newton_steps += steps
                if residual <= self.tol:
                    break
                energy, grad = self.energy_gradient(u)
                r = grad[I]
                z = self._preconditioner.solve(r)
                d = -z
                switch = 0.1 * residual

            slope = float(r @ d)
            if slope >= 0.0:
                d, slope = -z, -float(r @ z)
            t = self._armijo(u, d, energy, slope)
            if t is None:
                if np.array_equal(d, -z):
                    break
                d = -z
                continue
            u = u.copy()
            u[I] += t * d
            energy, grad = self.energy_gradient(u)
            r_new = grad[I]
            z_new = self._preconditioner.solve(r_new)
            beta = max(0.0, float((r_new - r) @ z_new) / float(r @ z))
            d = -z_new + beta * d
            if float(d @ r_new) > -0.01 * float(r_new @ z_new):
                d = -z_new
            r, z = r_new, z_new
            residual = float(np.abs(r).max())
            k += 1
            logger.debug("ncg iteration %d: energy %.16g residual %.3e", k, energy, residual)

        degenerate = self.degenerate_cells(u)
        if residual > self.tol:
            raise NoConvergenceError("Dirichlet solver did not converge", residual=residual,
                                     iterations=k + newton_steps,
                                     witness={"nodes": self.grid.node_count, "degenerate_cells": len(degenerate)})
        return DirichletResult(values=u, energy=energy, residual=residual, iterations=k,
                               newton_iterations=newton_steps, degenerate_cells=degenerate.tolist())

    def _armijo(self, u, d, energy, slope) -> Optional[float]:
        t = 1.0
        trial = u.copy()
        while t > 1e-12:
            trial[self.interior] = u[self.interior] + t * d
            if self.energy(trial) <= energy + settings.ARMIJO_C * t * slope:
                return t
            t *= settings.ARMIJO_FACTOR
        return None

    def _newton(self, u, energy, grad):
        I = self.interior
        residual = float(np.abs(grad[I]).max())
        steps = 0
        while residual > self.tol and steps < settings.NEWTON_MAX_ITER:
            if len(self.degenerate_cells(u)) > 0:
                break
            H = self.hessian(u)[I][:, I].tocsc()
            d = -splu(H).solve(grad[I])
            t, accepted = 1.0, False
            trial = u.copy()
            while t > 1e-12:
                trial[I] = u[I] + t * d
                trial_energy, trial_grad = self.energy_gradient(trial)
                # near the minimiser energy differences drop below rounding, so a residual decrease also counts
                if (trial_energy <= energy + settings.ARMIJO_C * t * float(grad[I] @ d)
                        or float(np.abs(trial_grad[I]).max()) < residual):
                    accepted = True
                    break
                t *= settings.ARMIJO_FACTOR
            if not accepted:
                break
            u, energy, grad = trial, trial_energy, trial_grad
            residual = float(np.abs(grad[I]).max())
            steps += 1
            logger.debug("newton step %d: residual %.3e (t=%g)", steps, residual, t)
        return u, energy, residual, steps


def _boundary_data(grid: Grid, boundary: ScalarField) -> np.ndarray:
    values = np.zeros(grid.node_count)
    values[grid.boundary] = boundary.sample(grid)[grid.boundary]
    return values


# ======================
# OPERATIONS
# ======================

def solve_dirichlet(spec, volume: VolumeForm, grid: Grid, boundary: ScalarField,
                    scale: float = 1.0) -> ScalarField:
    solver = DirichletSolver(a_map(spec, volume, scale), grid)
    result = solver.solve(_boundary_data(grid, boundary))
    return ScalarField.on_grid(grid, result.values, name=f"dirichlet:{boundary.name}")


def node_jacobians(grid: Grid, fields: Sequence[ScalarField]) -> np.ndarray:
    """DPhi at every node: centred differences, one-sided where a neighbour is missing."""
    m = grid.dimension
    eye = np.eye(m, dtype=int)
    jacobian = np.full((grid.node_count, len(fields), m), np.nan)
    for node in range(grid.node_count):
        index = grid.indices[node]
        for k in range(m):
            ahead, behind = grid.node_at(index + eye[k]), grid.node_at(index - eye[k])
            ahead = node if ahead < 0 else ahead
            behind = node if behind < 0 else behind
            if ahead == behind:
                continue
            run = grid.points[ahead, k] - grid.points[behind, k]
            for i, f in enumerate(fields):
                jacobian[node, i, k] = (f.values[ahead] - f.values[behind]) / run
    return jacobian


def certified_radius(grid: Grid, determinant: np.ndarray, threshold: float) -> float:
    """Radius of the largest centred ball whose nodes all have |det| >= threshold."""
    distance = np.linalg.norm(grid.points - grid.center, axis=1)
    failing = ~(np.abs(determinant) >= threshold)
    if not failing.any():
        return float(grid.radius)
    return float(distance[failing].min())


def build_chart(spec, volume: VolumeForm, grid: Grid, jobs: int = 1, scale: float = 1.0,
                det_threshold: Optional[float] = None) -> HarmonicChart:
    """Phi = (u^1..u^m) with u^i the Dirichlet solution for data x^i on the grid's boundary."""
    threshold = settings.DET_THRESHOLD if det_threshold is None else det_threshold
    solver = DirichletSolver(a_map(spec, volume, scale), grid)
    coordinates = grid.points - grid.center

    def solve_coordinate(i: int) -> DirichletResult:
        data = np.zeros(grid.node_count)
        data[grid.boundary] = coordinates[grid.boundary, i]
        return solver.solve(data)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(solve_coordinate, range(grid.dimension)))

    fields = [ScalarField.on_grid(grid, r.values, name=f"u{i + 1}") for i, r in enumerate(results)]
    jacobian = node_jacobians(grid, fields)
    determinant = np.linalg.det(np.nan_to_num(jacobian))
    determinant[np.isnan(jacobian).any(axis=(1, 2))] = np.nan
    radius = certified_radius(grid, determinant, threshold)
    if radius <= 0.0:
        raise ChartDegenerateError("no certified sub-ball: |det DPhi| below threshold at the centre",
                                   witness={"threshold": threshold,
                                            "det_at_centre": float(determinant[grid.origin_node()])})
    logger.info("chart built on %d nodes: certified radius %.4g", grid.node_count, radius)
    return HarmonicChart(grid=grid, fields=fields, jacobian=jacobian, determinant=determinant,
                         residual=[r.residual for r in results], certified_radius=radius,
                         det_threshold=threshold, energies=[r.energy for r in results],
                         degenerate_cells=sorted({c for r in results for c in r.degenerate_cells}))


def rescaling_experiment(spec, volume: VolumeForm, epsilons: Sequence[float], spacing: float = 1.0 / 32,
                         jobs: int = 1) -> RescalingResult:
    """||DPhi~(0) - Id|| for the problems rescaled to the unit ball, x = eps * x~."""
    epsilons = [float(e) for e in epsilons]
    if not epsilons or min(epsilons) <= 0.0:
        raise InvalidInputError("epsilon values must be positive", witness={"epsilons": epsilons})
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise InvalidInputError("epsilon values must be decreasing", witness={"epsilons": epsilons})

    grid = Grid.ball(1.0, spacing, dimension=spec.dimension)
    identity = np.eye(spec.dimension)
    deviations = []
    for eps in epsilons:
        chart = build_chart(spec, volume, grid, jobs=jobs, scale=eps)
        deviations.append(float(np.linalg.norm(chart.origin_jacobian() - identity, ord=2)))
        logger.info("rescaling eps=%g: deviation %.6e", eps, deviations[-1])
    return RescalingResult(epsilons=epsilons, deviations=deviations)


# ======================
# AUDITS
# ======================

def weak_residual_audit(solver: DirichletSolver, u: np.ndarray, rng: np.random.Generator,
                        count: int = 20) -> float:
    """max over random eta (zero on the boundary) of |dE(u)[eta]| / ||eta||_H1."""
    _, grad = solver.energy_gradient(u)
    lumped = np.zeros(solver.grid.node_count)
    np.add.at(lumped, solver.grid.simplices,
              np.repeat(solver.grid.volumes[:, None] / solver.grid.simplices.shape[1],
                        solver.grid.simplices.shape[1], axis=1))
    worst = 0.0
    for _ in range(count):
        eta = np.zeros(solver.grid.node_count)
        eta[solver.interior] = rng.normal(size=len(solver.interior))
        h1 = np.sqrt(float(eta @ (solver.stiffness @ eta)) + float(lumped @ eta ** 2))
        worst = max(worst, abs(float(grad @ eta)) / h1)
    return worst


def competitor_audit(solver: DirichletSolver, u: np.ndarray, rng: np.random.Generator,
                     count: int = 10, amplitude: float = 0.05) -> float:
    """min over random competitors with the same boundary data of E(competitor) - E(u)."""
    base = solver.energy(u)
    gaps = []
    for _ in range(count):
        competitor = u.copy()
        competitor[solver.interior] += amplitude * rng.normal(size=len(solver.interior))
        gaps.append(solver.energy(competitor) - base)
    return float(min(gaps))


def max_principle_audit(grid: Grid, u: np.ndarray) -> float:
    """How far interior values leave [min, max] of the boundary values (0 when inside)."""
    low, high = u[grid.boundary].min(), u[grid.boundary].max()
    inner = u[grid.interior]
    return float(max(0.0, low - inner.min(), inner.max() - high))
