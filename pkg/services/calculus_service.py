"""Gradient, nonlinear Laplacian, Dirichlet energy and the structure conditions of the A-map."""
import logging
from typing import Optional, Sequence, Union

import jax
import jax.numpy as jnp
import numpy as np

from config import settings
from errors import InvalidInputError
from models.geometry import (EnergyEstimate, LaplacianValue, StructureReport, StructureViolation,
                             VolumeForm)
from models.grid import Ball, Box, Grid, ScalarField
from services.finsler_service import cached, get_metric, riemannian_density, sample_directions
from services.legendre_service import get_duality, legendre_inverse

logger = logging.getLogger(__name__)

VOLUME_NAMES = ("lebesgue", "sqrt-det-riemannian", "sqrt-det-averaged")


# ======================
# VOLUME FORMS
# ======================

def lebesgue_volume() -> VolumeForm:
    return VolumeForm(name="lebesgue", density=lambda x: 1.0 + 0.0 * jnp.sum(x))


def riemannian_volume(spec) -> VolumeForm:
    """sigma = sqrt det A(x) of the Riemannian part."""
    return VolumeForm(name="sqrt-det-riemannian", density=riemannian_density(spec))


def averaged_volume(spec, n: Optional[int] = None, measure: Optional[str] = None) -> VolumeForm:
    from services.berwald_service import averaged_metric

    h = averaged_metric(spec, n, measure)
    return VolumeForm(name=f"sqrt-det-averaged:{h.order}:{h.measure}",
                      density=lambda x: jnp.sqrt(jnp.linalg.det(h.evaluator(x))))


def volume_form(spec, name: str, n: Optional[int] = None, measure: Optional[str] = None) -> VolumeForm:
    if name == "lebesgue":
        return lebesgue_volume()
    if name == "sqrt-det-riemannian":
        return riemannian_volume(spec)
    if name == "sqrt-det-averaged":
        return averaged_volume(spec, n, measure)
    raise InvalidInputError(f"unknown volume form: {name}", witness={"volume": name})


# ======================
# A-MAP
# ======================

class AMap:
    """A(x, omega) = sigma(x) * l^-1(x, omega) = sigma(x) * ½ ∂F*²/∂omega.

    With `scale` = eps the map is the rescaled operator A(eps * x, omega) used
    on the unit ball in the chart construction.
    """

    def __init__(self, spec, volume: VolumeForm, scale: float = 1.0):
        self.spec = spec
        self.volume = volume
        self.scale = float(scale)
        self.duality = get_duality(spec)
        inverse = self.duality.inverse
        density = volume.density
        s = self.scale

        def evaluate(x, omega):
            return density(s * x) * inverse(s * x, omega)

        def energy_density(x, omega):
            # ½F*²(omega) sigma = ½ omega . A
            return 0.5 * jnp.dot(omega, evaluate(x, omega))

        def density_at(x):
            return density(s * x)

        self.evaluate = evaluate
        self.energy_density = energy_density
        self.omega_jacobian = jax.jacfwd(evaluate, argnums=1)
        self.x_jacobian = jax.jacfwd(evaluate, argnums=0)
        self.density = density_at

        self.evaluate_batch = jax.jit(jax.vmap(evaluate))
        self.density_batch = jax.jit(jax.vmap(density_at))
        self.omega_jacobian_batch = jax.jit(jax.vmap(self.omega_jacobian))
        self.x_jacobian_batch = jax.jit(jax.vmap(self.x_jacobian))

    def flux(self, xs, omegas) -> np.ndarray:
        """Batched A with the Newton residuals checked (raises NoConvergenceError)."""
        xs = np.asarray(xs, dtype=float)
        v = self.duality.solve_many(self.scale * xs, omegas)
        return np.asarray(self.density_batch(jnp.asarray(xs)))[:, None] * v

    def __call__(self, x, omega) -> np.ndarray:
        return self.flux(np.atleast_2d(x), np.atleast_2d(omega))[0]


def a_map(spec, volume: VolumeForm, scale: float = 1.0) -> AMap:
    return cached(spec, f"amap:{volume.name}:{scale!r}", lambda s: AMap(s, volume, scale))


# ======================
# HELPERS
# ======================

def _differential(f: ScalarField, x) -> np.ndarray:
    if f.has_gradient:
        return np.asarray(jax.grad(f.fn)(jnp.asarray(np.asarray(x, dtype=float))))
    return f.node_differential(f.grid.node_of(x))


def _check_finite(x, what: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{what} must be finite", witness={what: x.tolist()})
    return x


def _gauss_rule(order: int):
    return np.polynomial.legendre.leggauss(order)


# ======================
# OPERATIONS
# ======================

def gradient(spec, f: ScalarField, x) -> np.ndarray:
    """∇f = l^-1(df); zero where df vanishes."""
    x = _check_finite(x)
    get_metric(spec).check_point(x)
    df = _differential(f, x)
    if not np.any(df):
        return np.zeros_like(x)
    return legendre_inverse(spec, x, df).v


def laplacian(spec, volume: VolumeForm, f: ScalarField, x, step: float = 1e-3) -> LaplacianValue:
    """(1/sigma) div(sigma ½∂F*²/∂omega(df)) at x.

    Closed-form fields are differentiated exactly through the Legendre inverse and
    cross-checked against the non-divergence form. Grid fields use the staggered
    grid path. Where df(x) = 0 the divergence is estimated by symmetric
    differences of x -> A(x, df(x)) and flagged low-confidence.
    """
    x = _check_finite(x)
    get_metric(spec).check_point(x)
    if not f.has_gradient:
        return laplacian_on_grid(spec, volume, f, f.grid.node_of(x))

    amap = a_map(spec, volume)
    xj = jnp.asarray(x)
    df_fn = jax.grad(f.fn)
    df = np.asarray(df_fn(xj))
    sigma = float(amap.density(xj))

    if not np.any(df):
        logger.warning("df vanishes at %s; using symmetric-difference divergence", x.tolist())
        total = 0.0
        for k in range(len(x)):
            e = np.zeros_like(x)
            e[k] = step
            ahead = amap(x + e, np.asarray(df_fn(jnp.asarray(x + e))))
            behind = amap(x - e, np.asarray(df_fn(jnp.asarray(x - e))))
            total += (ahead[k] - behind[k]) / (2.0 * step)
        value = total / sigma
        if not np.isfinite(value):
            raise InvalidInputError("laplacian is not finite", witness={"x": x.tolist()})
        return LaplacianValue(value=float(value), low_confidence=True)

    # check the Newton solve once before differentiating through it
    legendre_inverse(spec, x, df)
    flux = jax.jacfwd(lambda y: amap.evaluate(y, df_fn(y)))
    value = float(jnp.trace(flux(xj))) / sigma
    trace_value = _non_divergence_form(amap, f, xj, df, sigma)
    if not (np.isfinite(value) and np.isfinite(trace_value)):
        raise InvalidInputError("laplacian is not finite", witness={"x": x.tolist()})
    return LaplacianValue(value=value, trace_form=trace_value)


def _non_divergence_form(amap: AMap, f: ScalarField, xj, df, sigma: float) -> float:
    """g*^{ij} ∂_ij u + ∂_i sigma/sigma * l^-1_i(du) + ∂_{x^i} l^-1_i(x, du)."""
    inverse = amap.duality.inverse
    dfj = jnp.asarray(df)
    hessian = np.asarray(jax.hessian(f.fn)(xj))
    dual = np.asarray(amap.omega_jacobian(xj, dfj)) / sigma
    v = np.asarray(inverse(xj, dfj))
    dsigma = amap.scale * amap.volume.differential(amap.scale * xj)
    x_part = np.asarray(jax.jacfwd(inverse, argnums=0)(xj, dfj))
    return float(np.sum(dual * hessian) + dsigma @ v / sigma + np.trace(x_part))


def laplacian_on_grid(spec, volume: VolumeForm, f: ScalarField, node: int) -> LaplacianValue:
    """Second-order staggered divergence-form difference at a lattice node.

    Fluxes live at the half-way points x ± h/2 e_k; the normal component of du
    there is a one-sided difference and the tangential ones average the centred
    differences of the two adjacent nodes.
    """
    grid = f.grid
    m = grid.dimension
    index = grid.indices[node]
    u = f.values
    eye = np.eye(m, dtype=int)

    def at(offset):
        found = grid.node_at(index + offset)
        if found < 0:
            raise InvalidInputError("node lacks the staggered stencil",
                                    witness={"node": int(node), "x": grid.points[node].tolist()})
        return found

    def centred(base, j):
        return (u[at(base + eye[j])] - u[at(base - eye[j])]) / (2.0 * grid.spacing)

    points, covectors = [], []
    zero = np.zeros(m, dtype=int)
    for k in range(m):
        for sign in (1, -1):
            near = zero + sign * eye[k]
            omega = np.empty(m)
            omega[k] = sign * (u[at(near)] - u[node]) / grid.spacing
            for j in range(m):
                if j != k:
                    omega[j] = 0.5 * (centred(zero, j) + centred(near, j))
            points.append(grid.points[node] + 0.5 * sign * grid.spacing * eye[k])
            covectors.append(omega)

    amap = a_map(spec, volume)
    fluxes = amap.flux(np.array(points), np.array(covectors))
    total = sum((fluxes[2 * k, k] - fluxes[2 * k + 1, k]) / grid.spacing for k in range(m))
    value = total / float(amap.density(jnp.asarray(grid.points[node])))
    return LaplacianValue(value=float(value))


def laplacian_convergence(spec, volume: VolumeForm, f: ScalarField, x, spacings: Sequence[float],
                          half_width: float = 0.5) -> dict:
    """Grid-path errors against the closed-form value for decreasing spacings; least-squares order."""
    exact = laplacian(spec, volume, f, x).value
    errors = []
    for h in spacings:
        grid = Grid.square(half_width, h, dimension=len(x))
        field = ScalarField.on_grid(grid, f.sample(grid), name=f.name)
        node = grid.nearest_node(x)
        if np.linalg.norm(grid.points[node] - np.asarray(x)) > 1e-12:
            raise InvalidInputError("x must be a node of every grid", witness={"x": list(x), "h": h})
        errors.append(abs(laplacian_on_grid(spec, volume, field, node).value - exact))
    errors = np.array(errors)
    order = float(np.polyfit(np.log(spacings), np.log(np.maximum(errors, 1e-300)), 1)[0])
    return {"spacing": list(map(float, spacings)), "error": errors.tolist(), "order": order,
            "exact": exact}


def dirichlet_energy(spec, volume: VolumeForm, f: ScalarField, domain: Union[Box, Grid]) -> EnergyEstimate:
    """E(f) = ½ ∫ F*²(df) sigma dx.

    On a Box the closed-form integrand is integrated with tensor-product
    Gauss-Legendre per cell at `cells` and at 2*`cells` for the refinement
    estimate. On a Grid the piecewise-linear interpolant is integrated exactly
    per simplex with sigma at the centroid.
    """
    amap = a_map(spec, volume)
    if isinstance(domain, Grid):
        values = f.sample(domain)
        omegas = domain.gradients(values)
        fluxes = amap.flux(domain.centroids, omegas)
        energy = float(np.sum(domain.volumes * 0.5 * np.einsum("si,si->s", omegas, fluxes)))
        return EnergyEstimate(value=energy, refined=energy, cells=len(domain.simplices))
    if isinstance(domain, Ball):
        raise InvalidInputError("closed-form energy needs a Box or a Grid domain")
    if not f.has_gradient:
        raise InvalidInputError("box quadrature needs a closed-form field")

    df = jax.jit(jax.vmap(jax.grad(f.fn)))

    def integrate(cells: int) -> float:
        nodes, weights = _gauss_rule(settings.GAUSS_ORDER)
        lower, upper = np.asarray(domain.lower, float), np.asarray(domain.upper, float)
        width = (upper - lower) / cells
        axes, axis_weights = [], []
        for k in range(domain.dimension):
            starts = lower[k] + width[k] * np.arange(cells)
            axes.append((starts[:, None] + 0.5 * width[k] * (nodes + 1.0)[None, :]).ravel())
            axis_weights.append(np.tile(0.5 * width[k] * weights, cells))
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dimension)
        w = np.prod(np.stack(np.meshgrid(*axis_weights, indexing="ij"), axis=-1).reshape(-1, domain.dimension),
                    axis=1)
        omegas = np.asarray(df(jnp.asarray(points)))
        fluxes = amap.flux(points, omegas)
        return float(np.sum(w * 0.5 * np.einsum("qi,qi->q", omegas, fluxes)))

    coarse, fine = integrate(domain.cells), integrate(2 * domain.cells)
    return EnergyEstimate(value=coarse, refined=fine, cells=domain.cells ** domain.dimension)


def verify_structure_conditions(spec, volume: VolumeForm, domain: Union[Box, Ball], samples: int,
                                seed: Optional[int] = None) -> StructureReport:
    """Empirical constant C for the growth, ellipticity and monotonicity conditions of A.

    Each condition's constant is the worst ratio seen on the sample; C is the
    largest of them. A condition is violated when no finite positive constant
    exists on the sample (non-finite or nonpositive measured quantity).
    Half of the monotonicity pairs lie on opposite rays.
    """
    if samples < 1:
        raise InvalidInputError("samples must be >= 1", witness={"samples": samples})
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    m = spec.dimension
    amap = a_map(spec, volume)

    xs = domain.sample(samples, rng)
    omegas = sample_directions(m, samples, rng) * np.exp(rng.uniform(np.log(0.1), np.log(10.0), (samples, 1)))
    A = amap.flux(xs, omegas)
    xj, oj = jnp.asarray(xs), jnp.asarray(omegas)
    DA_omega = np.asarray(amap.omega_jacobian_batch(xj, oj))
    DA_x = np.asarray(amap.x_jacobian_batch(xj, oj))

    norms = np.linalg.norm(omegas, axis=1)
    a_ratio = np.linalg.norm(A, axis=1) / norms
    x_ratio = np.linalg.norm(DA_x, ord=2, axis=(1, 2)) / norms
    omega_norm = np.linalg.norm(DA_omega, ord=2, axis=(1, 2))
    ellipticity = np.linalg.eigvalsh(0.5 * (DA_omega + np.swapaxes(DA_omega, 1, 2)))[:, 0]

    # monotonicity pairs: a fresh covector at the same x, every other one antipodal
    others = sample_directions(m, samples, rng) * np.exp(rng.uniform(np.log(0.1), np.log(10.0), (samples, 1)))
    antipodal = np.arange(samples) % 2 == 1
    stretch = rng.uniform(0.1, 10.0, samples)
    others[antipodal] = -stretch[antipodal, None] * omegas[antipodal]
    A_other = amap.flux(xs, others)
    difference = others - omegas
    monotone = np.einsum("si,si->s", A_other - A, difference) / np.einsum("si,si->s", difference, difference)

    violations = []

    def record(condition, bad, measured, bound, partner=None):
        for s in np.flatnonzero(bad):
            violations.append(StructureViolation(
                condition=condition, x=xs[s].tolist(), omega=omegas[s].tolist(),
                omega_other=None if partner is None else partner[s].tolist(),
                measured=float(measured[s]), bound=bound))

    growth_terms = np.stack([a_ratio, x_ratio, omega_norm])
    record(1, ~np.all(np.isfinite(growth_terms), axis=0), a_ratio, float("inf"))
    record(2, ~np.isfinite(ellipticity) | (ellipticity <= 0.0), ellipticity, 0.0)
    record(3, ~np.isfinite(monotone) | (monotone <= 0.0), monotone, 0.0, partner=others)

    finite = np.all(np.isfinite(growth_terms), axis=0)
    growth = float(growth_terms[:, finite].max()) if finite.any() else float("inf")
    growth_sum = float(growth_terms[:, finite].sum(axis=0).max()) if finite.any() else float("inf")
    min_ellipticity = float(np.nanmin(ellipticity))
    min_monotone = float(np.nanmin(monotone))
    ellipticity_constant = 1.0 / min_ellipticity if min_ellipticity > 0 else float("inf")
    monotonicity_constant = 1.0 / min_monotone if min_monotone > 0 else float("inf")

    report = StructureReport(
        C=max(growth, ellipticity_constant, monotonicity_constant),
        growth_constant=growth,
        growth_sum_constant=growth_sum,
        ellipticity_constant=ellipticity_constant,
        monotonicity_constant=monotonicity_constant,
        min_ellipticity=min_ellipticity,
        samples=samples,
        pairs=samples,
        violations=violations,
    )
    logger.info("structure conditions: C=%.6g over %d samples, %d violations",
                report.C, samples, len(violations))
    return report
