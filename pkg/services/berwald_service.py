"""Berwald detection, indicatrix quadrature, the averaged metric h and its curvature checks."""
import logging
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from config import settings
from errors import InvalidInputError, NotBerwaldError
from models.geometry import AveragedMetric, ConnectionData, IndicatrixQuadrature
from models.grid import Ball
from services.finsler_service import cached, get_metric, sample_directions
from services.spray_service import berwald_connection, chern_from_berwald, get_spray

logger = logging.getLogger(__name__)

MEASURES = ("surface", "cone")


# ======================
# INDICATRIX RULES
# ======================

def _check_rule(m: int, n: int, measure: str):
    if m not in (2, 3):
        raise InvalidInputError("indicatrix quadrature supports m = 2 and m = 3", witness={"dimension": m})
    if n < 16:
        raise InvalidInputError("indicatrix quadrature needs n >= 16 nodes", witness={"n": n})
    if measure not in MEASURES:
        raise InvalidInputError(f"unknown indicatrix measure: {measure}", witness={"measure": measure})


def indicatrix_rule(F: Callable, m: int, n: int, measure: str) -> Callable:
    """x -> (nodes, weights) on S_x = {F(x, .) = 1}, jax-traceable in x.

    Nodes are radial projections y = u / F(x, u) of fixed parameter directions u.
    m = 2: trapezoid in the angle (n nodes). m = 3: Gauss-Legendre in cos(theta)
    times trapezoid in phi, about n nodes. `surface` weights are the Euclidean
    arc-length / area elements of the parametrised indicatrix; `cone` weights
    are those of the Lebesgue form contracted with the position vector,
    r^m d(omega) in polar terms.
    """
    _check_rule(m, n, measure)

    if m == 2:
        angles = 2.0 * np.pi * np.arange(n) / n
        params = jnp.asarray(angles[:, None])
        base_weights = jnp.full(n, 2.0 * np.pi / n)

        def direction(p):
            return jnp.array([jnp.cos(p[0]), jnp.sin(p[0])])
    else:
        n_t = max(4, int(round(np.sqrt(n / 2.0))))
        n_phi = 2 * n_t
        t, w_t = np.polynomial.legendre.leggauss(n_t)
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        tt, pp = np.meshgrid(t, phi, indexing="ij")
        params = jnp.asarray(np.stack([tt.ravel(), pp.ravel()], axis=1))
        base_weights = jnp.asarray(np.outer(w_t, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel())

        def direction(p):
            s = jnp.sqrt(1.0 - p[0] ** 2)
            return jnp.array([s * jnp.cos(p[1]), s * jnp.sin(p[1]), p[0]])

    def rule(x):
        def point(p):
            u = direction(p)
            return u / F(x, u)

        nodes = jax.vmap(point)(params)
        if measure == "cone":
            radii = jnp.linalg.norm(nodes, axis=1)
            return nodes, base_weights * radii ** m
        tangents = jax.vmap(jax.jacfwd(point))(params)  # (Q, m, m-1)
        if m == 2:
            element = jnp.linalg.norm(tangents[:, :, 0], axis=1)
        else:
            element = jnp.linalg.norm(jnp.cross(tangents[:, :, 0], tangents[:, :, 1]), axis=1)
        return nodes, base_weights * element

    return rule


# ======================
# RIEMANNIAN TOOLS FOR SPD FIELDS
# ======================

def levi_civita(h: Callable) -> Callable:
    """x -> Gamma^i_jk = ½ h^il (∂_j h_lk + ∂_k h_lj - ∂_l h_jk)."""
    dh = jax.jacfwd(h)

    def christoffel(x):
        d = dh(x)  # d[l, k, j] = ∂_j h_lk
        lowered = jnp.swapaxes(d, 1, 2) + d - jnp.transpose(d, (2, 0, 1))
        return 0.5 * jnp.einsum("il,ljk->ijk", jnp.linalg.inv(h(x)), lowered)

    return christoffel


def riemann_tensor(h: Callable, x) -> np.ndarray:
    return chern_from_berwald(ConnectionData(mode="berwald-linear", nonlinear=None,
                                             christoffel=levi_civita(h)), x)


def ricci_tensor(h: Callable, x) -> np.ndarray:
    """Ric_ab = R^m_amb."""
    return np.einsum("mamb->ab", riemann_tensor(h, x))


# ======================
# OPERATIONS
# ======================

def indicatrix_quadrature(spec, x, n: Optional[int] = None, measure: str = "surface") -> IndicatrixQuadrature:
    n = settings.INDICATRIX_NODES if n is None else n
    metric = get_metric(spec)
    metric.check_point(x)
    rule = cached(spec, f"indicatrix:{n}:{measure}",
                  lambda s: jax.jit(indicatrix_rule(metric.F, s.dimension, n, measure)))
    nodes, weights = rule(jnp.asarray(np.asarray(x, dtype=float)))
    return IndicatrixQuadrature(x=np.asarray(x, dtype=float), nodes=np.asarray(nodes),
                                weights=np.asarray(weights), measure=measure)


def averaged_metric(spec, n: Optional[int] = None, measure: Optional[str] = None) -> AveragedMetric:
    """h(x) = sum_q w_q g(x, y_q) / sum_q w_q; differentiable in x through the indicatrix."""
    n = settings.INDICATRIX_NODES if n is None else n
    measure = settings.INDICATRIX_MEASURE if measure is None else measure

    def build(spec):
        metric = get_metric(spec)
        rule = indicatrix_rule(metric.F, spec.dimension, n, measure)
        fundamental = metric.fundamental

        def h(x):
            nodes, weights = rule(x)
            tensors = jax.vmap(lambda y: fundamental(x, y))(nodes)
            averaged = jnp.einsum("q,qij->ij", weights, tensors) / jnp.sum(weights)
            return 0.5 * (averaged + averaged.T)

        return AveragedMetric(evaluator=h, order=n, measure=measure)

    return cached(spec, f"averaged:{n}:{measure}", build)


def is_berwald(spec, domain=None, tol: Optional[float] = None, points: int = 8, directions: int = 10,
               seed: Optional[int] = None) -> dict:
    """Least-squares fit of N^i_j(x, y) = Gamma^i_jk(x) y^k at random (x, y); berwald iff the residual <= tol."""
    tol = settings.BERWALD_TOL if tol is None else tol
    domain = Ball(center=(0.0,) * spec.dimension, radius=0.5 * spec.audit_radius) if domain is None else domain
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    engine = get_spray(spec)
    m = spec.dimension
    worst, worst_point = 0.0, None
    for x in domain.sample(points, rng):
        ys = sample_directions(m, directions, rng)
        xj = jnp.asarray(x)
        N = np.stack([engine.spray_at(xj, jnp.asarray(y))[1].ravel() for y in ys])
        fit, *_ = np.linalg.lstsq(ys, N, rcond=None)
        residual = float(np.abs(ys @ fit - N).max())
        if residual > worst:
            worst, worst_point = residual, x
    berwald = worst <= tol
    logger.info("berwald test for %s: max nonlinearity %.3e (%s)", spec.kind, worst,
                "berwald" if berwald else "not berwald")
    return {"berwald": bool(berwald), "max_nonlinearity": worst,
            "witness": None if worst_point is None else {"x": np.asarray(worst_point).tolist()}}


def _require_berwald(spec, domain, seed):
    found = is_berwald(spec, domain, seed=seed)
    if not found["berwald"]:
        raise NotBerwaldError(f"metric is not Berwald (nonlinearity {found['max_nonlinearity']:.3e})",
                              witness=found["witness"])


def _sample(spec, domain, samples: int, seed):
    domain = Ball(center=(0.0,) * spec.dimension, radius=0.5 * spec.audit_radius) if domain is None else domain
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    return domain, domain.sample(samples, rng)


def szabo_check(spec, n: Optional[int] = None, domain=None, tol: Optional[float] = None, samples: int = 5,
                measure: Optional[str] = None, seed: Optional[int] = None) -> dict:
    """max |Gamma_LC(h) - Gamma_Berwald| over sampled x."""
    tol = settings.SZABO_TOL if tol is None else tol
    domain, xs = _sample(spec, domain, samples, seed)
    _require_berwald(spec, domain, seed)
    h = averaged_metric(spec, n, measure)
    christoffel_h = jax.jit(levi_civita(h.evaluator))
    connection = berwald_connection(spec, points=xs)
    deviation = 0.0
    for x in xs:
        xj = jnp.asarray(x)
        deviation = max(deviation, float(np.abs(np.asarray(christoffel_h(xj))
                                                - np.asarray(connection.christoffel(xj))).max()))
    return {"max_deviation": deviation, "passed": deviation <= tol, "tolerance": tol,
            "samples": samples, "measure": h.measure}


def ricci_identity_check(spec, n: Optional[int] = None, domain=None, tol: Optional[float] = None,
                         samples: int = 5, measure: Optional[str] = None, seed: Optional[int] = None) -> dict:
    """Ric from ½∂²R/∂y², from R^m_amb of the Chern tensor, and from h's own curvature."""
    tol = settings.RICCI_TOL if tol is None else tol
    domain, xs = _sample(spec, domain, samples, seed)
    _require_berwald(spec, domain, seed)
    engine = get_spray(spec)
    connection = berwald_connection(spec, points=xs)
    szabo = szabo_check(spec, n, domain, samples=samples, measure=measure, seed=seed)
    h = averaged_metric(spec, n, measure)
    half_hessian = jax.jit(jax.hessian(lambda x, y: 0.5 * jnp.trace(engine.R(x, y)), argnums=1))
    directions = sample_directions(spec.dimension, 4, np.random.default_rng(settings.DEFAULT_SEED))

    y_dependence = spray_vs_chern = h_vs_chern = 0.0
    first = {}
    for x in xs:
        xj = jnp.asarray(x)
        from_spray = [np.asarray(half_hessian(xj, jnp.asarray(y))) for y in directions]
        from_chern = np.einsum("mamb->ab", chern_from_berwald(connection, x))
        y_dependence = max(y_dependence, max(float(np.abs(r - from_spray[0]).max()) for r in from_spray))
        spray_vs_chern = max(spray_vs_chern, float(np.abs(from_spray[0] - from_chern).max()))
        if szabo["passed"]:
            from_h = ricci_tensor(h.evaluator, x)
            h_vs_chern = max(h_vs_chern, float(np.abs(from_h - from_chern).max()))
        if not first:
            first = {"x": x.tolist(), "ricci_spray": from_spray[0].tolist(), "ricci_chern": from_chern.tolist(),
                     "h": np.asarray(h(xj)).tolist()}
    if not szabo["passed"]:
        h_vs_chern = float("nan")
    deviation = max(y_dependence, spray_vs_chern, 0.0 if np.isnan(h_vs_chern) else h_vs_chern)
    return {"max_deviation": deviation, "y_dependence": y_dependence, "spray_vs_chern": spray_vs_chern,
            "h_vs_chern": h_vs_chern, "szabo_passed": szabo["passed"],
            "passed": deviation <= tol and szabo["passed"], "tolerance": tol, "first_sample": first}


def quadratic_structure_audit(spec, x, fit_directions: int = 6, held_out: int = 20,
                              seed: Optional[int] = None) -> float:
    """Fit R(x, y) = y.Q.y on a few directions and report the max error on held-out ones."""
    rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
    engine = get_spray(spec)
    m = spec.dimension
    xj = jnp.asarray(np.asarray(x, dtype=float))
    upper = np.triu_indices(m)

    def features(y):
        outer = np.outer(y, y)
        return np.where(upper[0] == upper[1], 1.0, 2.0) * outer[upper]

    def ricci(y):
        return float(np.trace(engine.curvature_at(xj, jnp.asarray(y))))

    fit_ys = sample_directions(m, fit_directions, rng)
    coefficients, *_ = np.linalg.lstsq(np.stack([features(y) for y in fit_ys]),
                                       np.array([ricci(y) for y in fit_ys]), rcond=None)
    test_ys = sample_directions(m, held_out, rng)
    predicted = np.stack([features(y) for y in test_ys]) @ coefficients
    return float(np.abs(predicted - np.array([ricci(y) for y in test_ys])).max())
