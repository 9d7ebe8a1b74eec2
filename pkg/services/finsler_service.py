"""Finsler metric evaluation: F, its exact derivatives, the fundamental tensor, pullbacks."""
import functools
import logging
from typing import Callable, List

import jax
import jax.numpy as jnp
import numpy as np
from pydantic import ValidationError

from config import settings
from errors import (DegenerateDirectionError, InvalidInputError, MetricInvalidError,
                    PullbackDegenerateError)
from models.geometry import FundamentalTensor
from models.metric import (Diagnostic, EuclideanMetric, LocallyMinkowskiMetric, PullbackMetric,
                           RandersMetric, RiemannianMetric)

logger = logging.getLogger(__name__)


def finsler_function(spec) -> Callable:
    """Pure jax function (x, v) -> F(x, v) for any MetricSpec kind."""
    if isinstance(spec, EuclideanMetric):
        return lambda x, v: jnp.sqrt(jnp.dot(v, v))
    if isinstance(spec, RiemannianMetric):
        A = spec.matrix_field
        return lambda x, v: jnp.sqrt(v @ A(x) @ v)
    if isinstance(spec, RandersMetric):
        A, b = spec.matrix_field, spec.covector_field
        return lambda x, v: jnp.sqrt(v @ A(x) @ v) + jnp.dot(b(x), v)
    if isinstance(spec, LocallyMinkowskiMetric):
        M = jnp.asarray(spec.matrix, dtype=jnp.float64)
        c = jnp.asarray(spec.covector())
        return lambda x, v: jnp.sqrt(v @ M @ v) + jnp.dot(c, v)
    if isinstance(spec, PullbackMetric):
        inner = finsler_function(spec.inner)
        diffeo = spec.diffeo
        return lambda x, v: inner(diffeo.forward(x), diffeo.jacobian(x) @ v)
    raise InvalidInputError(f"unsupported metric kind: {type(spec).__name__}")


def quadratic_part(spec) -> Callable:
    """x -> A(x), the Riemannian part of the metric (pulled back through diffeos)."""
    if isinstance(spec, EuclideanMetric):
        return lambda x: jnp.eye(spec.dimension)
    if isinstance(spec, (RiemannianMetric, RandersMetric)):
        return spec.matrix_field
    if isinstance(spec, LocallyMinkowskiMetric):
        M = jnp.asarray(spec.matrix, dtype=jnp.float64)
        return lambda x: M
    if isinstance(spec, PullbackMetric):
        inner = quadratic_part(spec.inner)
        diffeo = spec.diffeo

        def pulled(x):
            J = diffeo.jacobian(x)
            return J.T @ inner(diffeo.forward(x)) @ J

        return pulled
    raise InvalidInputError(f"unsupported metric kind: {type(spec).__name__}")


def is_x_independent(spec) -> bool:
    if isinstance(spec, (EuclideanMetric, LocallyMinkowskiMetric)):
        return True
    if isinstance(spec, RiemannianMetric):
        return spec.matrix_field.name == "constant"
    if isinstance(spec, RandersMetric):
        return spec.matrix_field.name == "constant" and spec.covector_field.name == "constant"
    return False


class FinslerMetric:
    """Compiled evaluators for one metric specification.

    All derivatives are nested forward-mode (`jax.jacfwd`) derivatives of the
    closed-form F, so they are exact to machine precision.
    """

    def __init__(self, spec):
        self.spec = spec
        self.dimension = spec.dimension
        self.F = finsler_function(spec)

        def half_energy(x, v):
            return 0.5 * self.F(x, v) ** 2

        self.half_energy = half_energy
        self.vertical_gradient = jax.jacfwd(half_energy, argnums=1)
        self.fundamental = jax.jacfwd(self.vertical_gradient, argnums=1)

        self._F = jax.jit(self.F)
        self._vertical_gradient = jax.jit(self.vertical_gradient)
        self._fundamental = jax.jit(self.fundamental)
        self.F_batch = jax.jit(jax.vmap(self.F))
        self.fundamental_batch = jax.jit(jax.vmap(self.fundamental))
        self.vertical_gradient_batch = jax.jit(jax.vmap(self.vertical_gradient))
        logger.debug("compiled metric evaluators for %s (m=%d)", spec.kind, self.dimension)

    # Public evaluators take numpy-compatible input and return numpy values

    def value(self, x, v) -> float:
        return float(self._F(_as_array(x), _as_array(v)))

    def legendre(self, x, v) -> np.ndarray:
        return np.asarray(self._vertical_gradient(_as_array(x), _as_array(v)))

    def tensor(self, x, v) -> np.ndarray:
        return np.asarray(self._fundamental(_as_array(x), _as_array(v)))

    def check_point(self, x, v=None):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,) or not np.all(np.isfinite(x)):
            raise InvalidInputError("point must be a finite vector of the metric's dimension",
                                    witness={"x": np.asarray(x).tolist()})
        if v is not None:
            v = np.asarray(v, dtype=float)
            if v.shape != (self.dimension,) or not np.all(np.isfinite(v)):
                raise InvalidInputError("vector must be finite and of the metric's dimension",
                                        witness={"v": np.asarray(v).tolist()})
        margin = self.spec.convexity_margin(x)
        if margin <= 0.0:
            raise MetricInvalidError("strong convexity violated at evaluation point",
                                     witness={"x": x.tolist(), "margin": float(margin)})


@functools.lru_cache(maxsize=settings.EVALUATOR_CACHE_SIZE)
def _slot(key: str, spec_json: str) -> dict:
    return {}


def cached(spec, key: str, factory: Callable):
    """Per-spec memo of compiled objects; specs are immutable so the JSON is a key.

    Least recently used (key, spec) slots are evicted beyond EVALUATOR_CACHE_SIZE.
    """
    slot = _slot(key, spec.model_dump_json())
    found = slot.get("value")
    if found is None:
        found = slot.setdefault("value", factory(spec))
    return found


def get_metric(spec) -> FinslerMetric:
    return cached(spec, "metric", FinslerMetric)


def _as_array(a):
    return jnp.asarray(np.asarray(a, dtype=float))


def require_direction(v, what: str = "direction"):
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise DegenerateDirectionError(f"{what} must be nonzero", witness={what: v.tolist()})
    return v


# ======================
# OPERATIONS
# ======================

def eval_F(spec, x, v) -> float:
    metric = get_metric(spec)
    metric.check_point(x, v)
    if not np.any(np.asarray(v, dtype=float)):
        return 0.0
    return metric.value(x, v)


def fundamental_tensor(spec, x, v) -> FundamentalTensor:
    metric = get_metric(spec)
    metric.check_point(x, v)
    v = require_direction(v)
    x = np.asarray(x, dtype=float)
    g = metric.tensor(x, v)
    return FundamentalTensor(x=x, v=v, matrix=0.5 * (g + g.T))


def vertical_derivative(spec, x, v) -> np.ndarray:
    """½ ∂F²/∂v at (x, v)."""
    metric = get_metric(spec)
    metric.check_point(x, v)
    return metric.legendre(x, require_direction(v))


def pullback_metric(spec, diffeo) -> PullbackMetric:
    """The metric (x, v) -> F(I(x), dI(x) v), audited on the spec's sample grid."""
    try:
        pulled = PullbackMetric.model_validate(
            {"dimension": spec.dimension, "inner": spec, "diffeo": diffeo,
             "audit_radius": spec.audit_radius, "audit_resolution": spec.audit_resolution},
            context={"audit": False},
        )
    except ValidationError as e:
        raise MetricInvalidError(f"invalid pullback: {e}") from e
    for diagnostic in pulled.audit():
        witness = {"point": diagnostic.point, "value": diagnostic.value}
        if diagnostic.code == "pullback-degenerate":
            raise PullbackDegenerateError(diagnostic.message, witness=witness)
        raise MetricInvalidError(diagnostic.message, witness=witness)
    return pulled


def sample_directions(m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    directions = rng.normal(size=(count, m))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def sample_points(spec, count: int, rng: np.random.Generator, radius: float = None) -> np.ndarray:
    """Uniform points in the ball of `radius` (default: the spec's audit radius)."""
    radius = spec.audit_radius if radius is None else radius
    m = spec.dimension
    directions = sample_directions(m, count, rng)
    radii = radius * rng.uniform(size=(count, 1)) ** (1.0 / m)
    return directions * radii


def riemannian_density(spec) -> Callable:
    """x -> sqrt det A(x) of the Riemannian part."""
    A = quadratic_part(spec)
    return lambda x: jnp.sqrt(jnp.linalg.det(A(x)))


def audit_metric(spec) -> List[Diagnostic]:
    """Eager construction audits as data, descending into pullbacks."""
    found = list(spec.audit())
    if isinstance(spec, PullbackMetric):
        found = audit_metric(spec.inner) + found
    return found
