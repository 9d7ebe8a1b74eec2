"""Spray coefficients, nonlinear connection, Riemann curvature and the Berwald (Chern) tensors."""
import logging
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from config import settings
from errors import ConditioningError, NotBerwaldError
from models.geometry import ConnectionData, CurvatureData, SprayData
from services.finsler_service import cached, get_metric, require_direction
from services.legendre_service import sweep_directions

logger = logging.getLogger(__name__)


class SprayEngine:
    """Jitted G, N, R^i_k and Berwald Gamma for one metric, all from exact derivatives of F²."""

    def __init__(self, spec):
        self.spec = spec
        metric = get_metric(spec)
        F = metric.F

        def energy(x, y):
            return F(x, y) ** 2

        mixed = jax.jacfwd(jax.jacfwd(energy, argnums=1), argnums=0)
        dx_energy = jax.grad(energy, argnums=0)
        fundamental = metric.fundamental

        def G(x, y):
            # ¼ g^{ij} (∂²F²/∂x^k∂y^j y^k - ∂F²/∂x^j)
            rhs = mixed(x, y) @ y - dx_energy(x, y)
            return 0.25 * jnp.linalg.solve(fundamental(x, y), rhs)

        dG_dy = jax.jacfwd(G, argnums=1)

        def N(x, y):
            # N^i_j = ∂G^i/∂y^j, so N = Gamma y when G = ½ Gamma y y
            return dG_dy(x, y)

        dG_dx = jax.jacfwd(G, argnums=0)
        dG_dydx = jax.jacfwd(dG_dy, argnums=0)
        dG_dydy = jax.jacfwd(dG_dy, argnums=1)

        def R(x, y):
            g = G(x, y)
            dy = dG_dy(x, y)
            return (2.0 * dG_dx(x, y)
                    - jnp.einsum("ikm,m->ik", dG_dydx(x, y), y)
                    + 2.0 * jnp.einsum("m,imk->ik", g, dG_dydy(x, y))
                    - dy @ dy)

        def christoffel_at(x, y):
            # Gamma^i_jk = ∂N^i_j/∂y^k
            return jax.jacfwd(N, argnums=1)(x, y)

        self.G = G
        self.N = N
        self.R = R
        self.christoffel_at = christoffel_at
        self.fundamental = fundamental
        self._G = jax.jit(G)
        self._N = jax.jit(N)
        self._R = jax.jit(R)
        self._christoffel = jax.jit(christoffel_at)
        self._fundamental = jax.jit(fundamental)
        self._dG = jax.jit(lambda x, y: (dG_dx(x, y), dG_dy(x, y)))

    def spray_at(self, x, y):
        return np.asarray(self._G(x, y)), np.asarray(self._N(x, y))

    def curvature_at(self, x, y) -> np.ndarray:
        return np.asarray(self._R(x, y))

    def christoffel(self, x, y) -> np.ndarray:
        return np.asarray(self._christoffel(x, y))

    def spray_derivatives(self, x, y):
        dx, dy = self._dG(x, y)
        return np.asarray(dx), np.asarray(dy)


def get_spray(spec) -> SprayEngine:
    return cached(spec, "spray", SprayEngine)


def _point(spec, x, y):
    metric = get_metric(spec)
    metric.check_point(x, y)
    y = require_direction(y, "y")
    return jnp.asarray(np.asarray(x, dtype=float)), jnp.asarray(y)


def _check_conditioning(engine: SprayEngine, x, y):
    g = np.asarray(engine._fundamental(x, y))
    condition = float(np.linalg.cond(g))
    if not np.isfinite(condition) or condition > settings.CONDITION_LIMIT:
        raise ConditioningError(f"fundamental tensor ill-conditioned (cond {condition:.3e})",
                                witness={"x": np.asarray(x).tolist(), "y": np.asarray(y).tolist()})


def linearity_defect(spec, x, directions: Optional[np.ndarray] = None) -> float:
    """max over directions of |Gamma(x, y) - Gamma(x, e)| with e a reference direction."""
    engine = get_spray(spec)
    m = spec.dimension
    directions = sweep_directions(m, 10) if directions is None else directions
    xj = jnp.asarray(np.asarray(x, dtype=float))
    reference = engine.christoffel(xj, jnp.asarray(directions[0]))
    return float(max(np.abs(engine.christoffel(xj, jnp.asarray(d)) - reference).max() for d in directions[1:]))


# ======================
# OPERATIONS
# ======================

def spray(spec, x, y) -> SprayData:
    xj, yj = _point(spec, x, y)
    engine = get_spray(spec)
    _check_conditioning(engine, xj, yj)
    G, N = engine.spray_at(xj, yj)
    return SprayData(x=np.asarray(xj), y=np.asarray(yj), G=G, N=N)


def riemann_curvature(spec, x, y, with_tensor: bool = False) -> CurvatureData:
    """R^i_k(x, y) by the five-term formula; R^i_jkl added for Berwald metrics on request."""
    xj, yj = _point(spec, x, y)
    engine = get_spray(spec)
    _check_conditioning(engine, xj, yj)
    Rk = engine.curvature_at(xj, yj)
    R4 = chern_from_berwald(berwald_connection(spec), np.asarray(xj)) if with_tensor else None
    return CurvatureData(x=np.asarray(xj), y=np.asarray(yj), Rk=Rk, ricci_scalar=float(np.trace(Rk)), R4=R4)


def nonlinear_connection(spec) -> ConnectionData:
    return ConnectionData(mode="nonlinear", nonlinear=get_spray(spec).N)


def berwald_connection(spec, points: Optional[np.ndarray] = None, tol: Optional[float] = None) -> ConnectionData:
    """Linear connection Gamma(x); refuses metrics whose N is not linear in y at the audit points."""
    tol = settings.BERWALD_TOL if tol is None else tol
    engine = get_spray(spec)
    if points is None:
        points = np.random.default_rng(settings.DEFAULT_SEED).uniform(
            -0.5 * spec.audit_radius, 0.5 * spec.audit_radius, (5, spec.dimension))
    for x in points:
        defect = linearity_defect(spec, x)
        if defect > tol:
            raise NotBerwaldError(f"nonlinear connection is not linear in y (defect {defect:.3e})",
                                  witness={"x": np.asarray(x).tolist(), "defect": defect})
    reference = jnp.asarray(np.eye(spec.dimension)[0])

    def christoffel(x):
        gamma = engine.christoffel_at(x, reference)
        return 0.5 * (gamma + jnp.swapaxes(gamma, 1, 2))

    return ConnectionData(mode="berwald-linear", nonlinear=engine.N, christoffel=christoffel)


def chern_from_berwald(conn: ConnectionData, x) -> np.ndarray:
    """R^i_jkl = ∂_k Gamma^i_jl - ∂_l Gamma^i_jk + Gamma^m_jl Gamma^i_mk - Gamma^m_jk Gamma^i_ml."""
    if conn.mode != "berwald-linear" or conn.christoffel is None:
        raise NotBerwaldError("curvature tensor needs a berwald-linear connection", witness={"mode": conn.mode})
    xj = jnp.asarray(np.asarray(x, dtype=float))
    gamma = np.asarray(conn.christoffel(xj))
    # dgamma[i, j, l, k] = ∂_k Gamma^i_jl
    dgamma = np.asarray(jax.jacfwd(conn.christoffel)(xj))
    return (np.einsum("ijlk->ijkl", dgamma) - dgamma
            + np.einsum("mjl,imk->ijkl", gamma, gamma)
            - np.einsum("mjk,iml->ijkl", gamma, gamma))


def covariant_derivative(conn: ConnectionData, V: Callable, x, y) -> np.ndarray:
    """D_y V = dV(y) + N(y) V; zero for y = 0."""
    y = np.asarray(y, dtype=float)
    xj = jnp.asarray(np.asarray(x, dtype=float))
    if not np.any(y):
        return np.zeros_like(y)
    yj = jnp.asarray(y)
    dV = np.asarray(jax.jacfwd(V)(xj)) @ y
    return dV + np.asarray(conn.nonlinear(xj, yj)) @ np.asarray(V(xj))


def horizontal_laplacian(spec, f: Callable, x, y, tol: Optional[float] = None) -> dict:
    """Delta_H f at (x, y) in divergence form, with the g-trace of the Hessian as a second path.

    Divergence form: (1/sqrt g) δ/δx^i (sqrt g g^ij ∂_j f), δ/δx^i = ∂/∂x^i - N^m_i ∂/∂y^m.
    Trace form: g^ij ∂_ij f - ∂_k f g^ij Gamma^k_ij.
    """
    xj, yj = _point(spec, x, y)
    tol = settings.BERWALD_TOL if tol is None else tol
    defect = linearity_defect(spec, np.asarray(xj))
    if defect > tol:
        raise NotBerwaldError(f"nonlinear connection is not linear in y (defect {defect:.3e})",
                              witness={"x": np.asarray(xj).tolist(), "defect": defect})
    engine = get_spray(spec)
    df = jax.grad(f)

    def flux(x, y):
        g = engine.fundamental(x, y)
        return jnp.sqrt(jnp.linalg.det(g)) * jnp.linalg.solve(g, df(x))

    d_x = np.asarray(jax.jacfwd(flux, argnums=0)(xj, yj))
    d_y = np.asarray(jax.jacfwd(flux, argnums=1)(xj, yj))
    N = np.asarray(engine.N(xj, yj))
    g = np.asarray(engine.fundamental(xj, yj))
    # δW^i/δx^i = ∂_i W^i - N^m_i ∂W^i/∂y^m
    divergence = (np.trace(d_x) - np.einsum("mi,im->", N, d_y)) / np.sqrt(np.linalg.det(g))

    g_inv = np.linalg.inv(g)
    gamma = engine.christoffel(xj, yj)
    trace = float(np.sum(g_inv * np.asarray(jax.hessian(f)(xj)))
                  - np.asarray(df(xj)) @ np.einsum("ij,kij->k", g_inv, gamma))
    return {"divergence_form": float(divergence), "trace_form": trace,
            "deviation": abs(float(divergence) - trace)}


def geodesic_field(spec, x, y) -> np.ndarray:
    """(y, -2G(x, y)): the geodesic spray at (x, y); -2G = -Gamma^i_jk y^j y^k for Berwald metrics."""
    data = spray(spec, x, y)
    return np.concatenate([data.y, -2.0 * data.G])
