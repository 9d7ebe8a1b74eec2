"""Legendre map, its Newton inverse, the co-Finsler metric F* and the dual tensor g*."""
import logging

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

from config import settings
from errors import ConditioningError, NoConvergenceError
from models.geometry import CotangentPoint, LegendreResult
from services.finsler_service import cached, get_metric, require_direction

logger = logging.getLogger(__name__)


def sweep_directions(m: int, count: int) -> np.ndarray:
    """Fixed unit directions for the coarse F* estimate (deterministic)."""
    if m == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    directions = np.random.default_rng(12345).normal(size=(count, m))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


class LegendreDuality:
    """Compiled Legendre inverse for one metric.

    `inverse(x, omega)` is a `jax.custom_jvp` function: its value is a Newton
    solve of l(x, v) = omega, its derivative follows from the implicit function
    theorem (g dv = d omega - d_x l dx), so it composes with further jacfwd.
    """

    def __init__(self, spec):
        self.spec = spec
        self.metric = get_metric(spec)
        m = spec.dimension
        F = self.metric.F
        half_energy = self.metric.half_energy
        gradient = self.metric.vertical_gradient
        hessian = self.metric.fundamental
        directions = jnp.asarray(sweep_directions(m, settings.LEGENDRE_SWEEP_DIRECTIONS))
        max_iter = settings.LEGENDRE_MAX_ITER
        armijo_c, shrink = settings.ARMIJO_C, settings.ARMIJO_FACTOR
        # merit differences sink below rounding once the residual is this small
        full_step_residual = 1e-6

        def solve_unit(x, w, target):
            # Coarse F*(w) from the direction sweep, then the Euclidean ray w scaled to it
            sweep = jax.vmap(lambda u: jnp.dot(w, u) / F(x, u))(directions)
            v = jnp.max(sweep) * w / F(x, w)

            def merit(v):
                return half_energy(x, v) - jnp.dot(w, v)

            def residual(v):
                return jnp.linalg.norm(gradient(x, v) - w)

            def newton_direction(v):
                r = gradient(x, v) - w
                return r, -jnp.linalg.solve(hessian(x, v), r)

            def step(state):
                v, k, _ = state
                r, d = newton_direction(v)
                phi0, slope = merit(v), jnp.dot(r, d)
                near = jnp.linalg.norm(r) < full_step_residual

                def backtrack(t):
                    return (~near) & (merit(v + t * d) > phi0 + armijo_c * t * slope) & (t > 1e-12)

                t = lax.while_loop(backtrack, lambda t: t * shrink, 1.0)
                t = jnp.where(t > 1e-12, t, 1.0)
                v = v + t * d
                return v, k + 1, residual(v)

            def running(state):
                _, k, res = state
                return (res > target) & (k < max_iter)

            v, k, res = lax.while_loop(running, step, (v, 0, residual(v)))
            # one polishing step, kept only when it lowers the residual
            polished = v + newton_direction(v)[1]
            polished_res = residual(polished)
            better = jnp.isfinite(polished_res) & (polished_res < res)
            return jnp.where(better, polished, v), k, jnp.where(better, polished_res, res)

        def solve(x, omega):
            norm = jnp.linalg.norm(omega)
            positive = norm > 0
            scale = jnp.where(positive, norm, 1.0)
            unit = jnp.where(positive, omega / scale, jnp.eye(m)[0])
            # acceptance is ‖l(v) - omega‖ <= tol (1 + ‖omega‖); at unit scale that is tol (1 + ‖omega‖) / ‖omega‖
            target = 0.5 * settings.LEGENDRE_TOL * (1.0 + norm) / scale
            v, k, res = solve_unit(x, unit, target)
            return norm * v, norm * res, k

        @jax.custom_jvp
        def inverse(x, omega):
            return solve(x, omega)[0]

        @inverse.defjvp
        def inverse_jvp(primals, tangents):
            x, omega = primals
            dx, domega = tangents
            v = inverse(x, omega)
            _, mixed = jax.jvp(lambda xx: gradient(xx, v), (x,), (dx,))
            dv = jnp.linalg.solve(hessian(x, v), domega - mixed)
            return v, dv

        def half_dual_energy(x, omega):
            # ½F*² = ½ omega(l^-1(omega)) by the dual Euler identity
            return 0.5 * jnp.dot(omega, inverse(x, omega))

        self.inverse = inverse
        self.half_dual_energy = half_dual_energy
        self.dual_tensor = lambda x, omega: jnp.linalg.inv(hessian(x, inverse(x, omega)))
        self._solve = jax.jit(solve)
        self.solve_batch = jax.jit(jax.vmap(solve))
        self.inverse_batch = jax.jit(jax.vmap(inverse))
        self.dual_tensor_batch = jax.jit(jax.vmap(self.dual_tensor))
        self.tensor_at = jax.jit(hessian)

    def solve_checked(self, x, omega) -> LegendreResult:
        omega = np.asarray(omega, dtype=float)
        v, res, k = self._solve(jnp.asarray(np.asarray(x, dtype=float)), jnp.asarray(omega))
        res, k = float(res), int(k)
        if not np.isfinite(res) or res > settings.LEGENDRE_TOL * (1.0 + np.linalg.norm(omega)):
            raise NoConvergenceError("Legendre inverse did not converge", residual=res, iterations=k,
                                     witness={"x": np.asarray(x).tolist(), "omega": omega.tolist()})
        return LegendreResult(v=np.asarray(v), residual=res, iterations=k)

    def solve_many(self, xs, omegas) -> np.ndarray:
        """Batched inverse; raises NoConvergenceError naming the worst sample."""
        xs = jnp.asarray(np.asarray(xs, dtype=float))
        omegas = np.asarray(omegas, dtype=float)
        v, res, k = self.solve_batch(xs, jnp.asarray(omegas))
        res = np.asarray(res)
        bound = settings.LEGENDRE_TOL * (1.0 + np.linalg.norm(omegas, axis=1))
        bad = ~np.isfinite(res) | (res > bound)
        if bad.any():
            worst = int(np.argmax(np.where(np.isfinite(res), res - bound, np.inf)))
            raise NoConvergenceError("Legendre inverse did not converge", residual=float(res[worst]),
                                     iterations=int(np.asarray(k)[worst]),
                                     witness={"x": np.asarray(xs)[worst].tolist(), "omega": omegas[worst].tolist()})
        return np.asarray(v)


def get_duality(spec) -> LegendreDuality:
    return cached(spec, "duality", LegendreDuality)


# ======================
# OPERATIONS
# ======================

def legendre(spec, x, v) -> np.ndarray:
    """l(x, v) = ½ ∂F²/∂v (x, v)."""
    metric = get_metric(spec)
    metric.check_point(x, v)
    return metric.legendre(x, require_direction(v))


def legendre_inverse(spec, x, omega) -> LegendreResult:
    point = CotangentPoint(np.asarray(x, dtype=float), np.asarray(omega, dtype=float))
    get_metric(spec).check_point(point.x, point.omega)
    omega = require_direction(point.omega, "omega")
    return get_duality(spec).solve_checked(point.x, omega)


def eval_F_star(spec, x, omega) -> float:
    metric = get_metric(spec)
    metric.check_point(x, omega)
    if not np.any(np.asarray(omega, dtype=float)):
        return 0.0
    result = get_duality(spec).solve_checked(x, omega)
    return metric.value(x, result.v)


def dual_fundamental_tensor(spec, x, omega) -> np.ndarray:
    """(g*)^{ij}(x, omega) = [g(l^-1(x, omega))]^{-1}."""
    result = legendre_inverse(spec, x, omega)
    duality = get_duality(spec)
    g = np.asarray(duality.tensor_at(jnp.asarray(np.asarray(x, dtype=float)), jnp.asarray(result.v)))
    condition = float(np.linalg.cond(g))
    if not np.isfinite(condition) or condition > settings.CONDITION_LIMIT:
        raise ConditioningError(f"fundamental tensor ill-conditioned (cond {condition:.3e})",
                                witness={"x": np.asarray(x).tolist(), "omega": np.asarray(omega).tolist()})
    dual = np.linalg.inv(g)
    return 0.5 * (dual + dual.T)


def dual_tensor_by_differentiation(spec, x, omega) -> np.ndarray:
    """½ ∂²F*²/∂omega² differentiated through the Legendre inverse (cross-check)."""
    duality = get_duality(spec)
    hessian = jax.jacfwd(jax.jacfwd(duality.half_dual_energy, argnums=1), argnums=1)
    return np.asarray(hessian(jnp.asarray(np.asarray(x, dtype=float)),
                              jnp.asarray(np.asarray(omega, dtype=float))))


def pullback_inverse(spec_inner, diffeo, x, omega) -> np.ndarray:
    """dI^-1[l_2^-1(I(x), omega o dI^-1)], the pulled-back Legendre inverse."""
    x = np.asarray(x, dtype=float)
    J = np.asarray(diffeo.jacobian(x))
    image = np.asarray(diffeo.forward(x))
    transported = np.linalg.solve(J.T, np.asarray(omega, dtype=float))
    w = legendre_inverse(spec_inner, image, transported).v
    return np.linalg.solve(J, w)


def pullback_dual_norm(spec_inner, diffeo, x, omega) -> float:
    """F_2*(I(x), omega o dI^-1)."""
    x = np.asarray(x, dtype=float)
    J = np.asarray(diffeo.jacobian(x))
    return eval_F_star(spec_inner, np.asarray(diffeo.forward(x)),
                       np.linalg.solve(J.T, np.asarray(omega, dtype=float)))
