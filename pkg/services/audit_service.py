"""Identity suite over random samples: homogeneity ladder, Euler identities and Legendre duality."""
import logging
from dataclasses import asdict, dataclass
from typing import List, Optional

import jax.numpy as jnp
import numpy as np

from config import settings
from errors import FinslerError
from services.finsler_service import get_metric, sample_directions, sample_points
from services.legendre_service import get_duality
from services.spray_service import get_spray

logger = logging.getLogger(__name__)


@dataclass
class IdentityCheck:
    identity: str
    max_error: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)

    def row(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def _relative(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / (1.0 + np.abs(b).max()))


class IdentitySuite:
    """Collects the worst error per identity while looping over random (x, v, lambda)."""

    def __init__(self, spec, samples: int, seed: Optional[int] = None):
        self.spec = spec
        self.samples = samples
        self.rng = np.random.default_rng(settings.DEFAULT_SEED if seed is None else seed)
        self.worst = {}
        self.tolerances = {}

    def record(self, identity: str, error: float, tolerance: float):
        self.tolerances[identity] = tolerance
        previous = self.worst.get(identity, 0.0)
        self.worst[identity] = error if not np.isfinite(error) else max(previous, error)

    def run(self) -> List[IdentityCheck]:
        spec = self.spec
        m = spec.dimension
        metric = get_metric(spec)
        duality = get_duality(spec)
        spray = get_spray(spec)

        xs = sample_points(spec, self.samples, self.rng, radius=0.5 * spec.audit_radius)
        vs = sample_directions(m, self.samples, self.rng) * self.rng.uniform(0.2, 5.0, (self.samples, 1))
        ws = sample_directions(m, self.samples, self.rng)
        lambdas = self.rng.uniform(0.0, 10.0, self.samples) + 1e-3

        F = np.asarray(metric.F_batch(jnp.asarray(xs), jnp.asarray(vs)))
        F_scaled = np.asarray(metric.F_batch(jnp.asarray(xs), jnp.asarray(lambdas[:, None] * vs)))
        F_sum = np.asarray(metric.F_batch(jnp.asarray(xs), jnp.asarray(vs + ws)))
        F_w = np.asarray(metric.F_batch(jnp.asarray(xs), jnp.asarray(ws)))
        g = np.asarray(metric.fundamental_batch(jnp.asarray(xs), jnp.asarray(vs)))
        g_scaled = np.asarray(metric.fundamental_batch(jnp.asarray(xs), jnp.asarray(lambdas[:, None] * vs)))
        omegas = np.asarray(metric.vertical_gradient_batch(jnp.asarray(xs), jnp.asarray(vs)))

        self.record("F 1-homogeneous", float(np.max(np.abs(F_scaled - lambdas * F) / (lambdas * F))),
                    settings.HOMOGENEITY_TOL)
        self.record("F triangle inequality", float(max(0.0, np.max(F_sum - F - F_w))), settings.HOMOGENEITY_TOL)
        self.record("g 0-homogeneous", float(np.max(np.abs(g_scaled - g) / (1.0 + np.abs(g).max(axis=(1, 2))[:, None, None]))),
                    settings.HOMOGENEITY_TOL)
        self.record("g positive definite", float(max(0.0, -np.linalg.eigvalsh(g)[:, 0].min())), 0.0)
        self.record("Euler g_v[v,v] = F^2", float(np.max(np.abs(np.einsum("si,sij,sj->s", vs, g, vs) - F ** 2) / F ** 2)),
                    settings.EULER_TOL)
        self.record("Euler g_v[v,.] = l(v)", float(np.max(np.abs(np.einsum("sij,sj->si", g, vs) - omegas)
                                                         / (1.0 + np.abs(omegas).max(axis=1)[:, None]))),
                    settings.EULER_TOL)

        try:
            back = duality.solve_many(xs, omegas)
            self.record("Legendre round trip", float(np.max(np.linalg.norm(back - vs, axis=1) / np.linalg.norm(vs, axis=1))),
                        1e-9)
            F_back = np.asarray(metric.F_batch(jnp.asarray(xs), jnp.asarray(back)))
            self.record("F* o l = F", float(np.max(np.abs(F_back - F) / F)), 1e-9)
            self.record("dual Euler omega(l^-1(omega)) = F*^2",
                        float(np.max(np.abs(np.einsum("si,si->s", omegas, back) - F_back ** 2) / F_back ** 2)), 1e-9)
            dual = np.asarray(duality.dual_tensor_batch(jnp.asarray(xs), jnp.asarray(omegas)))
            self.record("g* g = Id", float(np.max(np.abs(np.einsum("sij,sjk->sik", dual, g) - np.eye(m)))), 1e-8)
            scaled = duality.solve_many(xs, lambdas[:, None] * omegas)
            self.record("l^-1 1-homogeneous", float(np.max(np.linalg.norm(scaled - lambdas[:, None] * back, axis=1)
                                                           / np.linalg.norm(lambdas[:, None] * back, axis=1))),
                        1e-9)
        except FinslerError as e:
            logger.warning("Legendre identities could not be evaluated: %s", e.message)
            self.record("Legendre round trip", float("inf"), 1e-9)

        ladder_tol = 1e-9
        for x, v, lam in zip(xs, vs, lambdas):
            xj = jnp.asarray(x)
            G, N = spray.spray_at(xj, jnp.asarray(v))
            G_s, N_s = spray.spray_at(xj, jnp.asarray(lam * v))
            R = spray.curvature_at(xj, jnp.asarray(v))
            R_s = spray.curvature_at(xj, jnp.asarray(lam * v))
            self.record("G 2-homogeneous", _relative(G_s, lam ** 2 * G), ladder_tol)
            self.record("N 1-homogeneous", _relative(N_s, lam * N), ladder_tol)
            self.record("R 2-homogeneous", _relative(R_s, lam ** 2 * R), ladder_tol)

        step = settings.FD_STEP
        for x, v in zip(xs[:10], vs[:10]):
            dG_dx, dG_dy = spray.spray_derivatives(jnp.asarray(x), jnp.asarray(v))
            eye = step * np.eye(m)
            fd_x = np.stack([spray.spray_at(jnp.asarray(x + e), jnp.asarray(v))[0]
                             - spray.spray_at(jnp.asarray(x - e), jnp.asarray(v))[0] for e in eye], axis=1) / (2 * step)
            fd_y = np.stack([spray.spray_at(jnp.asarray(x), jnp.asarray(v + e))[0]
                             - spray.spray_at(jnp.asarray(x), jnp.asarray(v - e))[0] for e in eye], axis=1) / (2 * step)
            self.record("dG/dx autodiff = central difference", _relative(fd_x, dG_dx), settings.FD_DERIVATIVE_TOL)
            self.record("dG/dy autodiff = central difference", _relative(fd_y, dG_dy), settings.FD_DERIVATIVE_TOL)

        return [IdentityCheck(identity=name, max_error=error, tolerance=self.tolerances[name], samples=self.samples)
                for name, error in self.worst.items()]


# ======================
# OPERATIONS
# ======================

def verify_core(spec, samples: int = 100, seed: Optional[int] = None) -> List[IdentityCheck]:
    checks = IdentitySuite(spec, samples, seed).run()
    failed = [c.identity for c in checks if not c.passed]
    if failed:
        logger.warning("identity suite for %s: %d failed (%s)", spec.kind, len(failed), ", ".join(failed))
    else:
        logger.info("identity suite for %s: all %d identities hold", spec.kind, len(checks))
    return checks
