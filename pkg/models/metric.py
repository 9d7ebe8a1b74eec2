"""Declarative Finsler metric specifications (closed family) and their audits."""
import itertools
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, model_validator
from typing_extensions import Annotated

from config import settings
from models.fields import CovectorField, DiffeoSpec, MatrixField


class Diagnostic(BaseModel):
    """One audit finding; `value` is the measured quantity that failed."""

    code: str
    message: str
    value: Optional[float] = None
    point: Optional[List[float]] = None


class MetricBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dimension: int = Field(2, ge=2)
    # Sample grid for the eager audits: [-r, r]^m with `audit_resolution` nodes per axis
    audit_radius: float = Field(default_factory=lambda: settings.AUDIT_RADIUS, gt=0.0)
    audit_resolution: int = Field(default_factory=lambda: settings.AUDIT_RESOLUTION, ge=2)

    def sample_points(self) -> np.ndarray:
        axis = np.linspace(-self.audit_radius, self.audit_radius, self.audit_resolution)
        return np.array(list(itertools.product(axis, repeat=self.dimension)))

    def audit(self) -> List[Diagnostic]:
        return []

    def convexity_margin(self, x) -> float:
        """Positive iff the norm at x is strongly convex; +inf for quadratic kinds."""
        return float("inf")

    @model_validator(mode="after")
    def _eager_audit(self, info: ValidationInfo):
        if info.context and not info.context.get("audit", True):
            return self
        diagnostics = self.audit()
        if diagnostics:
            raise ValueError("; ".join(f"[{d.code}] {d.message}" for d in diagnostics))
        return self


def _spd_diagnostics(matrices, points, what: str) -> List[Diagnostic]:
    for A, x in zip(matrices, points):
        if not np.all(np.isfinite(A)):
            return [Diagnostic(code="metric-invalid", message=f"{what} is not finite",
                               point=list(map(float, x)))]
        if not np.allclose(A, A.T, atol=1e-12):
            return [Diagnostic(code="metric-invalid", message=f"{what} is not symmetric",
                               point=list(map(float, x)))]
        lowest = float(np.linalg.eigvalsh(A).min())
        if lowest <= 0.0:
            return [Diagnostic(code="metric-invalid",
                               message=f"{what} is not positive definite (min eigenvalue {lowest:.3e})",
                               value=lowest, point=list(map(float, x)))]
    return []


def _randers_norm(A, b) -> float:
    return float(np.sqrt(b @ np.linalg.solve(A, b)))


class EuclideanMetric(MetricBase):
    kind: Literal["euclidean"] = "euclidean"


class RiemannianMetric(MetricBase):
    kind: Literal["riemannian"] = "riemannian"
    matrix_field: MatrixField

    def audit(self) -> List[Diagnostic]:
        if self.matrix_field.dimension != self.dimension:
            return [Diagnostic(code="metric-invalid", message="matrix field dimension mismatch")]
        points = self.sample_points()
        return _spd_diagnostics([np.asarray(self.matrix_field(x)) for x in points], points, "A(x)")


class RandersMetric(MetricBase):
    kind: Literal["randers"] = "randers"
    matrix_field: MatrixField
    covector_field: CovectorField

    def audit(self) -> List[Diagnostic]:
        if self.matrix_field.dimension != self.dimension or self.covector_field.dimension != self.dimension:
            return [Diagnostic(code="metric-invalid", message="field dimension mismatch")]
        points = self.sample_points()
        matrices = [np.asarray(self.matrix_field(x)) for x in points]
        found = _spd_diagnostics(matrices, points, "A(x)")
        if found:
            return found
        norms = np.array([_randers_norm(A, np.asarray(self.covector_field(x))) for A, x in zip(matrices, points)])
        worst = int(norms.argmax())
        if norms[worst] >= 1.0:
            return [Diagnostic(code="metric-invalid",
                               message=f"strong convexity violated: |b|_A = {norms[worst]:.6g} >= 1",
                               value=float(norms[worst]), point=list(map(float, points[worst])))]
        return []

    def convexity_margin(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 1.0 - _randers_norm(np.asarray(self.matrix_field(x)), np.asarray(self.covector_field(x)))


class LocallyMinkowskiMetric(MetricBase):
    """x-independent Randers norm sqrt(v.Mv) + c.v."""

    kind: Literal["locally-minkowski"] = "locally-minkowski"
    matrix: List[List[float]]
    vector: Optional[List[float]] = None

    def covector(self) -> np.ndarray:
        if self.vector is None:
            return np.zeros(self.dimension)
        return np.asarray(self.vector, dtype=float)

    def audit(self) -> List[Diagnostic]:
        A = np.asarray(self.matrix, dtype=float)
        if A.shape != (self.dimension, self.dimension) or self.covector().shape != (self.dimension,):
            return [Diagnostic(code="metric-invalid", message="norm dimension mismatch")]
        found = _spd_diagnostics([A], [np.zeros(self.dimension)], "norm matrix")
        if found:
            return found
        norm = _randers_norm(A, self.covector())
        if norm >= 1.0:
            return [Diagnostic(code="metric-invalid",
                               message=f"strong convexity violated: |b|_A = {norm:.6g} >= 1", value=norm)]
        return []

    def convexity_margin(self, x) -> float:
        return 1.0 - _randers_norm(np.asarray(self.matrix, dtype=float), self.covector())


class PullbackMetric(MetricBase):
    kind: Literal["pullback"] = "pullback"
    inner: "MetricSpec"
    diffeo: DiffeoSpec

    def audit(self) -> List[Diagnostic]:
        if self.inner.dimension != self.dimension or self.diffeo.dimension != self.dimension:
            return [Diagnostic(code="metric-invalid", message="pullback dimension mismatch")]
        return audit_diffeo(self.diffeo, self.sample_points())

    def convexity_margin(self, x) -> float:
        return self.inner.convexity_margin(np.asarray(self.diffeo.forward(np.asarray(x, dtype=float))))


MetricSpec = Annotated[
    Union[EuclideanMetric, RiemannianMetric, RandersMetric, LocallyMinkowskiMetric, PullbackMetric],
    Field(discriminator="kind"),
]

PullbackMetric.model_rebuild()


def audit_diffeo(diffeo, points: np.ndarray, step: float = 1e-5) -> List[Diagnostic]:
    """Round-trip, Jacobian-vs-difference and invertibility checks at `points`."""
    worst_roundtrip, worst_point = 0.0, None
    worst_jacobian, worst_jacobian_point = 0.0, None
    for x in points:
        x = np.asarray(x, dtype=float)
        y = np.asarray(diffeo.forward(x))
        error = max(float(np.linalg.norm(np.asarray(diffeo.inverse(y)) - x)),
                    float(np.linalg.norm(np.asarray(diffeo.forward(np.asarray(diffeo.inverse(x)))) - x)))
        error /= 1.0 + float(np.linalg.norm(x))
        if error > worst_roundtrip:
            worst_roundtrip, worst_point = error, x

        J = np.asarray(diffeo.jacobian(x))
        if abs(np.linalg.det(J)) <= 1e-12:
            return [Diagnostic(code="pullback-degenerate", message="singular diffeo jacobian",
                               value=float(np.linalg.det(J)), point=list(map(float, x)))]
        columns = []
        for k in range(len(x)):
            e = np.zeros_like(x)
            e[k] = step
            columns.append((np.asarray(diffeo.forward(x + e)) - np.asarray(diffeo.forward(x - e))) / (2 * step))
        mismatch = float(np.abs(np.stack(columns, axis=1) - J).max()) / (1.0 + float(np.abs(J).max()))
        if mismatch > worst_jacobian:
            worst_jacobian, worst_jacobian_point = mismatch, x

    found = []
    if worst_roundtrip > settings.DIFFEO_ROUNDTRIP_TOL:
        found.append(Diagnostic(code="metric-invalid",
                                message=f"diffeo inverse inconsistent: max round-trip error {worst_roundtrip:.3e}",
                                value=worst_roundtrip, point=list(map(float, worst_point))))
    if worst_jacobian > settings.DIFFEO_JACOBIAN_TOL:
        found.append(Diagnostic(code="metric-invalid",
                                message=f"diffeo jacobian inconsistent with forward map: {worst_jacobian:.3e}",
                                value=worst_jacobian, point=list(map(float, worst_jacobian_point))))
    return found


def build_metric(data: dict, audit: bool = True):
    """Validate a plain dict into the right MetricSpec kind."""
    from pydantic import TypeAdapter

    return TypeAdapter(MetricSpec).validate_python(data, context={"audit": audit})

