"""Array-valued results of the geometry services."""
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import jax
import numpy as np

from errors import InvalidInputError


@dataclass(frozen=True)
class FundamentalTensor:
    x: np.ndarray
    v: np.ndarray
    matrix: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def __call__(self, w1, w2) -> float:
        return float(np.asarray(w1) @ self.matrix @ np.asarray(w2))


@dataclass(frozen=True)
class CotangentPoint:
    """(x, omega) in T*U; omega is read as a row covector at x."""

    x: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.omega))):
            raise InvalidInputError("cotangent point components must be finite",
                                    witness={"x": np.asarray(self.x).tolist(), "omega": np.asarray(self.omega).tolist()})


@dataclass(frozen=True)
class LegendreResult:
    v: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True)
class SprayData:
    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    N: np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    x: np.ndarray
    y: np.ndarray
    Rk: np.ndarray
    ricci_scalar: float
    R4: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ConnectionData:
    """Nonlinear connection, or its linear (Berwald) reduction.

    `nonlinear(x, y)` returns N^i_j; for mode "berwald-linear",
    `christoffel(x)` returns Gamma^i_jk indexed [i, j, k] and depends on x only.
    Both callables are jax-traceable.
    """

    mode: Literal["nonlinear", "berwald-linear"]
    nonlinear: Callable
    christoffel: Optional[Callable] = None


@dataclass(frozen=True)
class VolumeForm:
    """mu = sigma dx^1 ^ ... ^ dx^m with a jax-traceable density."""

    name: str
    density: Callable

    def __call__(self, x) -> float:
        return float(self.density(x))

    def differential(self, x) -> np.ndarray:
        return np.asarray(jax.grad(self.density)(x))


@dataclass(frozen=True)
class IndicatrixQuadrature:
    x: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    measure: str = "surface"

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class AveragedMetric:
    """x -> h(x); `evaluator` is jax-traceable so h can be differentiated."""

    evaluator: Callable
    order: int
    measure: str = "cone"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(x))


@dataclass(frozen=True)
class LaplacianValue:
    value: float
    low_confidence: bool = False
    trace_form: Optional[float] = None


@dataclass
class EnergyEstimate:
    value: float
    refined: float
    cells: int

    @property
    def refinement_error(self) -> float:
        return abs(self.refined - self.value)


@dataclass
class StructureViolation:
    condition: int
    x: list
    omega: list
    omega_other: Optional[list] = None
    measured: float = 0.0
    bound: float = 0.0


@dataclass
class StructureReport:
    C: float
    growth_constant: float
    growth_sum_constant: float
    ellipticity_constant: float
    monotonicity_constant: float
    min_ellipticity: float
    samples: int
    pairs: int
    violations: list = field(default_factory=list)


@dataclass
class RescalingResult:
    epsilons: list
    deviations: list

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.deviations, self.deviations[1:]))

    @property
    def slope(self) -> float:
        """Least-squares slope of log(deviation) against log(eps); nan if any deviation vanishes."""
        deviations = np.asarray(self.deviations)
        if len(deviations) < 2 or np.any(deviations <= 0.0):
            return float("nan")
        return float(np.polyfit(np.log(self.epsilons), np.log(deviations), 1)[0])

    def rows(self) -> list:
        return [{"epsilon": e, "deviation": d} for e, d in zip(self.epsilons, self.deviations)]
