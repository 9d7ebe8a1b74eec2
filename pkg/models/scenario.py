"""Scenario files (TOML) and per-task reports."""
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing_extensions import Annotated

from models.metric import MetricSpec


class TaskModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class VerifyCoreTask(TaskModel):
    task: Literal["verify-core"] = "verify-core"
    samples: int = Field(100, ge=1)


class StructureConditionsTask(TaskModel):
    task: Literal["structure-conditions"] = "structure-conditions"
    samples: int = Field(10000, ge=1)
    radius: float = Field(0.5, gt=0.0)


class HarmonicChartTask(TaskModel):
    task: Literal["harmonic-chart"] = "harmonic-chart"
    epsilon: float = Field(1.0, gt=0.0)
    spacing: float = Field(1.0 / 32, gt=0.0)
    audits: bool = True
    tolerance: float = Field(1e-7, gt=0.0)  # nodewise identity check for x-independent metrics


class RescalingTask(TaskModel):
    task: Literal["rescaling"] = "rescaling"
    epsilons: List[float]
    spacing: float = Field(1.0 / 32, gt=0.0)
    slope_range: List[float] = [0.7, 1.3]

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        if not values or min(values) <= 0.0:
            raise ValueError("epsilon values must be positive")
        return values


class CurvatureTask(TaskModel):
    task: Literal["curvature"] = "curvature"
    samples: int = Field(50, ge=1)
    expect: Optional[Literal["flat", "constant"]] = None
    curvature: float = 1.0
    tolerance: float = Field(1e-6, gt=0.0)
    radius: float = Field(0.5, gt=0.0)


class BerwaldTask(TaskModel):
    task: Literal["berwald"] = "berwald"
    nodes: int = Field(128, ge=16)
    tol: float = Field(1e-7, gt=0.0)
    expect: Optional[bool] = None


class SzaboTask(TaskModel):
    task: Literal["szabo"] = "szabo"
    nodes: int = Field(128, ge=16)
    tol: float = Field(1e-5, gt=0.0)
    samples: int = Field(5, ge=1)
    measure: Optional[Literal["surface", "cone"]] = None


class RicciIdentityTask(TaskModel):
    task: Literal["ricci-identity"] = "ricci-identity"
    nodes: int = Field(128, ge=16)
    tol: float = Field(1e-6, gt=0.0)
    samples: int = Field(5, ge=1)
    measure: Optional[Literal["surface", "cone"]] = None
    curvature: Optional[float] = None  # constant-curvature oracle Ric = (m-1) K h


TaskSpec = Annotated[
    Union[VerifyCoreTask, StructureConditionsTask, HarmonicChartTask, RescalingTask, CurvatureTask,
          BerwaldTask, SzaboTask, RicciIdentityTask],
    Field(discriminator="task"),
]


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "scenario"
    metric: MetricSpec
    volume: Literal["lebesgue", "sqrt-det-riemannian", "sqrt-det-averaged"] = "lebesgue"
    tasks: List[TaskSpec] = Field(min_length=1)
    output: Optional[str] = None
    seed: int = 0


class Report(BaseModel):
    """Result of one task; `metrics` hold scalars, `tables` name the CSV files written."""

    task: str
    index: int
    status: Literal["pass", "fail", "degenerate"]
    metrics: Dict[str, Any] = {}
    tables: List[str] = []
    error: Optional[Dict[str, Any]] = None
