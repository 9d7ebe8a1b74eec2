"""Shared task plumbing: the run context and what a handler hands back."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from models.geometry import VolumeForm


@dataclass
class TaskContext:
    spec: Any
    volume: VolumeForm
    seed: int
    jobs: int = 1


@dataclass
class TaskOutcome:
    passed: bool
    metrics: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    witness: Optional[Dict[str, Any]] = None


def coordinate_columns(m: int, prefix: str = "") -> List[str]:
    if m == 2:
        return [f"{prefix}x", f"{prefix}y"]
    return [f"{prefix}x{i + 1}" for i in range(m)]


def points_frame(points: np.ndarray, prefix: str = "", **columns) -> pd.DataFrame:
    frame = pd.DataFrame(np.asarray(points), columns=coordinate_columns(points.shape[1], prefix))
    for name, values in columns.items():
        frame[name] = np.asarray(values)
    return frame
