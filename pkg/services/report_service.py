"""Report and table writers; output is deterministic for a fixed scenario and seed."""
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from config import settings
from models.scenario import Report

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ReportWriter:
    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, frame: pd.DataFrame) -> str:
        filename = f"{name}.csv"
        frame.to_csv(self.out_dir / filename, index=False, float_format=settings.CSV_FLOAT_FORMAT,
                     lineterminator="\n")
        return filename

    def report(self, report: Report) -> Path:
        path = self.out_dir / f"{report.index:02d}_{report.task}.json"
        payload = _plain(report.model_dump())
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        logger.debug("wrote %s", path)
        return path

