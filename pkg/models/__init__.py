from .metric import Diagnostic, MetricSpec, build_metric
from .geometry import FundamentalTensor, LegendreResult, SprayData, CurvatureData, VolumeForm
from .grid import Ball, Box, Grid, ScalarField, HarmonicChart
from .scenario import Scenario, Report


__all__ = ["Diagnostic", "MetricSpec", "build_metric", "FundamentalTensor", "LegendreResult", "SprayData",
           "CurvatureData", "VolumeForm", "Ball", "Box", "Grid", "ScalarField", "HarmonicChart", "Scenario",
           "Report"]
