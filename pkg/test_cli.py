import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from config import settings
from main import EXIT_FAILED, EXIT_INVALID, EXIT_NO_CONVERGENCE, EXIT_OK, main

EUCLIDEAN_CHART = """
name = "euclidean"
seed = 3

[metric]
kind = "euclidean"

[[tasks]]
task = "harmonic-chart"
epsilon = 1.0
spacing = 0.125

[[tasks]]
task = "curvature"
samples = 5
expect = "flat"
"""

DRIFT_RANDERS = """
[metric]
kind = "randers"

[metric.matrix_field]
name = "constant"
matrix = [[1.0, 0.0], [0.0, 1.0]]

[metric.covector_field]
name = "affine"
offset = [0.3, 0.0]
matrix = [[0.0, 0.1], [0.0, 0.0]]
"""


def write(tmp_path: Path, text: str, name: str = "scenario.toml") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_writes_reports_and_tables(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, EUCLIDEAN_CHART), "--out", str(out)]) == EXIT_OK

    report = json.loads((out / "00_harmonic-chart.json").read_text())
    assert report["status"] == "pass"
    assert report["metrics"]["identity_deviation"] <= 1e-8
    assert report["tables"] == ["00_harmonic-chart.csv", "00_harmonic-chart_u1.csv", "00_harmonic-chart_u2.csv"]

    field = pd.read_csv(out / "00_harmonic-chart_u1.csv")
    assert list(field.columns) == ["x", "y", "value"]
    assert (field["value"] - field["x"]).abs().max() <= 1e-8
    assert json.loads((out / "01_curvature.json").read_text())["status"] == "pass"


def test_run_is_byte_identical(tmp_path):
    scenario = write(tmp_path, EUCLIDEAN_CHART)
    first, second = tmp_path / "first", tmp_path / "second"
    assert main(["run", scenario, "--out", str(first)]) == EXIT_OK
    assert main(["run", scenario, "--out", str(second), "--jobs", "2"]) == EXIT_OK
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_non_berwald_szabo_is_degenerate(tmp_path):
    scenario = write(tmp_path, DRIFT_RANDERS + '\n[[tasks]]\ntask = "szabo"\n')
    out = tmp_path / "out"
    assert main(["run", scenario, "--out", str(out)]) == EXIT_FAILED
    report = json.loads((out / "00_szabo.json").read_text())
    assert report["status"] == "degenerate"
    assert report["error"]["error"] == "not-berwald"
    assert report["error"]["witness"]


def test_failed_check_carries_witness(tmp_path):
    scenario = write(tmp_path, DRIFT_RANDERS + '\n[[tasks]]\ntask = "berwald"\nexpect = true\n')
    out = tmp_path / "out"
    assert main(["run", scenario, "--out", str(out)]) == EXIT_FAILED
    report = json.loads((out / "00_berwald.json").read_text())
    assert report["status"] == "fail"
    assert report["error"]["witness"]["max_nonlinearity"] > 1e-7


def test_no_convergence_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "SOLVER_MAX_ITER", 0)
    scenario = write(tmp_path, DRIFT_RANDERS + '\n[[tasks]]\ntask = "harmonic-chart"\nspacing = 0.125\n')
    out = tmp_path / "out"
    assert main(["run", scenario, "--out", str(out)]) == EXIT_NO_CONVERGENCE
    report = json.loads((out / "00_harmonic-chart.json").read_text())
    assert report["error"]["error"] == "no-convergence"
    assert report["error"]["residual"] > 0.0


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "REPORT_DIR", str(tmp_path / "default"))
    scenario = write(tmp_path, '[metric]\nkind = "euclidean"\n\n[[tasks]]\ntask = "verify-core"\nsamples = 5\n')
    assert main(["run", scenario]) == EXIT_OK
    assert (tmp_path / "default" / "00_verify-core.json").exists()
    assert (tmp_path / "default" / "00_verify-core.csv").exists()


def test_parse_error_reports_line_and_column(tmp_path, capsys):
    scenario = write(tmp_path, '[metric]\nkind = "euclidean"\n[[tasks]\n')
    assert main(["run", scenario]) == EXIT_INVALID
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize("body,location", [
    ('[[tasks]]\ntask = "rescaling"\nepsilons = [0.2, -0.1]\n', "tasks.0.rescaling.epsilons"),
    ('[[tasks]]\ntask = "warp-drive"\n', "tasks.0"),
    ("tasks = []\n", "tasks"),
])
def test_validation_errors_name_location(tmp_path, capsys, body, location):
    scenario = write(tmp_path, body + '\n[metric]\nkind = "euclidean"\n')
    assert main(["run", scenario]) == EXIT_INVALID
    assert location in capsys.readouterr().err


def test_validate_reports_convexity_violation(tmp_path, capsys):
    scenario = write(tmp_path, """
[metric]
kind = "randers"

[metric.matrix_field]
name = "constant"
matrix = [[1.0, 0.0], [0.0, 1.0]]

[metric.covector_field]
name = "constant"
vector = [1.2, 0.0]

[[tasks]]
task = "verify-core"
""")
    assert main(["validate", scenario]) == EXIT_FAILED
    diagnostics = json.loads(capsys.readouterr().out)
    assert len(diagnostics) == 1
    assert "strong convexity violated" in diagnostics[0]["message"]


def test_validate_clean_scenario(tmp_path, capsys):
    scenario = write(tmp_path, DRIFT_RANDERS + '\n[[tasks]]\ntask = "verify-core"\n')
    assert main(["validate", scenario]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == []


def test_validate_inconsistent_inverse(tmp_path, capsys):
    scenario = write(tmp_path, """
[metric]
kind = "pullback"

[metric.inner]
kind = "euclidean"

[metric.diffeo]
name = "linear"
matrix = [[1.0, 0.3], [0.0, 1.0]]
inverse_matrix = [[1.0, 0.0], [0.0, 1.0]]

[[tasks]]
task = "verify-core"
""")
    assert main(["validate", scenario]) == EXIT_FAILED
    diagnostics = json.loads(capsys.readouterr().out)
    assert "round-trip" in diagnostics[0]["message"]
    assert diagnostics[0]["value"] > 1e-8


def test_shipped_scenarios_parse():
    from main import read_scenario

    for path in sorted(Path(__file__).parent.joinpath("scenarios").glob("*.toml")):
        scenario = read_scenario(str(path), audit=False)
        assert scenario.tasks


def test_coarse_grid_is_invalid_input(tmp_path):
    scenario = write(tmp_path, '[metric]\nkind = "euclidean"\n\n[[tasks]]\ntask = "harmonic-chart"\nspacing = 1.5\n')
    out = tmp_path / "out"
    assert main(["run", scenario, "--out", str(out)]) == EXIT_INVALID
    report = json.loads((out / "00_harmonic-chart.json").read_text())
    assert report["status"] == "fail"
    assert report["error"]["error"] == "invalid-input"
    assert report["error"]["witness"]["spacing"] == 1.5


def test_unsupported_volume_dimension_is_invalid_input(tmp_path, capsys):
    scenario = write(tmp_path, """
volume = "sqrt-det-averaged"

[metric]
kind = "riemannian"
dimension = 4

[metric.matrix_field]
name = "constant"
matrix = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]

[[tasks]]
task = "verify-core"
samples = 5
""")
    assert main(["run", scenario, "--out", str(tmp_path / "out")]) == EXIT_INVALID
    assert "indicatrix quadrature supports m = 2 and m = 3" in capsys.readouterr().err


def test_shipped_metrics_satisfy_structure_conditions_and_duality():
    from main import read_scenario
    from models.grid import Ball
    from services.calculus_service import verify_structure_conditions, volume_form
    from services.finsler_service import audit_metric, get_metric, sample_directions, sample_points
    from services.legendre_service import get_duality

    checked = 0
    for path in sorted(Path(__file__).parent.joinpath("scenarios").glob("*.toml")):
        spec = read_scenario(str(path), audit=False).metric
        if audit_metric(spec):
            continue
        volume = volume_form(spec, "sqrt-det-riemannian")
        report = verify_structure_conditions(spec, volume, Ball((0.0,) * spec.dimension, 0.5), 10_000, seed=1)
        assert report.violations == [], path.name
        assert report.pairs == 10_000

        rng = np.random.default_rng(2)
        xs = sample_points(spec, 10_000, rng, radius=0.5)
        vs = sample_directions(spec.dimension, 10_000, rng) * rng.uniform(0.1, 10.0, (10_000, 1))
        omegas = np.asarray(get_metric(spec).vertical_gradient_batch(xs, vs))
        back = get_duality(spec).solve_many(xs, omegas)
        assert np.max(np.linalg.norm(back - vs, axis=1) / np.linalg.norm(vs, axis=1)) <= 1e-9, path.name
        checked += 1
    assert checked >= 5
