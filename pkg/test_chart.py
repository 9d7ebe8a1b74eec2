import jax.numpy as jnp
import numpy as np
import pytest

from errors import ChartDegenerateError, InvalidInputError
from models.grid import Grid, ScalarField
from services.calculus_service import a_map, lebesgue_volume, riemannian_volume
from services.chart_service import (DirichletSolver, build_chart, certified_radius, competitor_audit,
                                    max_principle_audit, node_jacobians, rescaling_experiment, solve_dirichlet,
                                    weak_residual_audit)

SPACING = 1 / 8
X1 = ScalarField.closed_form(lambda x: x[0], name="x1")


@pytest.fixture(scope="module")
def ball():
    return Grid.ball(1.0, SPACING)


def test_ball_grid_geometry(ball):
    assert ball.origin_node() >= 0
    assert np.all(ball.volumes > 0.0)
    radii = np.linalg.norm(ball.points[ball.boundary], axis=1)
    assert radii.max() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.linalg.norm(ball.points[ball.interior], axis=1) < 1.0)
    # the simplices tile the polygon inscribed in the unit disc
    assert ball.volumes.sum() == pytest.approx(np.pi, rel=0.1)


def test_square_grid_boundary():
    grid = Grid.square(0.5, 0.25)
    assert grid.node_count == 25
    assert grid.boundary.sum() == 16
    assert grid.volumes.sum() == pytest.approx(1.0)


def test_three_dimensional_ball_is_simplicial():
    grid = Grid.ball(1.0, 0.25, dimension=3)
    assert grid.simplices.shape[1] == 4
    assert np.all(grid.volumes > 0.0)


@pytest.mark.parametrize("shape,spacing,dimension", [("square", 0.25, 2), ("ball", 0.25, 2), ("ball", 0.5, 3)])
def test_gradient_operators_reproduce_affine_fields(shape, spacing, dimension):
    grid = Grid.square(1.0, spacing, dimension) if shape == "square" else Grid.ball(1.0, spacing, dimension)
    slope = np.arange(1.0, dimension + 1)
    gradients = grid.gradients(0.7 + grid.points @ slope)
    assert gradients.shape == (len(grid.simplices), dimension)
    np.testing.assert_allclose(gradients, np.broadcast_to(slope, gradients.shape), atol=1e-12)


@pytest.mark.parametrize("fixture", ["euclidean", "minkowski_norm"])
def test_linear_data_is_harmonic(request, ball, fixture):
    spec = request.getfixturevalue(fixture)
    u = solve_dirichlet(spec, lebesgue_volume(), ball, X1)
    np.testing.assert_allclose(u.values, ball.points[:, 0], atol=1e-8)


def test_solution_beats_boundary_extension(drift_randers, ball):
    solver = DirichletSolver(a_map(drift_randers, lebesgue_volume()), ball)
    data = np.zeros(ball.node_count)
    data[ball.boundary] = ball.points[ball.boundary, 0]
    result = solver.solve(data)
    assert result.residual <= 1e-8
    assert result.energy < solver.energy(solver.extension(data))
    np.testing.assert_array_equal(result.values[ball.boundary], data[ball.boundary])


def test_solver_rejects_bad_boundary_data(euclidean, ball):
    solver = DirichletSolver(a_map(euclidean, lebesgue_volume()), ball)
    data = np.zeros(ball.node_count)
    data[np.flatnonzero(ball.boundary)[0]] = np.nan
    with pytest.raises(InvalidInputError):
        solver.solve(data)


def test_audits_on_solved_field(drift_randers, ball):
    solver = DirichletSolver(a_map(drift_randers, lebesgue_volume()), ball)
    data = np.zeros(ball.node_count)
    data[ball.boundary] = ball.points[ball.boundary, 1]
    u = solver.solve(data).values
    rng = np.random.default_rng(7)
    assert weak_residual_audit(solver, u, rng) <= 1e-6
    assert competitor_audit(solver, u, rng) >= 0.0


def test_discrete_max_principle_on_square(euclidean):
    # right isosceles simplices give an M-matrix stiffness
    grid = Grid.square(1.0, SPACING)
    u = solve_dirichlet(euclidean, lebesgue_volume(), grid, ScalarField.closed_form(lambda x: x[0] ** 2 - x[1] ** 3))
    assert max_principle_audit(grid, u.values) <= 1e-12


@pytest.mark.parametrize("fixture,frequency", [("euclidean", 1.0), ("diagonal", 2.0)])
def test_dirichlet_solution_converges_second_order(request, fixture, frequency):
    # exp(x) sin(k y) is harmonic for the operator u_xx + u_yy / k^2
    spec = request.getfixturevalue(fixture)
    exact = ScalarField.closed_form(lambda x: jnp.exp(x[0]) * jnp.sin(frequency * x[1]))
    spacings, errors = [1 / 4, 1 / 8, 1 / 16], []
    for h in spacings:
        grid = Grid.square(0.5, h)
        u = solve_dirichlet(spec, lebesgue_volume(), grid, exact)
        errors.append(float(np.abs(u.values - exact.sample(grid)).max()))
    assert errors[0] > errors[1] > errors[2] > 0.0
    order = np.polyfit(np.log(spacings), np.log(errors), 1)[0]
    assert order >= 1.7


def test_euclidean_chart_is_identity(euclidean, ball):
    chart = build_chart(euclidean, lebesgue_volume(), ball)
    assert chart.identity_deviation() <= 1e-8
    # stencils next to the boundary reach projected nodes, so compare inside
    inner = np.linalg.norm(ball.points, axis=1) < 1.0 - 2 * SPACING
    np.testing.assert_allclose(chart.determinant[inner], 1.0, atol=1e-8)
    assert chart.certified_radius >= 1.0 - 2 * SPACING
    np.testing.assert_allclose(chart.origin_jacobian(), np.eye(2), atol=1e-8)


def test_chart_threads_match_serial(minkowski_norm, ball):
    serial = build_chart(minkowski_norm, lebesgue_volume(), ball, jobs=1)
    threaded = build_chart(minkowski_norm, lebesgue_volume(), ball, jobs=2)
    for a, b in zip(serial.fields, threaded.fields):
        np.testing.assert_array_equal(a.values, b.values)


def test_warped_chart_near_identity_on_small_ball(warped, ball):
    chart = build_chart(warped, riemannian_volume(warped), ball, scale=0.1)
    assert abs(chart.determinant[ball.origin_node()] - 1.0) <= 0.2


def test_chart_degenerate_when_threshold_unreachable(euclidean, ball):
    with pytest.raises(ChartDegenerateError):
        build_chart(euclidean, lebesgue_volume(), ball, det_threshold=10.0)


def test_node_jacobians_and_certified_radius():
    grid = Grid.square(1.0, 0.5)
    fields = [ScalarField.on_grid(grid, 2.0 * grid.points[:, 0]), ScalarField.on_grid(grid, grid.points[:, 1])]
    jacobian = node_jacobians(grid, fields)
    np.testing.assert_allclose(jacobian, np.broadcast_to(np.diag([2.0, 1.0]), jacobian.shape))
    determinant = np.linalg.det(jacobian)
    assert certified_radius(grid, determinant, 1.0) == pytest.approx(1.0)
    determinant[grid.nearest_node([0.5, 0.0])] = 0.0
    assert certified_radius(grid, determinant, 1.0) == pytest.approx(0.5)


def test_rescaling_vanishes_for_x_independent_metrics(euclidean, minkowski_norm):
    for spec in (euclidean, minkowski_norm):
        result = rescaling_experiment(spec, lebesgue_volume(), [0.4, 0.2], spacing=SPACING)
        assert max(result.deviations) <= 1e-7


def test_rescaling_deviation_shrinks_linearly(drift_randers):
    result = rescaling_experiment(drift_randers, lebesgue_volume(), [0.4, 0.2, 0.1, 0.05], spacing=1 / 16)
    assert result.decreasing
    assert 0.7 <= result.slope <= 1.3
    assert [row["epsilon"] for row in result.rows()] == [0.4, 0.2, 0.1, 0.05]


@pytest.mark.parametrize("epsilons", [[], [0.2, -0.1], [0.1, 0.2]])
def test_rescaling_rejects_bad_epsilons(euclidean, epsilons):
    with pytest.raises(InvalidInputError):
        rescaling_experiment(euclidean, lebesgue_volume(), epsilons)
