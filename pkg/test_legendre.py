import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from config import settings
from conftest import minkowski, pullback_flat, randers_constant
from errors import DegenerateDirectionError, InvalidInputError, NoConvergenceError
from models.metric import build_metric
from services.finsler_service import eval_F, fundamental_tensor
from services.legendre_service import (dual_fundamental_tensor, dual_tensor_by_differentiation, eval_F_star,
                                       get_duality, legendre, legendre_inverse, pullback_dual_norm,
                                       pullback_inverse)

angles = st.floats(min_value=0.0, max_value=2 * np.pi)
scales = st.floats(min_value=0.01, max_value=100.0)


def test_legendre_examples(euclidean, diagonal, randers):
    np.testing.assert_allclose(legendre(euclidean, [0.0, 0.0], [3.0, 4.0]), [3.0, 4.0], atol=1e-14)
    np.testing.assert_allclose(legendre(diagonal, [0.0, 0.0], [1.0, 1.0]), [1.0, 4.0], atol=1e-13)
    v = np.array([1.0, 0.0])
    assert legendre(randers, [0.0, 0.0], v) @ v == pytest.approx(2.25, abs=1e-12)


def test_legendre_zero_vector(randers):
    with pytest.raises(DegenerateDirectionError):
        legendre(randers, [0.0, 0.0], [0.0, 0.0])


def test_legendre_inverse_examples(euclidean, diagonal):
    np.testing.assert_allclose(legendre_inverse(euclidean, [0.0, 0.0], [3.0, 4.0]).v, [3.0, 4.0], atol=1e-10)
    result = legendre_inverse(diagonal, [0.0, 0.0], [1.0, 4.0])
    np.testing.assert_allclose(result.v, [1.0, 1.0], atol=1e-10)
    assert result.residual <= 1e-10


def test_legendre_inverse_zero_covector(randers):
    with pytest.raises(DegenerateDirectionError):
        legendre_inverse(randers, [0.0, 0.0], [0.0, 0.0])


def test_round_trip_randers():
    spec = randers_constant()
    rng = np.random.default_rng(11)
    worst = 0.0
    for v in rng.normal(size=(100, 2)) * rng.uniform(0.1, 10.0, (100, 1)):
        back = legendre_inverse(spec, [0.0, 0.0], legendre(spec, [0.0, 0.0], v)).v
        worst = max(worst, np.linalg.norm(back - v) / np.linalg.norm(v))
    assert worst <= 1e-9


@pytest.mark.parametrize("build", [randers_constant, minkowski, pullback_flat])
def test_inverse_meets_residual_tolerance_across_scales(build):
    spec = build()
    rng = np.random.default_rng(12)
    xs = rng.uniform(-0.4, 0.4, (40, 2))
    omegas = rng.normal(size=(40, 2)) * rng.uniform(0.01, 100.0, (40, 1))
    for x, omega in zip(xs, omegas):
        result = legendre_inverse(spec, x, omega)
        bound = settings.LEGENDRE_TOL * (1.0 + np.linalg.norm(omega))
        assert result.residual <= bound
        np.testing.assert_allclose(legendre(spec, x, result.v), omega, atol=bound)
    np.testing.assert_allclose(get_duality(spec).solve_many(xs, omegas),
                               [legendre_inverse(spec, x, omega).v for x, omega in zip(xs, omegas)], atol=1e-9)


def test_legendre_inverse_rejects_non_finite_cotangent_point(randers):
    with pytest.raises(InvalidInputError):
        legendre_inverse(randers, [np.nan, 0.0], [1.0, 0.0])
    with pytest.raises(InvalidInputError):
        legendre_inverse(randers, [0.0, 0.0], [np.inf, 0.0])


@given(theta=angles, lam=scales)
def test_round_trip_over_families(family, theta, lam):
    x = np.array([0.2, -0.3])
    v = lam * np.array([np.cos(theta), np.sin(theta)])
    back = legendre_inverse(family, x, legendre(family, x, v)).v
    np.testing.assert_allclose(back, v, rtol=1e-9, atol=1e-9 * lam)


@given(theta=angles, lam=scales)
def test_inverse_is_positively_homogeneous(family, theta, lam):
    x = np.array([-0.1, 0.25])
    omega = np.array([np.cos(theta), np.sin(theta)])
    unit = legendre_inverse(family, x, omega).v
    np.testing.assert_allclose(legendre_inverse(family, x, lam * omega).v, lam * unit, rtol=1e-9, atol=1e-12)


def test_F_star_examples(euclidean, diagonal):
    assert eval_F_star(euclidean, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-10)
    assert eval_F_star(diagonal, [0.0, 0.0], [0.0, 2.0]) == pytest.approx(1.0, abs=1e-10)
    assert eval_F_star(diagonal, [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_F_star_brute_force_supremum(randers):
    # sup of omega(v) over the indicatrix F(v) = 1
    theta = np.linspace(0.0, 2 * np.pi, 1_000_000, endpoint=False)
    directions = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    indicatrix = directions / (1.0 + 0.5 * directions[:, 0:1])
    brute = float((indicatrix @ np.array([1.0, 0.0])).max())
    assert eval_F_star(randers, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(brute, abs=1e-4)


def test_F_composed_with_inverse_is_dual_norm(family):
    rng = np.random.default_rng(12)
    for omega in rng.normal(size=(10, 2)):
        x = rng.uniform(-0.5, 0.5, 2)
        v = legendre_inverse(family, x, omega).v
        assert eval_F(family, x, v) == pytest.approx(eval_F_star(family, x, omega), rel=1e-9)
        # dual Euler identity
        assert omega @ v == pytest.approx(eval_F_star(family, x, omega) ** 2, rel=1e-9)


def test_dual_tensor_examples(euclidean, diagonal):
    np.testing.assert_allclose(dual_fundamental_tensor(euclidean, [0.0, 0.0], [1.0, 2.0]), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(dual_fundamental_tensor(diagonal, [0.0, 0.0], [1.0, 2.0]),
                               np.diag([1.0, 0.25]), atol=1e-12)


def test_dual_tensor_inverts_fundamental_tensor():
    spec = randers_constant()
    rng = np.random.default_rng(13)
    for v in rng.normal(size=(100, 2)):
        x = np.zeros(2)
        product = dual_fundamental_tensor(spec, x, legendre(spec, x, v)) @ fundamental_tensor(spec, x, v).matrix
        np.testing.assert_allclose(product, np.eye(2), atol=1e-8)


def test_dual_tensor_by_differentiation_agrees(drift_randers):
    x, omega = np.array([0.1, 0.3]), np.array([0.7, -0.4])
    np.testing.assert_allclose(dual_tensor_by_differentiation(drift_randers, x, omega),
                               dual_fundamental_tensor(drift_randers, x, omega), atol=1e-8)


def test_pullback_dual_norm_identity():
    inner = randers_constant()
    pulled = build_metric({"kind": "pullback", "inner": inner.model_dump(),
                           "diffeo": {"name": "quadratic_shear", "target": 0, "source": 1, "coefficient": 0.1}})
    rng = np.random.default_rng(14)
    for x, omega in zip(rng.uniform(-0.5, 0.5, (10, 2)), rng.normal(size=(10, 2))):
        assert eval_F_star(pulled, x, omega) == pytest.approx(pullback_dual_norm(inner, pulled.diffeo, x, omega),
                                                              abs=1e-8)
        np.testing.assert_allclose(legendre_inverse(pulled, x, omega).v,
                                   pullback_inverse(inner, pulled.diffeo, x, omega), atol=1e-8)


def test_batched_inverse_matches_pointwise(drift_randers):
    rng = np.random.default_rng(15)
    xs = rng.uniform(-0.5, 0.5, (16, 2))
    omegas = rng.normal(size=(16, 2))
    batched = get_duality(drift_randers).solve_many(xs, omegas)
    for x, omega, v in zip(xs, omegas, batched):
        np.testing.assert_allclose(v, legendre_inverse(drift_randers, x, omega).v, atol=1e-10)


def test_no_convergence_carries_residual(drift_randers, monkeypatch):
    from config import settings

    duality = get_duality(drift_randers)
    monkeypatch.setattr(settings, "LEGENDRE_TOL", -1.0)
    with pytest.raises(NoConvergenceError) as caught:
        duality.solve_checked([0.1, 0.1], [5.0, -3.0])
    assert caught.value.to_dict()["error"] == "no-convergence"
    assert caught.value.iterations >= 0
