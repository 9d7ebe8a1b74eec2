import jax
import jax.numpy as jnp
import numpy as np
import pytest
from scipy.integrate import quad

from conftest import randers_drift
from errors import InvalidInputError, NotBerwaldError
from services.berwald_service import (averaged_metric, indicatrix_quadrature, is_berwald, levi_civita,
                                      quadratic_structure_audit, ricci_identity_check, ricci_tensor, szabo_check)
from services.finsler_service import quadratic_part


@pytest.mark.parametrize("fixture", ["warped", "sphere", "minkowski_norm", "flat_berwald", "euclidean"])
def test_is_berwald_true(request, fixture):
    found = is_berwald(request.getfixturevalue(fixture))
    assert found["berwald"]
    assert found["max_nonlinearity"] <= 1e-9


def test_is_berwald_false_for_non_parallel_drift():
    found = is_berwald(randers_drift(slope=0.2))
    assert not found["berwald"]
    assert found["max_nonlinearity"] > 1e-3
    assert len(found["witness"]["x"]) == 2


def test_circle_measure(euclidean):
    for measure in ("surface", "cone"):
        rule = indicatrix_quadrature(euclidean, [0.0, 0.0], n=32, measure=measure)
        assert rule.total_measure == pytest.approx(2 * np.pi, abs=1e-8)
        np.testing.assert_allclose(np.linalg.norm(rule.nodes, axis=1), 1.0, atol=1e-14)


def test_ellipse_circumference(diagonal):
    # indicatrix of diag(1, 4) is the ellipse with semi-axes 1 and 1/2
    circumference, _ = quad(lambda t: np.sqrt(np.sin(t) ** 2 + 0.25 * np.cos(t) ** 2), 0.0, 2 * np.pi,
                            epsabs=1e-13, epsrel=1e-13)
    assert indicatrix_quadrature(diagonal, [0.0, 0.0]).total_measure == pytest.approx(circumference, abs=1e-8)
    # cone measure is m times the enclosed area
    cone = indicatrix_quadrature(diagonal, [0.0, 0.0], measure="cone")
    assert cone.total_measure == pytest.approx(2 * np.pi * 0.5, abs=1e-8)


def test_randers_measure_stable_under_refinement(randers):
    coarse = indicatrix_quadrature(randers, [0.0, 0.0], n=128)
    fine = indicatrix_quadrature(randers, [0.0, 0.0], n=256)
    assert coarse.total_measure == pytest.approx(fine.total_measure, abs=1e-8)


def test_indicatrix_quadrature_rejects_bad_rules(euclidean):
    with pytest.raises(InvalidInputError):
        indicatrix_quadrature(euclidean, [0.0, 0.0], n=8)
    with pytest.raises(InvalidInputError):
        indicatrix_quadrature(euclidean, [0.0, 0.0], measure="hausdorff")


def test_three_dimensional_sphere_area():
    from models.metric import build_metric

    spec = build_metric({"kind": "euclidean", "dimension": 3})
    rule = indicatrix_quadrature(spec, [0.0, 0.0, 0.0], n=128)
    assert rule.total_measure == pytest.approx(4 * np.pi, rel=1e-10)


def test_averaged_metric_examples(euclidean, warped):
    np.testing.assert_allclose(averaged_metric(euclidean)(jnp.zeros(2)), np.eye(2), atol=1e-12)
    A = quadratic_part(warped)
    for x in ([0.0, 0.0], [0.3, -0.2]):
        xj = jnp.asarray(x)
        np.testing.assert_allclose(averaged_metric(warped)(xj), np.asarray(A(xj)), atol=1e-9)


def test_averaged_metric_minkowski(randers, minkowski_norm):
    for spec in (randers, minkowski_norm):
        h = averaged_metric(spec, 128)
        at_origin = h(jnp.zeros(2))
        np.testing.assert_allclose(h(jnp.asarray([0.4, -0.3])), at_origin, atol=1e-12)
        assert np.linalg.eigvalsh(at_origin).min() > 0.0
        np.testing.assert_allclose(averaged_metric(spec, 256)(jnp.zeros(2)), at_origin, atol=1e-8)


def test_averaged_metric_of_pullback_is_spd_and_smooth(flat_berwald):
    h = averaged_metric(flat_berwald, 64)
    step = 1e-5
    for x in np.random.default_rng(9).uniform(-0.5, 0.5, (4, 2)):
        value = h(jnp.asarray(x))
        np.testing.assert_allclose(value, value.T, atol=1e-14)
        assert np.linalg.eigvalsh(value).min() > 0.0
        exact = np.asarray(jax.jacfwd(h.evaluator)(jnp.asarray(x)))
        assert np.all(np.isfinite(exact))
        fd = np.stack([h(jnp.asarray(x + e)) - h(jnp.asarray(x - e)) for e in step * np.eye(2)], axis=-1) / (2 * step)
        np.testing.assert_allclose(exact, fd, atol=1e-6 * (1.0 + np.abs(exact).max()))


def test_levi_civita_and_ricci_of_sphere(sphere):
    A = quadratic_part(sphere)
    x = jnp.asarray([0.2, 0.1])
    gamma = np.asarray(levi_civita(A)(x))
    # conformal factor e^{2 phi}: Gamma^1_11 = d_1 phi
    phi_1 = -2.0 * 0.2 / (1.0 + 0.05)
    assert gamma[0, 0, 0] == pytest.approx(phi_1, rel=1e-10)
    np.testing.assert_allclose(ricci_tensor(A, x), np.asarray(A(x)), atol=1e-10)


def test_szabo_examples(warped, minkowski_norm, flat_berwald):
    assert szabo_check(warped)["max_deviation"] <= 1e-9
    assert szabo_check(minkowski_norm)["max_deviation"] <= 1e-12
    result = szabo_check(flat_berwald)
    assert result["passed"]
    assert result["max_deviation"] <= 1e-5
    assert result["measure"] == "cone"


def test_szabo_gated_on_berwald(drift_randers):
    with pytest.raises(NotBerwaldError):
        szabo_check(drift_randers)


def test_ricci_identity_flat(minkowski_norm, flat_berwald):
    for spec in (minkowski_norm, flat_berwald):
        result = ricci_identity_check(spec)
        assert result["passed"]
        assert np.abs(result["first_sample"]["ricci_chern"]).max() <= 1e-6


def test_ricci_identity_sphere_is_einstein(sphere):
    result = ricci_identity_check(sphere)
    assert result["passed"]
    assert result["max_deviation"] <= 1e-6
    first = result["first_sample"]
    np.testing.assert_allclose(first["ricci_chern"], first["h"], atol=1e-6)


def test_ricci_identity_gated_on_berwald(drift_randers):
    with pytest.raises(NotBerwaldError):
        ricci_identity_check(drift_randers)


def test_quadratic_structure(sphere, flat_berwald):
    assert quadratic_structure_audit(sphere, [0.1, 0.2]) <= 1e-8
    assert quadratic_structure_audit(flat_berwald, [0.1, 0.2]) <= 1e-8
