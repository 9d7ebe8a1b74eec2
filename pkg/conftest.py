import os

import hypothesis
import numpy as np
import pytest

from models.metric import build_metric

np.seterr(all="warn")

# jit compilation makes first examples slow; fixtures here are immutable specs
unchecked = [hypothesis.HealthCheck.function_scoped_fixture, hypothesis.HealthCheck.too_slow]
hypothesis.settings.register_profile("ci", max_examples=15, deadline=None, suppress_health_check=unchecked)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None, suppress_health_check=unchecked)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))

IDENTITY = [[1.0, 0.0], [0.0, 1.0]]


def randers_constant(b=(0.5, 0.0)):
    return build_metric({"kind": "randers", "matrix_field": {"name": "constant", "matrix": IDENTITY},
                         "covector_field": {"name": "constant", "vector": list(b)}})


def randers_drift(slope=0.1):
    """b(x) = (0.3 + slope * x^2, 0): not closed, so not Berwald."""
    return build_metric({"kind": "randers", "matrix_field": {"name": "constant", "matrix": IDENTITY},
                         "covector_field": {"name": "affine", "offset": [0.3, 0.0],
                                            "matrix": [[0.0, slope], [0.0, 0.0]]}})


def minkowski():
    return build_metric({"kind": "locally-minkowski", "matrix": [[1.0, 0.2], [0.2, 1.5]], "vector": [0.3, 0.1]})


def pullback_flat(coefficient=0.1):
    return build_metric({"kind": "pullback", "inner": minkowski().model_dump(),
                         "diffeo": {"name": "quadratic_shear", "target": 0, "source": 1,
                                    "coefficient": coefficient}})


@pytest.fixture
def euclidean():
    return build_metric({"kind": "euclidean"})


@pytest.fixture
def diagonal():
    """A = diag(1, 4)."""
    return build_metric({"kind": "riemannian", "matrix_field": {"name": "constant", "matrix": [[1.0, 0.0], [0.0, 4.0]]}})


@pytest.fixture
def warped():
    """A(x) = diag(1, (1 + 0.1 x^1)^2)."""
    return build_metric({"kind": "riemannian",
                         "matrix_field": {"name": "warped_diagonal", "offsets": [1.0, 1.0],
                                          "slopes": [[0.0, 0.0], [0.1, 0.0]]}})


@pytest.fixture
def sphere():
    return build_metric({"kind": "riemannian", "matrix_field": {"name": "conformal_sphere", "curvature": 1.0}})


@pytest.fixture
def randers():
    return randers_constant()


@pytest.fixture
def drift_randers():
    return randers_drift()


@pytest.fixture
def minkowski_norm():
    return minkowski()


@pytest.fixture
def flat_berwald():
    return pullback_flat()


@pytest.fixture(scope="module", params=["euclidean", "riemannian", "randers", "locally-minkowski", "pullback"])
def family(request):
    """One spec per metric kind."""
    return {
        "euclidean": lambda: build_metric({"kind": "euclidean"}),
        "riemannian": lambda: build_metric({"kind": "riemannian",
                                            "matrix_field": {"name": "warped_diagonal", "offsets": [1.0, 1.0],
                                                             "slopes": [[0.0, 0.0], [0.1, 0.0]]}}),
        "randers": randers_drift,
        "locally-minkowski": minkowski,
        "pullback": pullback_flat,
    }[request.param]()
