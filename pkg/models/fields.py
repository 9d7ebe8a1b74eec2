"""Named closed-form fields a metric specification is built from.

Every field is a small pydantic model with numeric parameters and a
`__call__` written in `jax.numpy`, so any metric assembled from them can be
differentiated exactly to arbitrary order.
"""
from typing import List, Literal, Optional, Union

import jax.numpy as jnp
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing_extensions import Annotated


class FieldModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def _square(matrix: List[List[float]], what: str) -> int:
    m = len(matrix)
    if m == 0 or any(len(row) != m for row in matrix):
        raise ValueError(f"{what} must be a non-empty square matrix")
    return m


# ----------------------
# Matrix fields A(x)
# ----------------------

class ConstantMatrix(FieldModel):
    name: Literal["constant"] = "constant"
    matrix: List[List[float]]

    @model_validator(mode="after")
    def _check(self):
        _square(self.matrix, "matrix")
        arr = np.asarray(self.matrix)
        if not np.allclose(arr, arr.T, atol=1e-14):
            raise ValueError("matrix must be symmetric")
        return self

    @property
    def dimension(self) -> int:
        return len(self.matrix)

    def __call__(self, x):
        return jnp.asarray(self.matrix, dtype=jnp.float64)


class WarpedDiagonal(FieldModel):
    """A(x) = diag((d_i + s_i·x)^2)."""

    name: Literal["warped_diagonal"] = "warped_diagonal"
    offsets: List[float]
    slopes: List[List[float]]

    @model_validator(mode="after")
    def _check(self):
        m = len(self.offsets)
        if m == 0 or len(self.slopes) != m or any(len(row) != m for row in self.slopes):
            raise ValueError("slopes must be an m x m matrix matching offsets")
        return self

    @property
    def dimension(self) -> int:
        return len(self.offsets)

    def __call__(self, x):
        scale = jnp.asarray(self.offsets) + jnp.asarray(self.slopes) @ x
        return jnp.diag(scale ** 2)


class ConformalSphere(FieldModel):
    """Stereographic round metric of constant curvature K: 4/(1+K|x|^2)^2 I."""

    name: Literal["conformal_sphere"] = "conformal_sphere"
    dimension: int = Field(2, ge=2)
    curvature: float = Field(1.0, gt=0.0)

    def __call__(self, x):
        factor = 4.0 / (1.0 + self.curvature * jnp.dot(x, x)) ** 2
        return factor * jnp.eye(self.dimension)


MatrixField = Annotated[
    Union[ConstantMatrix, WarpedDiagonal, ConformalSphere],
    Field(discriminator="name"),
]


# ----------------------
# Covector fields b(x)
# ----------------------

class ConstantCovector(FieldModel):
    name: Literal["constant"] = "constant"
    vector: List[float]

    @property
    def dimension(self) -> int:
        return len(self.vector)

    def __call__(self, x):
        return jnp.asarray(self.vector, dtype=jnp.float64)


class AffineCovector(FieldModel):
    """b(x) = b0 + B x."""

    name: Literal["affine"] = "affine"
    offset: List[float]
    matrix: List[List[float]]

    @model_validator(mode="after")
    def _check(self):
        m = len(self.offset)
        if m == 0 or _square(self.matrix, "matrix") != m:
            raise ValueError("matrix must be m x m with m = len(offset)")
        return self

    @property
    def dimension(self) -> int:
        return len(self.offset)

    def __call__(self, x):
        return jnp.asarray(self.offset) + jnp.asarray(self.matrix) @ x


CovectorField = Annotated[
    Union[ConstantCovector, AffineCovector],
    Field(discriminator="name"),
]


# ----------------------
# Diffeomorphisms
# ----------------------

class IdentityDiffeo(FieldModel):
    name: Literal["identity"] = "identity"
    dimension: int = Field(2, ge=2)

    def forward(self, x):
        return x

    def inverse(self, x):
        return x

    def jacobian(self, x):
        return jnp.eye(self.dimension)


class LinearDiffeo(FieldModel):
    """x -> L x + c. `inverse_matrix` overrides the computed inverse (audited)."""

    name: Literal["linear"] = "linear"
    matrix: List[List[float]]
    shift: Optional[List[float]] = None
    inverse_matrix: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check(self):
        m = _square(self.matrix, "matrix")
        if self.shift is not None and len(self.shift) != m:
            raise ValueError("shift must have length m")
        if self.inverse_matrix is not None and _square(self.inverse_matrix, "inverse_matrix") != m:
            raise ValueError("inverse_matrix must be m x m")
        return self

    @property
    def dimension(self) -> int:
        return len(self.matrix)

    def _shift(self):
        if self.shift is None:
            return jnp.zeros(self.dimension)
        return jnp.asarray(self.shift)

    def forward(self, x):
        return jnp.asarray(self.matrix) @ x + self._shift()

    def inverse(self, x):
        if self.inverse_matrix is not None:
            return jnp.asarray(self.inverse_matrix) @ (x - self._shift())
        return jnp.linalg.solve(jnp.asarray(self.matrix), x - self._shift())

    def jacobian(self, x):
        return jnp.asarray(self.matrix, dtype=jnp.float64)


class QuadraticShear(FieldModel):
    """x^target -> x^target + coefficient * (x^source)^2, other coordinates fixed."""

    name: Literal["quadratic_shear"] = "quadratic_shear"
    dimension: int = Field(2, ge=2)
    target: int = 0
    source: int = 1
    coefficient: float = 0.1

    @model_validator(mode="after")
    def _check(self):
        indices = (self.target, self.source)
        if self.target == self.source or min(indices) < 0 or max(indices) >= self.dimension:
            raise ValueError("target and source must be distinct coordinate indices")
        return self

    def forward(self, x):
        x = jnp.asarray(x)
        return x.at[self.target].add(self.coefficient * x[self.source] ** 2)

    def inverse(self, x):
        x = jnp.asarray(x)
        return x.at[self.target].add(-self.coefficient * x[self.source] ** 2)

    def jacobian(self, x):
        eye = jnp.eye(self.dimension)
        return eye.at[self.target, self.source].add(2.0 * self.coefficient * x[self.source])


DiffeoSpec = Annotated[
    Union[IdentityDiffeo, LinearDiffeo, QuadraticShear],
    Field(discriminator="name"),
]
