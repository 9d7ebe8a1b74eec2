"""Structured simplicial grids, scalar fields and harmonic charts."""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; `cells` subdivisions per axis for quadrature."""

    lower: tuple
    upper: tuple
    cells: int = 8

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dimension))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def dimension(self) -> int:
        return len(self.center)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        m = self.dimension
        directions = rng.normal(size=(count, m))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(count, 1)) ** (1.0 / m)
        return np.asarray(self.center) + directions * radii


@dataclass
class Grid:
    """Vertex-centred structured grid split into Kuhn simplices.

    Nodes carry integer lattice indices so centred differences can be taken;
    on balls the boundary nodes are projected radially onto the sphere.
    """

    shape: str
    radius: float
    spacing: float
    center: np.ndarray
    points: np.ndarray
    indices: np.ndarray
    lattice: np.ndarray
    offset: int
    boundary: np.ndarray
    simplices: np.ndarray
    volumes: np.ndarray = field(init=False)
    gradient_operators: np.ndarray = field(init=False)
    centroids: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidInputError("grid spacing must be positive", witness={"spacing": self.spacing})
        self._refresh_geometry()

    # ----------------------
    # Construction
    # ----------------------

    @classmethod
    def ball(cls, radius: float, spacing: float, dimension: int = 2, center=None) -> "Grid":
        center = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        n = int(math.ceil(radius / spacing))

        def inside(corner_indices):
            coords = spacing * corner_indices
            return np.all(np.linalg.norm(coords, axis=-1) <= radius * (1 + 1e-12), axis=-1)

        grid = cls._from_cubes(cls, "ball", radius, spacing, dimension, center, n, inside)
        grid._project_boundary()
        return grid

    @classmethod
    def square(cls, half_width: float, spacing: float, dimension: int = 2, center=None) -> "Grid":
        center = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        n = max(1, int(round(half_width / spacing)))
        return cls._from_cubes(cls, "square", half_width, half_width / n, dimension, center, n,
                               lambda corner_indices: np.ones(corner_indices.shape[0], dtype=bool))

    @staticmethod
    def _from_cubes(cls, shape, radius, spacing, dimension, center, n, keep):
        corners = np.array(list(itertools.product((0, 1), repeat=dimension)))
        lows = np.array(list(itertools.product(range(-n, n), repeat=dimension)))
        kept = lows[keep(lows[:, None, :] + corners[None, :, :])]
        if len(kept) == 0:
            raise InvalidInputError("grid spacing too coarse for the domain",
                                    witness={"shape": shape, "radius": radius, "spacing": spacing})

        eye = np.eye(dimension, dtype=int)
        paths = []
        for perm in itertools.permutations(range(dimension)):
            steps = np.cumsum(np.vstack([np.zeros(dimension, dtype=int)] + [eye[p] for p in perm]), axis=0)
            paths.append(steps)
        paths = np.array(paths)  # (m!, m+1, m)
        vertex_indices = kept[:, None, None, :] + paths[None, :, :, :]
        vertex_indices = vertex_indices.reshape(-1, dimension + 1, dimension)

        unique, inverse = np.unique(vertex_indices.reshape(-1, dimension), axis=0, return_inverse=True)
        simplices = inverse.reshape(-1, dimension + 1)
        lattice = -np.ones((2 * n + 1,) * dimension, dtype=int)
        lattice[tuple((unique + n).T)] = np.arange(len(unique))

        facet_counts = {}
        for simplex in simplices:
            for skip in range(dimension + 1):
                facet = tuple(sorted(np.delete(simplex, skip)))
                facet_counts[facet] = facet_counts.get(facet, 0) + 1
        boundary = np.zeros(len(unique), dtype=bool)
        for facet, count in facet_counts.items():
            if count == 1:
                boundary[list(facet)] = True

        return cls(shape=shape, radius=radius, spacing=spacing, center=center,
                   points=center + spacing * unique.astype(float), indices=unique, lattice=lattice,
                   offset=n, boundary=boundary, simplices=simplices)

    def _project_boundary(self):
        original = self.points.copy()
        before = self._signed_volumes(original)
        relative = self.points[self.boundary] - self.center
        lengths = np.linalg.norm(relative, axis=1, keepdims=True)
        self.points[self.boundary] = self.center + self.radius * relative / np.where(lengths > 0, lengths, 1.0)
        after = self._signed_volumes(self.points)
        flipped = np.sign(after) != np.sign(before)
        if flipped.any():
            restore = np.unique(self.simplices[flipped].ravel())
            restore = restore[self.boundary[restore]]
            self.points[restore] = original[restore]
            logger.warning("kept %d boundary nodes unprojected to avoid inverted simplices", len(restore))
        self._refresh_geometry()

    def _signed_volumes(self, points) -> np.ndarray:
        P = points[self.simplices]
        return np.linalg.det(P[:, 1:, :] - P[:, :1, :])

    def _refresh_geometry(self):
        m = self.dimension
        P = self.points[self.simplices]
        edges = P[:, 1:, :] - P[:, :1, :]
        self.volumes = np.abs(np.linalg.det(edges)) / math.factorial(m)
        D = np.hstack([-np.ones((m, 1)), np.eye(m)])
        self.gradient_operators = np.linalg.solve(edges, np.broadcast_to(D, edges.shape[:-1] + (m + 1,)))
        self.centroids = P.mean(axis=1)

    # ----------------------
    # Queries
    # ----------------------

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def node_count(self) -> int:
        return len(self.points)

    def node_at(self, index) -> int:
        """Node number for a lattice multi-index, -1 when absent."""
        shifted = np.asarray(index, dtype=int) + self.offset
        if np.any(shifted < 0) or np.any(shifted >= self.lattice.shape[0]):
            return -1
        return int(self.lattice[tuple(shifted)])

    def nearest_node(self, x) -> int:
        return int(np.argmin(np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)))

    def node_of(self, x) -> int:
        """Node located at x; grid fields are only defined pointwise at nodes."""
        node = self.nearest_node(x)
        if np.linalg.norm(self.points[node] - np.asarray(x, dtype=float)) > 1e-9 * self.spacing:
            raise InvalidInputError("x is not a grid node",
                                    witness={"x": np.asarray(x, dtype=float).tolist(), "spacing": self.spacing})
        return node

    def origin_node(self) -> int:
        return self.node_at(np.zeros(self.dimension, dtype=int))

    def gradients(self, values: np.ndarray) -> np.ndarray:
        """Per-simplex constant gradient of the piecewise-linear interpolant."""
        return np.einsum("sij,sj->si", self.gradient_operators, values[self.simplices])


@dataclass
class ScalarField:
    """A closed-form jax-traceable function, or node values on a Grid."""

    fn: Optional[Callable] = None
    grid: Optional[Grid] = None
    values: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.fn is None and (self.grid is None or self.values is None):
            raise InvalidInputError("a scalar field needs a closed form or grid values")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(self.values)):
                raise InvalidInputError("scalar field values must be finite")

    @classmethod
    def closed_form(cls, fn: Callable, name: str = "") -> "ScalarField":
        return cls(fn=fn, name=name)

    @classmethod
    def on_grid(cls, grid: Grid, values, name: str = "") -> "ScalarField":
        return cls(grid=grid, values=values, name=name)

    @property
    def has_gradient(self) -> bool:
        return self.fn is not None

    def sample(self, grid: Grid) -> np.ndarray:
        if self.grid is grid and self.values is not None:
            return self.values
        if self.fn is None:
            raise InvalidInputError("grid field cannot be resampled on another grid")
        import jax

        return np.asarray(jax.vmap(self.fn)(grid.points))

    def node_differential(self, node: int) -> np.ndarray:
        """Centred-difference differential at an interior lattice node."""
        grid = self.grid
        index = grid.indices[node]
        differential = np.zeros(grid.dimension)
        for k in range(grid.dimension):
            step = np.zeros(grid.dimension, dtype=int)
            step[k] = 1
            ahead, behind = grid.node_at(index + step), grid.node_at(index - step)
            if ahead < 0 or behind < 0:
                raise InvalidInputError("node has no centred stencil",
                                        witness={"node": int(node), "x": grid.points[node].tolist()})
            differential[k] = (self.values[ahead] - self.values[behind]) / (
                grid.points[ahead, k] - grid.points[behind, k])
        return differential


@dataclass
class HarmonicChart:
    grid: Grid
    fields: List[ScalarField]
    jacobian: np.ndarray
    determinant: np.ndarray
    residual: List[float]
    certified_radius: float
    det_threshold: float
    energies: List[float] = field(default_factory=list)
    degenerate_cells: List[int] = field(default_factory=list)

    def identity_deviation(self) -> float:
        """max over nodes and components of |u^i - x^i|."""
        coords = self.grid.points - self.grid.center
        return float(max(np.abs(f.values - coords[:, i]).max() for i, f in enumerate(self.fields)))

    def origin_jacobian(self) -> np.ndarray:
        return self.jacobian[self.grid.origin_node()]
