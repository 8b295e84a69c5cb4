"""Uniform grids, grid functions and the discrete inner products and norms.

Every operator in the package acts on vectors of *interior* values; boundary
values are homogeneous Dirichlet data and are never stored in those vectors.
A "space" is any object exposing ``measure``, the per-interior-node weight
(``h`` in 1D, ``h1*h2`` in 2D, the Voronoi cell area ``V_i`` on a triangle
mesh).  All norms and inner products below are taken with that weight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, PreconditionError


class Space(Protocol):
    """Anything that carries interior-node weights."""

    @property
    def measure(self) -> np.ndarray: ...

    @property
    def n_interior(self) -> int: ...


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[0, l]`` with ``N`` cells; interior nodes ``i = 1..N-1``."""

    l: float
    N: int

    def __post_init__(self) -> None:
        if not self.l > 0:
            raise PreconditionError(f"domain length must be positive, got {self.l}")
        if self.N < 2:
            raise PreconditionError(f"need at least 2 cells, got {self.N}")

    @property
    def h(self) -> float:
        return self.l / self.N

    @property
    def shape(self) -> tuple[int]:
        return (self.N + 1,)

    @property
    def x(self) -> np.ndarray:
        """All node coordinates, boundary included."""
        return np.arange(self.N + 1) * self.h

    @property
    def interior_x(self) -> np.ndarray:
        return self.x[1:-1]

    @property
    def n_interior(self) -> int:
        return self.N - 1

    @property
    def measure(self) -> np.ndarray:
        return np.full(self.n_interior, self.h)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1]] = True
        return mask


@dataclass(frozen=True)
class RectGrid2D:
    """Uniform tensor grid on ``[0, l1] x [0, l2]``.

    Nodes are indexed row-major over ``(i1, i2)``: node id ``i1*(N2+1) + i2``.
    Interior unknowns use the same ordering restricted to ``1 <= i1 <= N1-1``,
    ``1 <= i2 <= N2-1``.
    """

    l1: float
    l2: float
    N1: int
    N2: int

    def __post_init__(self) -> None:
        if not (self.l1 > 0 and self.l2 > 0):
            raise PreconditionError("side lengths must be positive")
        if self.N1 < 2 or self.N2 < 2:
            raise PreconditionError("need at least 2 cells per direction")

    @classmethod
    def unit_square(cls, n: int) -> "RectGrid2D":
        return cls(1.0, 1.0, n, n)

    @property
    def h1(self) -> float:
        return self.l1 / self.N1

    @property
    def h2(self) -> float:
        return self.l2 / self.N2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N1 + 1, self.N2 + 1)

    @property
    def interior_shape(self) -> tuple[int, int]:
        return (self.N1 - 1, self.N2 - 1)

    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.N1 + 1) * self.h1

    @property
    def x2(self) -> np.ndarray:
        return np.arange(self.N2 + 1) * self.h2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays of shape ``grid.shape``."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def interior_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        X1, X2 = self.mesh()
        return X1[1:-1, 1:-1], X2[1:-1, 1:-1]

    @property
    def n_nodes(self) -> int:
        return (self.N1 + 1) * (self.N2 + 1)

    @property
    def n_interior(self) -> int:
        return (self.N1 - 1) * (self.N2 - 1)

    @property
    def measure(self) -> np.ndarray:
        return np.full(self.n_interior, self.h1 * self.h2)

    def node_id(self, i1: int, i2: int) -> int:
        return i1 * (self.N2 + 1) + i2

    def interior_id(self, i1: int, i2: int) -> int:
        return (i1 - 1) * (self.N2 - 1) + (i2 - 1)

    def is_boundary(self, i1: int, i2: int) -> bool:
        return i1 in (0, self.N1) or i2 in (0, self.N2)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1], :] = True
        mask[:, [0, -1]] = True
        return mask


Grid = Grid1D | RectGrid2D


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values at every node of a grid, boundary nodes included."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DimensionError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_interior(cls, grid: Grid, vec: np.ndarray) -> "GridFunction":
        vec = np.asarray(vec, dtype=float)
        if vec.size != grid.n_interior:
            raise DimensionError(f"expected {grid.n_interior} interior values, got {vec.size}")
        full = np.zeros(grid.shape)
        if isinstance(grid, Grid1D):
            full[1:-1] = vec
        else:
            full[1:-1, 1:-1] = vec.reshape(grid.interior_shape)
        return cls(grid, full)

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[..., Any], dirichlet: bool = True) -> "GridFunction":
        """Sample ``fn`` at the nodes; with ``dirichlet`` the boundary is zeroed."""
        coords = (grid.x,) if isinstance(grid, Grid1D) else grid.mesh()
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=float), grid.shape).copy()
        if dirichlet:
            vals[grid.boundary_mask] = 0.0
        return cls(grid, vals)

    def interior(self) -> np.ndarray:
        if isinstance(self.grid, Grid1D):
            return self.values[1:-1].copy()
        return self.values[1:-1, 1:-1].ravel()

    @property
    def vanishes_on_boundary(self) -> bool:
        return bool(np.all(self.values[self.grid.boundary_mask] == 0.0))


class NormKind(enum.Enum):
    L2 = "L2"
    LINF = "Linf"
    L1 = "L1"
    ENERGY_D = "EnergyD"
    ENERGY_A = "EnergyA"


def _as_interior(y: Any, space: Any) -> np.ndarray:
    if isinstance(y, GridFunction):
        if space is not None and y.grid != space:
            raise DimensionError("grid function lives on a different grid")
        if not y.vanishes_on_boundary:
            raise PreconditionError("grid function must vanish on the boundary")
        return y.interior()
    arr = np.asarray(y, dtype=float).ravel()
    if arr.size != space.n_interior:
        raise DimensionError(f"expected {space.n_interior} interior values, got {arr.size}")
    return arr


def inner_product(y: Any, w: Any, space: Any = None) -> float:
    """Weighted inner product ``sum_i y_i w_i m_i`` over interior nodes."""
    if space is None:
        if not isinstance(y, GridFunction):
            raise DimensionError("a space is required for raw vectors")
        space = y.grid
    if isinstance(y, GridFunction) and isinstance(w, GridFunction) and y.grid != w.grid:
        raise DimensionError("grid functions live on different grids")
    a = _as_interior(y, space)
    b = _as_interior(w, space)
    return float(np.sum(a * b * space.measure))


def _check_spd(op: Any, space: Any) -> None:
    M = sp.diags(space.measure) @ sp.csr_matrix(op)
    if abs(M - M.T).max() > 1e-12 * max(abs(M).max(), 1.0):
        raise PreconditionError("energy norm requires a self-adjoint operator")
    if M.shape[0] <= 2000:
        lam = np.linalg.eigvalsh(M.toarray())[0]
        if lam <= 0:
            raise PreconditionError(f"energy norm requires a positive operator, min eigenvalue {lam:.3e}")


def norm(y: Any, kind: NormKind = NormKind.L2, space: Any = None, operator: Any = None,
         check: bool = True) -> float:
    """Discrete norm of a grid function.

    ``EnergyD``/``EnergyA`` need ``operator`` and return ``sqrt((Ay, y))``;
    the operator must be self-adjoint and positive in the weighted space.
    """
    if space is None:
        if not isinstance(y, GridFunction):
            raise DimensionError("a space is required for raw vectors")
        space = y.grid
    a = _as_interior(y, space)
    if kind is NormKind.L2:
        scale = float(np.max(np.abs(a), initial=0.0))
        if scale == 0.0 or not math.isfinite(scale):
            return scale
        b = a / scale  # avoids underflow/overflow of the squares
        return scale * float(np.sqrt(np.sum(b * b * space.measure)))
    if kind is NormKind.LINF:
        return float(np.max(np.abs(a))) if a.size else 0.0
    if kind is NormKind.L1:
        return float(np.sum(np.abs(a) * space.measure))
    if operator is None:
        raise PreconditionError(f"{kind.value} norm needs an operator")
    if check:
        _check_spd(operator, space)
    q = float(np.sum((operator @ a) * a * space.measure))
    if q < 0:
        raise PreconditionError("operator is not positive on this vector")
    return float(np.sqrt(q))


@dataclass(frozen=True)
class WeightedSpace:
    """A bare space given only by its weights, handy for tests and small systems."""

    measure: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def n_interior(self) -> int:
        return int(np.asarray(self.measure).size)
