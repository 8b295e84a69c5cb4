"""Finite difference diffusion and convection operators on uniform grids.

Operators are returned as scipy CSR matrices acting on interior-node vectors
(homogeneous Dirichlet closure).  Both 1D and 2D grids are accepted; in 1D
there is a single direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core_grid import Grid1D, GridFunction, RectGrid2D
from .fields import CoefficientField, CoefficientPlacement, ConvectionForm

__all__ = [
    "ConvectionForm",
    "CoefficientPlacement",
    "OperatorConstants",
    "assemble_diffusion",
    "assemble_convection",
    "assemble_upwind_convection",
    "directional_operators",
    "assemble_stencil",
    "operator_constants",
    "semi_discrete_rhs",
    "sample_interior",
]

Grid = Grid1D | RectGrid2D


def spacings(grid: Grid) -> tuple[float, ...]:
    return (grid.h,) if isinstance(grid, Grid1D) else (grid.h1, grid.h2)


def lengths(grid: Grid) -> tuple[float, ...]:
    return (grid.l,) if isinstance(grid, Grid1D) else (grid.l1, grid.l2)


def interior_coords(grid: Grid) -> tuple[np.ndarray, ...]:
    """Interior coordinates as arrays of the interior shape."""
    if isinstance(grid, Grid1D):
        return (grid.interior_x,)
    return grid.interior_mesh()


def interior_shape(grid: Grid) -> tuple[int, ...]:
    return (grid.N - 1,) if isinstance(grid, Grid1D) else grid.interior_shape


def shifted(coords: tuple[np.ndarray, ...], alpha: int, delta: float) -> tuple[np.ndarray, ...]:
    out = list(coords)
    out[alpha] = coords[alpha] + delta
    return tuple(out)


def assemble_stencil(grid: Grid, center: np.ndarray, minus: list[np.ndarray], plus: list[np.ndarray]) -> sp.csr_matrix:
    """Build a CSR matrix from per-node stencil weights.

    ``minus[a]``/``plus[a]`` multiply the neighbour at ``-h_a``/``+h_a``;
    neighbours on the boundary are dropped (their values are zero).
    """
    shape = interior_shape(grid)
    n = int(np.prod(shape))
    ids = np.arange(n).reshape(shape)
    rows = [ids.ravel()]
    cols = [ids.ravel()]
    vals = [np.broadcast_to(center, shape).ravel()]
    for alpha in range(len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[alpha] = slice(1, None)
        hi[alpha] = slice(None, -1)
        lo, hi = tuple(lo), tuple(hi)
        m = np.broadcast_to(minus[alpha], shape)
        p = np.broadcast_to(plus[alpha], shape)
        rows += [ids[lo].ravel(), ids[hi].ravel()]
        cols += [ids[hi].ravel(), ids[lo].ravel()]
        vals += [m[lo].ravel(), p[hi].ravel()]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A = A.tocsr()
    A.sum_duplicates()
    return A


def line_sample(grid: Grid, sampler, alpha: int, offset: float) -> np.ndarray:
    """Evaluate ``sampler(*coords)`` at nodes ``0..N`` along ``alpha`` shifted by
    ``offset``, other coordinates interior.  Axis ``alpha`` has length ``N+1``.

    Sampling each line once makes values shared by neighbouring stencils
    bitwise identical, which keeps the assembled operators exactly symmetric
    or adjoint.
    """
    if isinstance(grid, Grid1D):
        return sampler(grid.x + offset)
    X1, X2 = grid.mesh()
    if alpha == 0:
        return sampler(X1[:, 1:-1] + offset, X2[:, 1:-1])
    return sampler(X1[1:-1, :], X2[1:-1, :] + offset)


def _take(arr: np.ndarray, alpha: int, start: int, stop: int | None) -> np.ndarray:
    sl = [slice(None)] * arr.ndim
    sl[alpha] = slice(start, stop)
    return arr[tuple(sl)]


def half_point_k(grid: Grid, field: CoefficientField, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """``k`` at ``x - h/2`` and ``x + h/2`` along ``alpha`` for every interior node."""
    h = spacings(grid)[alpha]
    line = line_sample(grid, field.eval_k, alpha, -0.5 * h)  # entry i is k at (i - 1/2) h
    field.check_k(_take(line, alpha, 1, None))
    return _take(line, alpha, 1, -1), _take(line, alpha, 2, None)


def velocity_line(grid: Grid, field: CoefficientField, alpha: int, t: float, offset: float) -> np.ndarray:
    return line_sample(grid, lambda *c: field.sample_v(*c, t=t)[alpha], alpha, offset)


def diffusion_stencil(grid: Grid, field: CoefficientField) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    center = np.zeros(interior_shape(grid))
    minus, plus = [], []
    for alpha, h in enumerate(spacings(grid)):
        a_m, a_p = half_point_k(grid, field, alpha)
        center = center + (a_m + a_p) / h**2
        minus.append(-a_m / h**2)
        plus.append(-a_p / h**2)
    return center, minus, plus


def assemble_diffusion(grid: Grid, field: CoefficientField) -> sp.csr_matrix:
    """``D y = -sum_a (a^(a) y_xbar_a)_x_a`` with ``a^(a)`` sampled half a step back."""
    return assemble_stencil(grid, *diffusion_stencil(grid, field))


def convection_stencil(grid: Grid, field: CoefficientField, form: ConvectionForm,
                       placement: CoefficientPlacement, t: float = 0.0):
    centers, minus, plus = convection_terms(grid, field, form, placement, t)
    return sum(centers), minus, plus


def convection_terms(grid: Grid, field: CoefficientField, form: ConvectionForm,
                     placement: CoefficientPlacement, t: float = 0.0):
    """Per-direction ``(centre, minus, plus)`` weights of the central convection operator."""
    centers, minus, plus = [], [], []
    for alpha, h in enumerate(spacings(grid)):
        if placement is CoefficientPlacement.NODE:
            line = velocity_line(grid, field, alpha, t, 0.0)
            b_m, b, b_p = _take(line, alpha, 0, -2), _take(line, alpha, 1, -1), _take(line, alpha, 2, None)
            c1 = (np.zeros_like(b), -b / (2 * h), b / (2 * h))
            c2 = (np.zeros_like(b), -b_m / (2 * h), b_p / (2 * h))
        else:
            line = velocity_line(grid, field, alpha, t, -0.5 * h)
            b_m, b_p = _take(line, alpha, 1, -1), _take(line, alpha, 2, None)
            c1 = ((b_m - b_p) / (2 * h), -b_m / (2 * h), b_p / (2 * h))
            c2 = ((b_p - b_m) / (2 * h), -b_m / (2 * h), b_p / (2 * h))
        if form is ConvectionForm.NONDIVERGENT:
            c = c1
        elif form is ConvectionForm.DIVERGENT:
            c = c2
        else:
            c = tuple(0.5 * (u + w) for u, w in zip(c1, c2))
        centers.append(c[0])
        minus.append(c[1])
        plus.append(c[2])
    return centers, minus, plus


def assemble_convection(grid: Grid, field: CoefficientField, form: ConvectionForm,
                        placement: CoefficientPlacement = CoefficientPlacement.NODE, t: float = 0.0) -> sp.csr_matrix:
    """Central convection operator ``C1``, ``C2`` or ``C0`` at time ``t``."""
    return assemble_stencil(grid, *convection_stencil(grid, field, form, placement, t))


def upwind_terms(grid: Grid, field: CoefficientField, form: ConvectionForm, t: float = 0.0):
    """Per-direction ``(centre, minus, plus)`` weights of the upwind convection operator."""
    if form is ConvectionForm.SKEW:
        raise ValueError("upwind differencing is defined for the nondivergent and divergent forms only")
    centers, minus, plus = [], [], []
    for alpha, h in enumerate(spacings(grid)):
        line = velocity_line(grid, field, alpha, t, -0.5 * h)
        b_m, b_p = _take(line, alpha, 1, -1), _take(line, alpha, 2, None)
        pos_m, neg_m = np.maximum(b_m, 0.0), np.minimum(b_m, 0.0)
        pos_p, neg_p = np.maximum(b_p, 0.0), np.minimum(b_p, 0.0)
        if form is ConvectionForm.NONDIVERGENT:
            centers.append((pos_m - neg_p) / h)
        else:
            centers.append((pos_p - neg_m) / h)
        minus.append(-pos_m / h)
        plus.append(neg_p / h)
    return centers, minus, plus


def assemble_upwind_convection(grid: Grid, field: CoefficientField, form: ConvectionForm,
                               t: float = 0.0) -> sp.csr_matrix:
    """First-order upwind convection with velocities at half-integer points.

    The nondivergent form is row-wise and the divergent form column-wise
    diagonally dominant with nonpositive off-diagonal entries.
    """
    centers, minus, plus = upwind_terms(grid, field, form, t)
    return assemble_stencil(grid, sum(centers), minus, plus)


def directional_operators(grid: Grid, field: CoefficientField, form: ConvectionForm | None = None,
                          placement: CoefficientPlacement = CoefficientPlacement.NODE, t: float = 0.0,
                          upwind: bool = False) -> list[sp.csr_matrix]:
    """Per-direction parts ``A_a = D_a + C_a`` whose sum is the full operator.

    Each part couples unknowns along its own grid lines only.  ``form=None``
    leaves out convection.
    """
    dims = len(spacings(grid))
    _, dm, dp = diffusion_stencil(grid, field)
    dc = []
    for alpha, h in enumerate(spacings(grid)):
        a_m, a_p = half_point_k(grid, field, alpha)
        dc.append((a_m + a_p) / h**2)
    if form is not None:
        cc, cm, cp = (upwind_terms(grid, field, form, t) if upwind
                      else convection_terms(grid, field, form, placement, t))
    out = []
    for a in range(dims):
        zero = np.zeros(interior_shape(grid))
        minus, plus = [zero] * dims, [zero] * dims
        minus[a], plus[a], center = dm[a], dp[a], dc[a]
        if form is not None:
            minus[a], plus[a], center = minus[a] + cm[a], plus[a] + cp[a], center + cc[a]
        out.append(assemble_stencil(grid, center, minus, plus))
    return out


@dataclass(frozen=True)
class OperatorConstants:
    """Bounding constants of the grid operators.

    ``M0`` is the spectral constant ``sum 8/l_a^2``; ``friedrichs = 1/M0`` bounds
    ``||y||^2 <= friedrichs * ||grad y||^2`` and is what enters ``M2``.
    """

    M0: float
    M1: float
    M2: float
    M3: float

    @property
    def friedrichs(self) -> float:
        return 1.0 / self.M0


def _all_nodes(grid: Grid) -> tuple[np.ndarray, ...]:
    return (grid.x,) if isinstance(grid, Grid1D) else grid.mesh()


def operator_constants(grid: Grid, field: CoefficientField,
                       placement: CoefficientPlacement = CoefficientPlacement.NODE,
                       form: ConvectionForm = ConvectionForm.NONDIVERGENT, t: float = 0.0) -> OperatorConstants:
    """``M0``, ``M1``, ``M2`` (for ``form``/``placement``) and ``M3``."""
    hs = spacings(grid)
    M0 = float(sum(8.0 / l**2 for l in lengths(grid)))
    F = 1.0 / M0
    coords = interior_coords(grid)

    M3 = 0.0
    for alpha, h in enumerate(hs):
        a_m, a_p = half_point_k(grid, field, alpha)
        M3 += 4.0 / h**2 * float(np.max(0.5 * (a_m + a_p)))

    div = np.zeros(interior_shape(grid))
    if placement is CoefficientPlacement.NODE:
        M1 = 0.0
        for alpha, h in enumerate(hs):
            line = velocity_line(grid, field, alpha, t, 0.0)
            M1 += 0.5 * float(np.max(np.abs(np.diff(line, axis=alpha) / h)))  # b_xbar at nodes 1..N
            div = div + (_take(line, alpha, 2, None) - _take(line, alpha, 0, -2)) / (2 * h)
        bmax2_int = max(float(np.max(field.sample_v(*coords, t=t)[a] ** 2)) for a in range(len(hs)))
        bmax2_closed = max(float(np.max(c**2)) for c in field.sample_v(*_all_nodes(grid), t=t))
    else:
        bmax2_int = 0.0
        for alpha, h in enumerate(hs):
            line = velocity_line(grid, field, alpha, t, -0.5 * h)
            half = _take(line, alpha, 1, None)  # half points (i - 1/2) h, i = 1..N
            div = div + np.diff(_take(line, alpha, 1, None), axis=alpha) / h
            bmax2_int = max(bmax2_int, float(np.max(half**2)))
        bmax2_closed = bmax2_int
        M1 = 0.5 * float(np.max(np.abs(div)))
    div2 = float(np.max(div**2))
    if form is ConvectionForm.NONDIVERGENT:
        M2 = 2.0 / field.kappa1 * bmax2_int
    elif form is ConvectionForm.DIVERGENT:
        M2 = 2.0 / field.kappa1 * (2 * bmax2_closed + F * div2)
    else:
        M2 = 1.0 / field.kappa1 * (3 * bmax2_closed + F * div2)
    return OperatorConstants(M0=M0, M1=M1, M2=M2, M3=M3)


def sample_interior(grid: Grid, fn, t: float | None = None) -> np.ndarray:
    """Sample ``fn(x..., t)`` (or ``fn(x...)`` when ``t`` is None) at interior nodes, flattened."""
    coords = interior_coords(grid)
    vals = fn(*coords) if t is None else fn(*coords, t)
    return np.broadcast_to(np.asarray(vals, dtype=float), interior_shape(grid)).ravel().copy()


def semi_discrete_rhs(grid: Grid, f, t: float) -> GridFunction:
    """Source ``f(x, t)`` sampled at interior nodes (zero on the boundary)."""
    return GridFunction.from_interior(grid, sample_interior(grid, f, t))
