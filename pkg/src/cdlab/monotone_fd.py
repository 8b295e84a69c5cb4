"""Steady five-point convection-diffusion schemes and their maximum principle.

A scheme is stored in canonical form

    gamma y(x) - alpha_a y(x - h_a e_a) - beta_a y(x + h_a e_a) = phi(x)

with one ``alpha``/``beta`` array per direction.  These are *line arrays*:
axis ``a`` runs over nodes ``0..N_a`` so that the coefficients at boundary
nodes, needed by the column (adjoint) certificate, are available.  Entries that
are undefined (``alpha`` at node 0, ``beta`` at node ``N_a``) are NaN.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core_grid import Grid1D, GridFunction, RectGrid2D
from .errors import ParameterError
from .fd_operators import _take, assemble_stencil, interior_shape, line_sample, spacings
from .fields import CoefficientField
from .linalg import DEFAULT_OPTIONS, SolverOptions, solve_sparse

Grid = Grid1D | RectGrid2D


class RegularizerKind(enum.Enum):
    NONE = "none"
    EXPONENTIAL = "exponential"
    QUADRATIC = "quadratic"
    RATIONAL = "rational"
    UPWIND = "upwind"


@dataclass(frozen=True)
class Regularizer:
    """Perturbation ``1 + rho(theta)`` of the diffusion coefficient."""

    kind: RegularizerKind = RegularizerKind.NONE
    eta: float = 0.5

    def __post_init__(self) -> None:
        if self.kind is RegularizerKind.QUADRATIC and not self.eta > 0.25:
            raise ParameterError(f"quadratic regularizer needs eta > 0.25, got {self.eta}")

    def one_plus_rho(self, theta: np.ndarray) -> np.ndarray:
        big, small = self.split(theta)
        return 0.5 * (big + small)

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(1 + rho + |theta|, 1 + rho - |theta|)``, the second evaluated
        without cancellation."""
        a = np.abs(np.asarray(theta, dtype=float))
        kind = self.kind
        if kind is RegularizerKind.EXPONENTIAL:
            with np.errstate(over="ignore"):
                em = np.expm1(2 * a)
            small = np.where(a < 1e-4, 1.0 - a + a**2 / 3, np.divide(2 * a, em, out=np.ones_like(a), where=a >= 1e-4))
        elif kind is RegularizerKind.QUADRATIC:
            small = self.eta * (a - 0.5 / self.eta) ** 2 + (1.0 - 0.25 / self.eta)
        elif kind is RegularizerKind.RATIONAL:
            small = 1.0 / (1.0 + a)
        elif kind is RegularizerKind.UPWIND:
            small = np.ones_like(a)
        else:
            small = 1.0 - a
        return small + 2 * a, small


def theta_coth(theta: np.ndarray) -> np.ndarray:
    """``theta * coth(theta)`` with the removable singularity at 0 filled in."""
    return Regularizer(RegularizerKind.EXPONENTIAL).one_plus_rho(theta)


@dataclass(frozen=True, eq=False)
class FivePointScheme:
    grid: Grid
    gamma: np.ndarray
    alpha: tuple[np.ndarray, ...]
    beta: tuple[np.ndarray, ...]
    rhs: np.ndarray | None = None
    label: str = ""

    def alpha_interior(self, a: int) -> np.ndarray:
        return _take(self.alpha[a], a, 1, -1)

    def beta_interior(self, a: int) -> np.ndarray:
        return _take(self.beta[a], a, 1, -1)

    def matrix(self) -> sp.csr_matrix:
        dims = range(len(self.alpha))
        return assemble_stencil(self.grid, self.gamma,
                                [-self.alpha_interior(a) for a in dims],
                                [-self.beta_interior(a) for a in dims])

    def with_rhs(self, rhs: np.ndarray) -> "FivePointScheme":
        return FivePointScheme(self.grid, self.gamma, self.alpha, self.beta, np.asarray(rhs, dtype=float).ravel(),
                               self.label)


def peclet_field(grid: Grid, field: CoefficientField, t: float = 0.0) -> tuple[np.ndarray, ...]:
    """Per-direction ``theta_a = v_a h_a / (2 k)`` at interior nodes."""
    from .fd_operators import interior_coords
    coords = interior_coords(grid)
    k = field.sample_k(*coords)
    v = field.sample_v(*coords, t=t)
    return tuple(v[a] * h / (2 * k) for a, h in enumerate(spacings(grid)))


def build_nondivergent_scheme(grid: Grid, field: CoefficientField, regularizer: Regularizer | None = None,
                              t: float = 0.0) -> FivePointScheme:
    """Central nondivergent scheme, optionally with a regularized diffusion."""
    reg = regularizer or Regularizer()
    alphas, betas = [], []
    gamma = np.zeros(interior_shape(grid))
    for a, h in enumerate(spacings(grid)):
        k_half = line_sample(grid, field.eval_k, a, -0.5 * h)
        field.check_k(_take(k_half, a, 1, None))
        k_node = line_sample(grid, field.sample_k, a, 0.0)
        v_node = line_sample(grid, lambda *c: field.sample_v(*c, t=t)[a], a, 0.0)
        theta = v_node * h / (2 * k_node)
        big, small = reg.split(theta)
        p = np.where(theta >= 0, big, small)  # 1 + rho + theta
        m = np.where(theta >= 0, small, big)  # 1 + rho - theta
        A = np.full(k_half.shape, np.nan)
        B = np.full(k_half.shape, np.nan)
        n = k_half.shape[a]
        # k at x - h/2 for node i is k_half[i]; k at x + h/2 is k_half[i + 1]
        idx_a = [slice(None)] * A.ndim
        idx_a[a] = slice(1, None)
        idx_b = [slice(None)] * A.ndim
        idx_b[a] = slice(0, n - 1)
        A[tuple(idx_a)] = _take(k_half, a, 1, None) / h**2 * _take(p, a, 1, None)
        B[tuple(idx_b)] = _take(k_half, a, 1, None) / h**2 * _take(m, a, 0, n - 1)
        alphas.append(A)
        betas.append(B)
        gamma = gamma + _take(A, a, 1, -1) + _take(B, a, 1, -1)
    return FivePointScheme(grid, gamma, tuple(alphas), tuple(betas), label=f"nondivergent/{reg.kind.value}")


def build_divergent_scheme(grid: Grid, field: CoefficientField, regularizer: Regularizer | None = None,
                           t: float = 0.0) -> FivePointScheme:
    """Divergent scheme with staggered velocity; ``gamma`` makes columns balance."""
    reg = regularizer or Regularizer()
    alphas, betas = [], []
    gamma = np.zeros(interior_shape(grid))
    for a, h in enumerate(spacings(grid)):
        # half point (j - 1/2) h for j = 0..N; only j >= 1 lies inside the domain
        k_half = line_sample(grid, field.eval_k, a, -0.5 * h)
        v_half = line_sample(grid, lambda *c: field.sample_v(*c, t=t)[a], a, -0.5 * h)
        inside = _take(k_half, a, 1, None)
        field.check_k(inside)
        theta = _take(v_half, a, 1, None) * h / (2 * inside)
        big, small = reg.split(theta)
        P = inside / h**2 * np.where(theta >= 0, big, small)
        M = inside / h**2 * np.where(theta >= 0, small, big)
        n = k_half.shape[a]
        A = np.full(k_half.shape, np.nan)
        B = np.full(k_half.shape, np.nan)
        ia = [slice(None)] * A.ndim
        ia[a] = slice(1, None)
        ib = [slice(None)] * A.ndim
        ib[a] = slice(0, n - 1)
        A[tuple(ia)] = P  # alpha at node i uses half point i - 1/2
        B[tuple(ib)] = M  # beta at node i uses half point i + 1/2
        alphas.append(A)
        betas.append(B)
        gamma = gamma + _take(A, a, 2, None) + _take(B, a, 0, -2)
    return FivePointScheme(grid, gamma, tuple(alphas), tuple(betas), label=f"divergent/{reg.kind.value}")


def apply_regularizer(grid: Grid, field: CoefficientField, regularizer: Regularizer, divergent: bool = False,
                      t: float = 0.0) -> FivePointScheme:
    """Regularized scheme of the requested form."""
    builder = build_divergent_scheme if divergent else build_nondivergent_scheme
    return builder(grid, field, regularizer, t)


@dataclass(frozen=True)
class Witness:
    node: tuple[int, ...]
    coefficient: str
    value: float
    bound: float | None = None


@dataclass(frozen=True)
class Certificate:
    """Outcome of a maximum-principle check.

    ``kinds`` lists every certificate that holds (``"row"``, ``"column"`` or a
    route name such as ``"green"``); an empty tuple means failure, in which
    case ``witness`` locates a violated condition.
    """

    kinds: tuple[str, ...]
    witness: Witness | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.kinds)

    @property
    def verdict(self) -> str:
        return "+".join(self.kinds) if self.kinds else "fail"


def _first_bad(mask: np.ndarray, offset: tuple[int, ...]) -> tuple[int, ...] | None:
    idx = np.argwhere(mask)
    if idx.size == 0:
        return None
    return tuple(int(i + o) for i, o in zip(idx[0], offset))


_DOMINANCE_RTOL = 8 * np.finfo(float).eps


def check_maximum_principle(s: FivePointScheme) -> Certificate:
    """Positivity of all coefficients plus row or column diagonal dominance.

    Positivity is tested with exact sign (strictly greater than zero); the
    dominance inequalities allow a relative slack of a few ulps so that a
    coefficient sum reassociated by the compiler does not flip the verdict.
    Node indices in the witness are full-grid indices.
    """
    dims = len(s.alpha)
    off = (1,) * dims
    if (node := _first_bad(~(s.gamma > 0), off)) is not None:
        return Certificate((), Witness(node, "gamma", float(s.gamma[tuple(np.subtract(node, 1))])))
    for a in range(dims):
        for name, arr in ((f"alpha{a + 1}", s.alpha_interior(a)), (f"beta{a + 1}", s.beta_interior(a))):
            if (node := _first_bad(~(arr > 0), off)) is not None:
                return Certificate((), Witness(node, name, float(arr[tuple(np.subtract(node, 1))])))
    row_sum = np.zeros_like(s.gamma)
    col_sum = np.zeros_like(s.gamma)
    boundary_ok = True
    for a in range(dims):
        row_sum = row_sum + s.alpha_interior(a) + s.beta_interior(a)
        col_sum = col_sum + _take(s.alpha[a], a, 2, None) + _take(s.beta[a], a, 0, -2)
        last = _take(s.alpha[a], a, -1, None)
        first = _take(s.beta[a], a, 0, 1)
        boundary_ok &= bool(np.all(last > 0) and np.all(first > 0))
    slack = _DOMINANCE_RTOL * np.abs(s.gamma)
    kinds = []
    details = {"row_margin": float(np.min(s.gamma - row_sum)), "column_margin": float(np.min(s.gamma - col_sum))}
    if np.all(s.gamma >= row_sum - slack):
        kinds.append("row")
    if boundary_ok and np.all(np.nan_to_num(s.gamma - col_sum, nan=-np.inf) >= -slack):
        kinds.append("column")
    if kinds:
        return Certificate(tuple(kinds), None, details)
    node = _first_bad(s.gamma < row_sum - slack, off)
    return Certificate((), Witness(node, "gamma", float(s.gamma[tuple(np.subtract(node, 1))]),
                                   float(row_sum[tuple(np.subtract(node, 1))])), details)


def solve_steady(s: FivePointScheme, rhs: np.ndarray | None = None, opts: SolverOptions = DEFAULT_OPTIONS,
                 method: str = "krylov") -> GridFunction:
    """Solve the scheme for its right-hand side (or ``rhs``)."""
    phi = s.rhs if rhs is None else np.asarray(rhs, dtype=float).ravel()
    if phi is None:
        raise ParameterError("scheme has no right-hand side")
    A = s.matrix()
    y = solve_sparse(A, phi, symmetric=False, opts=opts, method=method)
    return GridFunction.from_interior(s.grid, y)
