"""Finite volume operators on Voronoi control volumes.

Every operator here has the face form

    (L y)_i = (1 / V_i) * sum_{j in W(i)} (P_ij y_i + Q_ij y_j)

and is stored as a :class:`FaceStencil` holding ``P`` and ``Q`` for both
orientations of each face, including faces whose far node is a boundary
node.  Matrices act on interior unknowns (homogeneous Dirichlet closure); the
adjoint in the ``V``-weighted inner product swaps ``Q_ij`` and ``Q_ji``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import MeshInputError, ParameterError
from ..fields import CoefficientField, ConvectionForm
from ..linalg import DEFAULT_OPTIONS, SolverOptions, solve_sparse
from ..monotone_fd import Certificate, Witness
from .mesh import TriMesh

GREEN_LIMIT = 200


@dataclass(frozen=True, eq=False)
class NormalVelocity:
    """Normal velocity ``b_ij = (v . n)(x_ij)`` stored once per face (``i < j``).

    The mirror value is ``-b`` by construction, so antisymmetry is exact.
    """

    mesh: TriMesh
    b: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.b, dtype=float)
        if b.shape != (len(self.mesh.edges),):
            raise MeshInputError(f"expected {len(self.mesh.edges)} face values, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise MeshInputError("normal velocity must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_directed(cls, mesh: TriMesh, values: dict[tuple[int, int], float]) -> "NormalVelocity":
        """Build from per-orientation values, insisting on ``b_ij = -b_ji`` exactly."""
        b = np.zeros(len(mesh.edges))
        for e, (i, j) in enumerate(mesh.edges.tolist()):
            fwd = values.get((i, j))
            back = values.get((j, i))
            if fwd is None and back is None:
                raise MeshInputError(f"no normal velocity for face ({i}, {j})")
            if fwd is not None and back is not None and fwd != -back:
                raise MeshInputError(f"b[{i},{j}] = {fwd!r} but b[{j},{i}] = {back!r}")
            b[e] = fwd if fwd is not None else -back
        return cls(mesh, b)

    @property
    def plus(self) -> np.ndarray:
        return np.maximum(self.b, 0.0)

    @property
    def minus(self) -> np.ndarray:
        return np.minimum(self.b, 0.0)


def split_velocity(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(b+, b-)`` with ``b+ = (b + |b|)/2`` and ``b- = (b - |b|)/2``."""
    b = np.asarray(b, dtype=float)
    return 0.5 * (b + np.abs(b)), 0.5 * (b - np.abs(b))


def normal_velocity(mesh: TriMesh, velocity: Any, t: float = 0.0) -> NormalVelocity:
    """Face normal velocities from a field, an evaluator ``v(x1, x2, t)``, face values
    or an existing :class:`NormalVelocity`."""
    if isinstance(velocity, NormalVelocity):
        return velocity
    if isinstance(velocity, CoefficientField):
        v1, v2 = velocity.sample_v(mesh.midpoint[:, 0], mesh.midpoint[:, 1], t=t)
    elif callable(velocity):
        v1, v2 = velocity(mesh.midpoint[:, 0], mesh.midpoint[:, 1], t)
        v1 = np.broadcast_to(np.asarray(v1, dtype=float), (len(mesh.edges),))
        v2 = np.broadcast_to(np.asarray(v2, dtype=float), (len(mesh.edges),))
    else:
        return NormalVelocity(mesh, np.asarray(velocity, dtype=float))
    return NormalVelocity(mesh, v1 * mesh.normal[:, 0] + v2 * mesh.normal[:, 1])


@dataclass(frozen=True, eq=False)
class FaceStencil:
    """Face coefficients ``P_ij, Q_ij`` (``fwd``: ``i -> j`` with ``i < j``) and
    ``P_ji, Q_ji`` (``back``), not yet divided by ``V``."""

    mesh: TriMesh
    p_fwd: np.ndarray
    q_fwd: np.ndarray
    p_back: np.ndarray
    q_back: np.ndarray

    def __add__(self, other: "FaceStencil") -> "FaceStencil":
        return FaceStencil(self.mesh, self.p_fwd + other.p_fwd, self.q_fwd + other.q_fwd,
                           self.p_back + other.p_back, self.q_back + other.q_back)

    def scaled(self, c: float) -> "FaceStencil":
        return FaceStencil(self.mesh, c * self.p_fwd, c * self.q_fwd, c * self.p_back, c * self.q_back)

    def adjoint(self) -> "FaceStencil":
        return FaceStencil(self.mesh, self.p_fwd, self.q_back, self.p_back, self.q_fwd)

    def _directed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        e = self.mesh.edges
        i = np.concatenate([e[:, 0], e[:, 1]])
        j = np.concatenate([e[:, 1], e[:, 0]])
        return i, j, np.concatenate([self.p_fwd, self.p_back]), np.concatenate([self.q_fwd, self.q_back])

    def matrix(self) -> sp.csr_matrix:
        """Operator on interior unknowns; the pattern is the interior adjacency."""
        mesh = self.mesh
        uid = mesh.unknown_index
        i, j, p, q = self._directed()
        rows = uid[i]
        cols = uid[j]
        inner = rows >= 0
        V = mesh.V[i]
        n = mesh.n_interior
        diag = np.zeros(n)
        np.add.at(diag, rows[inner], p[inner] / V[inner])
        both = inner & (cols >= 0)
        r = np.concatenate([np.arange(n), rows[both]])
        c = np.concatenate([np.arange(n), cols[both]])
        v = np.concatenate([diag, q[both] / V[both]])
        A = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        return A

    def canonical(self) -> "CanonicalForm":
        """``alpha_i y_i - sum_j beta_ij y_j = phi_i`` coefficients (boundary neighbours included)."""
        mesh = self.mesh
        uid = mesh.unknown_index
        i, j, p, q = self._directed()
        inner = uid[i] >= 0
        i, j, p, q = i[inner], j[inner], p[inner], q[inner]
        V = mesh.V[i]
        alpha = np.zeros(mesh.n_nodes)
        np.add.at(alpha, i, p / V)
        beta = -q / V
        delta = np.zeros(mesh.n_nodes)
        np.add.at(delta, i, (p + q) / V)
        nodes = mesh.interior_nodes
        return CanonicalForm(mesh, alpha[nodes], i, j, beta, delta[nodes])


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """Per interior node ``alpha``/``delta``; per directed face ``(i, j)`` ``beta``."""

    mesh: TriMesh
    alpha: np.ndarray
    face_i: np.ndarray
    face_j: np.ndarray
    beta: np.ndarray
    delta: np.ndarray


def _k_at_faces(mesh: TriMesh, field: CoefficientField) -> np.ndarray:
    return field.sample_k(mesh.midpoint[:, 0], mesh.midpoint[:, 1])


def diffusion_stencil(mesh: TriMesh, field: CoefficientField) -> FaceStencil:
    w = mesh.l * _k_at_faces(mesh, field) / mesh.d
    return FaceStencil(mesh, w, -w, w, -w)


def fvm_diffusion(mesh: TriMesh, field: CoefficientField) -> sp.csr_matrix:
    """``(Dy)_i = -(1/V_i) sum_j l_ij k(x_ij) (y_j - y_i) / d_ij``."""
    return diffusion_stencil(mesh, field).matrix()


def laplace_form(mesh: TriMesh, y: np.ndarray) -> np.ndarray:
    """``(Lambda y)_i = -(1/V_i) sum_j l_ij (y_j - y_i)/d_ij`` for a full node vector, all nodes."""
    y = np.asarray(y, dtype=float)
    e = mesh.edges
    flux = mesh.l * (y[e[:, 1]] - y[e[:, 0]]) / mesh.d
    acc = np.zeros(mesh.n_nodes)
    np.add.at(acc, e[:, 0], flux)
    np.add.at(acc, e[:, 1], -flux)
    return -acc / mesh.V


def convection_stencil(mesh: TriMesh, velocity: Any, form: ConvectionForm, t: float = 0.0) -> FaceStencil:
    b = normal_velocity(mesh, velocity, t).b
    half = 0.5 * mesh.l * b  # l_ij b_ij / 2; the mirror face carries -half
    if form is ConvectionForm.DIVERGENT:
        return FaceStencil(mesh, half, half, -half, -half)
    if form is ConvectionForm.NONDIVERGENT:
        return FaceStencil(mesh, -half, half, half, -half)
    z = np.zeros_like(half)
    return FaceStencil(mesh, z, half, z, -half)


def fvm_convection(mesh: TriMesh, velocity: Any, form: ConvectionForm | str, t: float = 0.0) -> sp.csr_matrix:
    """Central convection operator.

    * divergent ``C2``: ``(1/V_i) sum l b (y_j + y_i)/2``
    * nondivergent ``C1``: ``(1/V_i) sum l b (y_j - y_i)/2``
    * skew-symmetric ``C0``: ``(1/(2 V_i)) sum l b y_j``
    """
    form = ConvectionForm.parse(form) if isinstance(form, str) else form
    return convection_stencil(mesh, velocity, form, t).matrix()


def fvm_divergence(mesh: TriMesh, velocity: Any, t: float = 0.0) -> np.ndarray:
    """``div_h v = (1/V_i) sum_j l_ij b_ij`` at every node (boundary cells included)."""
    b = normal_velocity(mesh, velocity, t).b
    e = mesh.edges
    acc = np.zeros(mesh.n_nodes)
    np.add.at(acc, e[:, 0], mesh.l * b)
    np.add.at(acc, e[:, 1], -mesh.l * b)
    return acc / mesh.V


def upwind_stencil(mesh: TriMesh, velocity: Any, form: ConvectionForm, t: float = 0.0) -> FaceStencil:
    b = normal_velocity(mesh, velocity, t).b
    bp, bm = split_velocity(b)  # for the forward face; mirror: b+_ji = -b-_ij, b-_ji = -b+_ij
    l = mesh.l
    if form is ConvectionForm.DIVERGENT:
        return FaceStencil(mesh, l * bp, l * bm, -l * bm, -l * bp)
    if form is ConvectionForm.NONDIVERGENT:
        return FaceStencil(mesh, -l * bm, l * bm, l * bp, -l * bp)
    raise ParameterError("upwind convection is defined for the divergent and nondivergent forms only")


def fvm_upwind_convection(mesh: TriMesh, velocity: Any, form: ConvectionForm | str, t: float = 0.0) -> sp.csr_matrix:
    """Upwind convection.

    * divergent: ``(1/V_i) sum l (b-_ij y_j + b+_ij y_i)``
    * nondivergent: ``(1/V_i) sum l b-_ij (y_j - y_i)``
    """
    form = ConvectionForm.parse(form) if isinstance(form, str) else form
    return upwind_stencil(mesh, velocity, form, t).matrix()


def fvm_upwind_adjoint(mesh: TriMesh, velocity: Any, t: float = 0.0) -> sp.csr_matrix:
    """Weighted adjoint of the upwind divergent operator, ``(1/V_i) sum l b+_ij (v_i - v_j)``."""
    b = normal_velocity(mesh, velocity, t).b
    bp, bm = split_velocity(b)
    l = mesh.l
    return FaceStencil(mesh, l * bp, -l * bp, -l * bm, l * bm).matrix()


def friedrichs_constant(mesh: TriMesh) -> float:
    """``l1^2/16 + l2^2/16`` for the bounding rectangle of the domain."""
    l1, l2 = mesh.bounding_box
    return l1**2 / 16 + l2**2 / 16


@dataclass(frozen=True)
class FvmConstants:
    """``M0`` is the Friedrichs constant; ``M1``/``M2`` bound the convection operator."""

    M0: float
    M1: float
    M2: float


def fvm_constants(mesh: TriMesh, field: CoefficientField, form: ConvectionForm = ConvectionForm.NONDIVERGENT,
                  t: float = 0.0) -> FvmConstants:
    nv = normal_velocity(mesh, field, t)
    M0 = friedrichs_constant(mesh)
    inner = ~mesh.boundary
    div = fvm_divergence(mesh, nv)[inner]
    div2 = float(np.max(div**2, initial=0.0))
    M1 = 0.5 * float(np.max(np.abs(div), initial=0.0))
    touching = inner[mesh.edges[:, 0]] | inner[mesh.edges[:, 1]]
    b2 = float(np.max(nv.b[touching] ** 2, initial=0.0))
    if form is ConvectionForm.NONDIVERGENT:
        M2 = 2.0 / field.kappa1 * b2
    elif form is ConvectionForm.DIVERGENT:
        M2 = 2.0 / field.kappa1 * (2 * b2 + M0 * div2)
    else:
        M2 = 1.0 / field.kappa1 * (3 * b2 + M0 * div2)
    return FvmConstants(M0, M1, M2)


def face_peclet(mesh: TriMesh, field: CoefficientField, t: float = 0.0) -> np.ndarray:
    """``Pe_ij = |b_ij| d_ij / k(x_ij)`` per face."""
    b = normal_velocity(mesh, field, t).b
    return np.abs(b) * mesh.d / _k_at_faces(mesh, field)


@dataclass(frozen=True, eq=False)
class FvmScheme:
    """Steady scheme ``(C + D) y = phi`` on a Voronoi mesh."""

    mesh: TriMesh
    stencil: FaceStencil
    field: CoefficientField
    form: ConvectionForm
    upwind: bool
    t: float = 0.0
    label: str = field(default="")

    def matrix(self) -> sp.csr_matrix:
        return self.stencil.matrix()

    def canonical(self) -> CanonicalForm:
        return self.stencil.canonical()

    def peclet(self) -> np.ndarray:
        return face_peclet(self.mesh, self.field, self.t)


def build_fvm_scheme(mesh: TriMesh, field: CoefficientField, form: ConvectionForm | str = ConvectionForm.NONDIVERGENT,
                     upwind: bool = True, t: float = 0.0) -> FvmScheme:
    form = ConvectionForm.parse(form) if isinstance(form, str) else form
    conv = upwind_stencil(mesh, field, form, t) if upwind else convection_stencil(mesh, field, form, t)
    st = conv + diffusion_stencil(mesh, field)
    label = f"{'upwind' if upwind else 'central'}/{form.value}"
    return FvmScheme(mesh, st, field, form, upwind, t, label)


_RTOL = 8 * np.finfo(float).eps


def _canonical_failure(cf: CanonicalForm) -> Witness | None:
    """First violated condition among ``alpha > 0``, ``beta > 0``, ``delta >= 0``."""
    nodes = cf.mesh.interior_nodes
    bad = np.flatnonzero(~(cf.alpha > 0))
    if bad.size:
        return Witness((int(nodes[bad[0]]),), "alpha", float(cf.alpha[bad[0]]))
    bad = np.flatnonzero(~(cf.beta > 0))
    if bad.size:
        k = bad[np.argmin(cf.beta[bad])]
        return Witness((int(cf.face_i[k]), int(cf.face_j[k])), "beta", float(cf.beta[k]), 0.0)
    bad = np.flatnonzero(cf.delta < -_RTOL * np.abs(cf.alpha))
    if bad.size:
        return Witness((int(nodes[bad[0]]),), "delta", float(cf.delta[bad[0]]), 0.0)
    return None


def green_function(scheme: FvmScheme) -> np.ndarray:
    """Discrete Green function of the adjoint problem, one column per source node.

    Column ``m`` solves ``A* G = delta_m`` with the grid delta ``1/V_m`` at node
    ``m``; ``A*`` is the weighted adjoint of the scheme operator.
    """
    Astar = scheme.stencil.adjoint().matrix().toarray()
    V = scheme.mesh.measure
    return sla.solve(Astar, np.diag(1.0 / V))


def check_fvm_monotone(scheme: FvmScheme, green_limit: int = GREEN_LIMIT) -> Certificate:
    """Maximum-principle certificate for a steady FVM scheme.

    Routes, each reported when it holds:

    * ``direct``: ``alpha_i > 0``, ``beta_ij > 0`` on every face and ``delta_i >= 0``;
    * ``adjoint``: the same conditions for the weighted adjoint operator
      (its solution is then a nonnegative Green function);
    * ``green``: the Green function is computed and found nonnegative
      (meshes with at most ``green_limit`` interior nodes).
    """
    cf = scheme.canonical()
    pe = scheme.peclet()
    kinds = []
    first = _canonical_failure(cf)
    if first is None:
        kinds.append("direct")
    if _canonical_failure(scheme.stencil.adjoint().canonical()) is None:
        kinds.append("adjoint")
    details: dict = {"max_peclet": float(np.max(pe, initial=0.0)), "min_delta": float(np.min(cf.delta, initial=0.0))}
    if scheme.mesh.n_interior <= green_limit:
        G = green_function(scheme)
        gmin = float(G.min(initial=0.0))
        details["green_min"] = gmin
        if gmin >= -1e-12 * float(np.abs(G).max(initial=1.0)):
            kinds.append("green")
    if kinds:
        return Certificate(tuple(kinds), None, details)
    w = first
    if w is not None and w.coefficient == "beta":
        i, j = w.node
        e = np.flatnonzero(((scheme.mesh.edges[:, 0] == min(i, j)) & (scheme.mesh.edges[:, 1] == max(i, j))))
        details["peclet"] = float(pe[e[0]])
    return Certificate((), w, details)


def solve_fvm(scheme: FvmScheme, rhs: np.ndarray, opts: SolverOptions = DEFAULT_OPTIONS,
              method: str = "krylov") -> np.ndarray:
    """Interior solution of ``(C + D) y = rhs``."""
    return solve_sparse(scheme.matrix(), rhs, symmetric=False, opts=opts, method=method)
