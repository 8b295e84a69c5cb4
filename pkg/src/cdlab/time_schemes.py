"""Time integrators for semi-discrete systems ``dy/dt + A(t) y = phi(t)``.

All schemes are selected by a :class:`SchemeSpec` and advance an
:class:`EvolutionProblem`, whose operators come from either spatial module.
Linear systems are handed to a solver callable (``linalg.solve_sparse`` by
default), which makes it possible to observe exactly which systems a scheme
inverts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from .errors import CdlabError, ParameterError, PreconditionError, StepError, UsageError
from .linalg import (DEFAULT_OPTIONS, SolverOptions, TridiagonalSystem, min_symmetric_eigenvalue, solve_sparse,
                     solve_tridiagonal)

Operator = Any  # sparse matrix or callable t -> sparse matrix


class Family(enum.Enum):
    TWO_LEVEL = "two_level"
    SPLIT_WEIGHTS = "split_weights"
    EXPLICIT_IMPLICIT = "explicit_implicit"
    THREE_LEVEL = "three_level"
    REACTION_SPLIT = "reaction_split"
    SYMMETRIC_REACTION_SPLIT = "symmetric_reaction_split"
    EXP_TRANSFORM = "exp_transform"
    LOD = "lod"
    ADDITIVE_AVG = "additive_avg"


_MULTISTEP = {Family.THREE_LEVEL, Family.SYMMETRIC_REACTION_SPLIT}
_LEFT_POINT = {Family.THREE_LEVEL, Family.REACTION_SPLIT, Family.SYMMETRIC_REACTION_SPLIT}


@dataclass(frozen=True)
class SchemeSpec:
    """Time scheme selection.

    ``sigma`` is the weight of the implicit level.  ``SPLIT_WEIGHTS`` uses
    ``sigma1`` for convection and ``sigma2`` for diffusion; ``EXP_TRANSFORM``
    needs the lower bound ``m`` of the operator.  Operators and sources are
    evaluated at ``t^n + tau/2`` for two-level families and at ``t^n`` for
    three-level and reaction-split families.
    """

    family: Family
    tau: float
    T: float
    sigma: float = 1.0
    sigma1: float | None = None
    sigma2: float | None = None
    m: float | None = None
    convection_form: str = "skew"
    placement: str = "node"
    linear_solver: str = "krylov"
    opts: SolverOptions = DEFAULT_OPTIONS

    def __post_init__(self) -> None:
        if isinstance(self.family, str):
            object.__setattr__(self, "family", Family(self.family))
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ParameterError(f"time step must be positive, got {self.tau}")
        if not self.T > 0:
            raise ParameterError(f"final time must be positive, got {self.T}")
        for name in ("sigma", "sigma1", "sigma2"):
            s = getattr(self, name)
            if s is not None and not 0.0 <= s <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {s}")
        if self.family is Family.SPLIT_WEIGHTS and (self.sigma1 is None or self.sigma2 is None):
            raise ParameterError("split-weight scheme needs sigma1 and sigma2")
        if self.family is Family.EXP_TRANSFORM and self.m is None:
            raise ParameterError("exponential-transform scheme needs the lower bound m")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError(f"T = {self.T} is not an integer multiple of tau = {self.tau}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def time_point(self, n: int) -> float:
        """Time at which operators and sources of step ``n -> n+1`` are evaluated."""
        t = n * self.tau
        return t if self.family in _LEFT_POINT else t + 0.5 * self.tau

    def weights(self) -> tuple[float, float]:
        """``(sigma1, sigma2)`` for convection and diffusion."""
        if self.family is Family.SPLIT_WEIGHTS:
            return float(self.sigma1), float(self.sigma2)
        if self.family is Family.EXPLICIT_IMPLICIT:
            return 0.0, self.sigma
        return self.sigma, self.sigma


@dataclass(frozen=True)
class ReactionField:
    """Reaction coefficient ``r`` per unknown, constant or ``r(t)``."""

    r: Any

    def values(self, t: float) -> np.ndarray:
        return np.asarray(self.r(t) if callable(self.r) else self.r, dtype=float)

    def split(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(r+, r-)`` with ``r+ = max(0, r)`` and ``r- = r - r+``."""
        r = self.values(t)
        rp = np.maximum(r, 0.0)
        return rp, r - rp

    def bounds(self, t: float) -> tuple[float, float]:
        r = self.values(t)
        return float(r.min()), float(r.max())


def _at(op: Operator, t: float):
    return op(t) if callable(op) else op


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    """``dy/dt + (C(t) + D + R(t)) y = phi(t)``, ``y(0) = u0`` on interior unknowns.

    ``parts`` optionally lists the directional operators ``A_1, A_2`` used by
    splitting schemes (their sum is then the whole operator).  ``weights`` is
    the measure of the inner product; ``shape`` the interior grid shape,
    which enables tridiagonal line solves.
    """

    u0: np.ndarray
    D: Any = None
    C: Operator = None
    reaction: ReactionField | None = None
    phi: Callable[[float], np.ndarray] | None = None
    parts: tuple = ()
    weights: np.ndarray | None = None
    shape: tuple[int, ...] | None = None

    @property
    def n(self) -> int:
        return int(np.asarray(self.u0).size)

    @property
    def measure(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else np.asarray(self.weights, dtype=float)

    @property
    def is_symmetric(self) -> bool:
        """Whether the operator is self-adjoint by construction (no convection, no parts)."""
        return self.C is None and (self.D is not None or not self.parts)

    def C_at(self, t: float):
        return None if self.C is None else sp.csr_matrix(_at(self.C, t))

    def parts_at(self, t: float) -> list:
        return [sp.csr_matrix(_at(p, t)) for p in self.parts]

    def A_at(self, t: float, reaction: bool = True) -> sp.csr_matrix:
        A = sp.csr_matrix((self.n, self.n))
        if self.C is not None:
            A = A + self.C_at(t)
        if self.D is not None:
            A = A + sp.csr_matrix(self.D)
        if self.C is None and self.D is None:
            for p in self.parts_at(t):
                A = A + p
        if reaction and self.reaction is not None:
            A = A + sp.diags(self.reaction.values(t))
        return sp.csr_matrix(A)

    def phi_at(self, t: float) -> np.ndarray:
        if self.phi is None:
            return np.zeros(self.n)
        return np.broadcast_to(np.asarray(self.phi(t), dtype=float), (self.n,)).copy()

    def with_u0(self, u0: np.ndarray) -> "EvolutionProblem":
        return EvolutionProblem(np.asarray(u0, dtype=float), self.D, self.C, self.reaction, self.phi, self.parts,
                                self.weights, self.shape)


Solver = Callable[..., np.ndarray]


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


def _solve(spec: SchemeSpec, problem: EvolutionProblem, M, rhs, symmetric: bool, n: int,
           solver: Solver | None) -> np.ndarray:
    solve = solver or solve_sparse
    try:
        return solve(sp.csr_matrix(M), rhs, symmetric=symmetric, opts=spec.opts, weights=problem.weights,
                     method=spec.linear_solver)
    except CdlabError as exc:
        if isinstance(exc, StepError):
            raise
        raise StepError(n, exc) from exc


def _D(problem: EvolutionProblem) -> sp.csr_matrix:
    return sp.csr_matrix((problem.n, problem.n)) if problem.D is None else sp.csr_matrix(problem.D)


def step_two_level(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                   solver: Solver | None = None) -> np.ndarray:
    """``(y' - y)/tau + C(s1 y' + (1-s1) y) + D(s2 y' + (1-s2) y) = phi``.

    Without a diffusion/convection split the whole operator takes weight
    ``sigma``.
    """
    t = spec.time_point(n)
    tau = spec.tau
    s1, s2 = spec.weights()
    phi = problem.phi_at(t)
    if problem.C is None and problem.D is None:
        A = problem.A_at(t)
        M = _eye(problem.n) + spec.sigma * tau * A
        rhs = y - (1 - spec.sigma) * tau * (A @ y) + tau * phi
        return _solve(spec, problem, M, rhs, False, n, solver)
    C = problem.C_at(t)
    D = _D(problem)
    M = _eye(problem.n) + s2 * tau * D
    rhs = y - (1 - s2) * tau * (D @ y) + tau * phi
    if problem.reaction is not None:
        r = sp.diags(problem.reaction.values(t))
        M = M + s1 * tau * r
        rhs = rhs - (1 - s1) * tau * (r @ y)
    symmetric = C is None or s1 == 0.0
    if C is not None:
        if s1 != 0.0:
            M = M + s1 * tau * C
        rhs = rhs - (1 - s1) * tau * (C @ y)
    return _solve(spec, problem, M, rhs, symmetric, n, solver)


def step_explicit_implicit(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                           solver: Solver | None = None) -> np.ndarray:
    """Convection from the old level, diffusion with weight ``sigma``: only
    ``E + sigma tau D`` is inverted."""
    if problem.D is None:
        raise PreconditionError("explicit-implicit scheme needs a diffusion operator")
    t = spec.time_point(n)
    tau = spec.tau
    D = _D(problem)
    rhs = y - tau * ((1 - spec.sigma) * (D @ y)) + tau * problem.phi_at(t)
    C = problem.C_at(t)
    if C is not None:
        rhs = rhs - tau * (C @ y)
    if problem.reaction is not None:
        rhs = rhs - tau * problem.reaction.values(t) * y
    M = _eye(problem.n) + spec.sigma * tau * D
    return _solve(spec, problem, M, rhs, True, n, solver)


def startup_crank_nicolson(spec: SchemeSpec, problem: EvolutionProblem, y0: np.ndarray,
                           solver: Solver | None = None) -> np.ndarray:
    """``(y1 - y0)/tau + (C + D)(y1 + y0)/2 = phi^0`` with operators at ``tau/2``."""
    t = 0.5 * spec.tau
    A = problem.A_at(t)
    M = _eye(problem.n) + 0.5 * spec.tau * A
    rhs = y0 - 0.5 * spec.tau * (A @ y0) + spec.tau * problem.phi_at(t)
    return _solve(spec, problem, M, rhs, False, 0, solver)


def step_three_level(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, y_prev: np.ndarray, n: int,
                     solver: Solver | None = None) -> np.ndarray:
    """``(y' - y_prev)/(2 tau) + D(s y' + (1-2s) y + s y_prev) + C y = phi`` at ``t^n``."""
    if n < 1:
        raise UsageError("the three-level scheme needs two previous levels (n >= 1)")
    if problem.D is None:
        raise PreconditionError("the three-level scheme needs a diffusion operator D")
    t = spec.time_point(n)
    tau, s = spec.tau, spec.sigma
    D = _D(problem)
    rhs = y_prev + 2 * tau * (problem.phi_at(t) - D @ ((1 - 2 * s) * y + s * y_prev))
    C = problem.C_at(t)
    if C is not None:
        rhs = rhs - 2 * tau * (C @ y)
    if problem.reaction is not None:
        rhs = rhs - 2 * tau * problem.reaction.values(t) * y
    M = _eye(problem.n) + 2 * s * tau * D
    return _solve(spec, problem, M, rhs, True, n, solver)


def three_level_energy(problem: EvolutionProblem, sigma: float, y_new: np.ndarray, y: np.ndarray) -> float:
    """``1/4 (D(y'+y), y'+y) + (sigma - 1/4)(D(y'-y), y'-y)`` in the weighted inner product."""
    D = _D(problem)
    w = problem.measure
    s, d = y_new + y, y_new - y
    return float(0.25 * np.dot(w * (D @ s), s) + (sigma - 0.25) * np.dot(w * (D @ d), d))


def _reaction(problem: EvolutionProblem, t: float) -> tuple[np.ndarray, np.ndarray]:
    if problem.reaction is None:
        z = np.zeros(problem.n)
        return z, z
    return problem.reaction.split(t)


def step_reaction_split(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                        solver: Solver | None = None) -> np.ndarray:
    """``(y' - y)/tau + (C + D + R+) y' + R- y = phi``: the destabilizing part of
    the reaction is explicit."""
    t = spec.time_point(n)
    tau = spec.tau
    rp, rm = _reaction(problem, t)
    K = problem.A_at(t, reaction=False) + sp.diags(rp)
    M = _eye(problem.n) + tau * K
    rhs = y - tau * rm * y + tau * problem.phi_at(t)
    return _solve(spec, problem, M, rhs, problem.is_symmetric, n, solver)


def startup_reaction_symmetric(spec: SchemeSpec, problem: EvolutionProblem, y0: np.ndarray,
                               solver: Solver | None = None) -> np.ndarray:
    """``(y1 - y0)/tau + ((C+D+R)(t^1) y1 + (C+D+R)(t^0) y0)/2 = phi``."""
    tau = spec.tau
    A0 = problem.A_at(0.0)
    A1 = problem.A_at(tau)
    phi = 0.5 * (problem.phi_at(0.0) + problem.phi_at(tau))
    M = _eye(problem.n) + 0.5 * tau * A1
    rhs = y0 - 0.5 * tau * (A0 @ y0) + tau * phi
    return _solve(spec, problem, M, rhs, False, 0, solver)


def step_reaction_symmetric(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, y_prev: np.ndarray, n: int,
                            solver: Solver | None = None) -> np.ndarray:
    """``(y' - y_prev)/(2 tau) + K (y' + 2 y + y_prev)/4 + R- y = phi`` with ``K = C + D + R+``."""
    if n < 1:
        raise UsageError("the symmetric reaction-split scheme needs two previous levels (n >= 1)")
    t = spec.time_point(n)
    tau = spec.tau
    rp, rm = _reaction(problem, t)
    K = problem.A_at(t, reaction=False) + sp.diags(rp)
    M = _eye(problem.n) + 0.5 * tau * K
    rhs = y_prev - 0.5 * tau * (K @ (2 * y + y_prev)) - 2 * tau * rm * y + 2 * tau * problem.phi_at(t)
    return _solve(spec, problem, M, rhs, False, n, solver)


def estimate_lower_bound(A, weights: np.ndarray | None = None) -> float:
    """Smallest eigenvalue of the (weighted) symmetric part, a valid ``m`` with ``A >= m E``."""
    return min_symmetric_eigenvalue(sp.csr_matrix(A), weights)


def step_exp_transform(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                       solver: Solver | None = None) -> np.ndarray:
    """``(e^{m tau} y' - y)/tau + (A - mE)(sigma e^{m tau} y' + (1-sigma) y) = 0``.

    Solved for ``z = e^{m tau} y'`` from ``(E + sigma tau (A - mE)) z = chi``;
    a source, if present, enters as ``tau e^{m tau/2} phi``.
    """
    t = spec.time_point(n)
    tau, s, m = spec.tau, spec.sigma, float(spec.m)
    At = problem.A_at(t) - m * _eye(problem.n)
    M = _eye(problem.n) + s * tau * At
    chi = y - (1 - s) * tau * (At @ y)
    if problem.phi is not None:
        chi = chi + tau * math.exp(0.5 * m * tau) * problem.phi_at(t)
    z = _solve(spec, problem, M, chi, False, n, solver)
    return math.exp(-m * tau) * z


def _line_solve(M: sp.csr_matrix, shape: tuple[int, ...], axis: int, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M x = rhs`` when ``M`` couples unknowns only along grid lines of ``axis``."""
    stride = int(np.prod(shape[axis + 1:], dtype=np.int64))
    n = M.shape[0]
    diag = M.diagonal()
    sup = np.zeros(n)
    sub = np.zeros(n)
    if n > stride:
        sup[: n - stride] = M.diagonal(stride)
        sub[stride:] = M.diagonal(-stride)
    rest = M - sp.diags([sub[stride:], diag, sup[: n - stride]], [-stride, 0, stride], shape=M.shape)
    if abs(rest).sum() > 0:
        raise PreconditionError("operator couples unknowns across grid lines; no line solve possible")
    order = [axis] + [a for a in range(len(shape)) if a != axis]
    perm = lambda v: np.transpose(v.reshape(shape), order)  # noqa: E731
    system = TridiagonalSystem(perm(sub), perm(diag), perm(sup), perm(rhs))
    x = solve_tridiagonal(system)
    return np.transpose(x, np.argsort(order)).ravel()


def _substep(spec: SchemeSpec, problem: EvolutionProblem, A, y: np.ndarray, tau: float, axis: int | None,
             phi: np.ndarray | None, n: int, solver: Solver | None) -> np.ndarray:
    s = spec.sigma
    M = _eye(problem.n) + s * tau * A
    rhs = y - (1 - s) * tau * (A @ y)
    if phi is not None:
        rhs = rhs + tau * phi
    if problem.shape is not None and axis is not None and len(problem.shape) > axis:
        try:
            return _line_solve(sp.csr_matrix(M), problem.shape, axis, rhs)
        except PreconditionError:
            pass  # not a line operator; fall through to the general solver
        except CdlabError as exc:
            raise StepError(n, exc) from exc
    return _solve(spec, problem, M, rhs, False, n, solver)


def step_lod(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
             solver: Solver | None = None) -> np.ndarray:
    """Locally one-dimensional step: ``S_1(tau)`` then ``S_2(tau)``, source in the last substep."""
    if not problem.parts:
        raise PreconditionError("splitting schemes need the directional operators in 'parts'")
    t = spec.time_point(n)
    parts = problem.parts_at(t)
    phi = problem.phi_at(t)
    for a, A in enumerate(parts):
        last = a == len(parts) - 1
        y = _substep(spec, problem, A, y, spec.tau, a, phi if last else None, n, solver)
    return y


def additive_substeps(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                      order: tuple[int, ...] | None = None, solver: Solver | None = None) -> list[np.ndarray]:
    """Independent substeps ``S_a(2 tau) y``, each from the same ``y``; returned in
    direction order whatever ``order`` they are computed in."""
    if not problem.parts:
        raise PreconditionError("splitting schemes need the directional operators in 'parts'")
    t = spec.time_point(n)
    parts = problem.parts_at(t)
    idx = tuple(range(len(parts))) if order is None else tuple(order)
    out: dict[int, np.ndarray] = {}
    for a in idx:
        out[a] = _substep(spec, problem, parts[a], y.copy(), 2 * spec.tau, a, None, n, solver)
    return [out[a] for a in range(len(parts))]


def step_additive_avg(spec: SchemeSpec, problem: EvolutionProblem, y: np.ndarray, n: int = 0,
                      order: tuple[int, ...] | None = None, solver: Solver | None = None) -> np.ndarray:
    """Additively averaged step ``y' = mean_a S_a(2 tau) y + tau phi``."""
    ys = additive_substeps(spec, problem, y, n, order, solver)
    return sum(ys) / len(ys) + spec.tau * problem.phi_at(spec.time_point(n))


@dataclass
class TimeSeries:
    """Per-level records ``t^n``, norms of ``y^n`` and of the source of each step."""

    t: list[float] = field(default_factory=list)
    norms: dict[str, list[float]] = field(default_factory=dict)
    phi_norms: dict[str, list[float]] = field(default_factory=dict)
    monitors: dict[str, list[float]] = field(default_factory=dict)
    solutions: list[np.ndarray] | None = None
    failure: StepError | None = None

    @property
    def final(self) -> np.ndarray | None:
        return None if not self.solutions else self.solutions[-1]

    def series(self, name: str) -> np.ndarray:
        return np.asarray(self.norms[name])

    def gronwall_bound(self, rho: float, tau: float, norm: str = "l2") -> np.ndarray:
        """``rho^n ||y^0|| + sum_k tau rho^(n-1-k) ||phi^k||`` for every level."""
        y = self.norms[norm]
        f = self.phi_norms.get(norm, [0.0] * (len(y) - 1))
        out = [y[0]]
        for k in range(len(y) - 1):
            out.append(rho * out[-1] + tau * f[k])
        return np.asarray(out)


def grid_norms(y: np.ndarray, w: np.ndarray, D=None) -> dict[str, float]:
    out = {
        "l2": float(np.sqrt(np.dot(w * y, y))),
        "linf": float(np.max(np.abs(y), initial=0.0)),
        "l1": float(np.sum(w * np.abs(y))),
    }
    if D is not None:
        out["energy_d"] = float(np.sqrt(max(np.dot(w * (D @ y), y), 0.0)))
    return out


def _record(ts: TimeSeries, store: dict, values: dict) -> None:
    for k, v in values.items():
        store.setdefault(k, []).append(v)


def integrate(spec: SchemeSpec, problem: EvolutionProblem, monitors: tuple[str, ...] = (),
              keep_solutions: bool = True, solver: Solver | None = None,
              on_step: Callable[[int, np.ndarray], None] | None = None) -> TimeSeries:
    """Run ``spec.n_steps`` steps from ``problem.u0``.

    Monitors: ``"energy"`` (three-level energy), ``"min"`` (smallest value),
    ``"dinv_phi"`` (``(D^-1 phi, phi)`` of each step's source).  A failing step
    raises :class:`StepError`; the partial series is attached to it as
    ``exc.series``.
    """
    w = problem.measure
    D = None if problem.D is None else sp.csr_matrix(problem.D)
    y = np.asarray(problem.u0, dtype=float).copy()
    ts = TimeSeries(solutions=[y.copy()] if keep_solutions else None)
    ts.t.append(0.0)
    _record(ts, ts.norms, grid_norms(y, w, D))
    if "min" in monitors:
        ts.monitors.setdefault("min", []).append(float(y.min(initial=0.0)))
    fam = spec.family
    y_prev = None
    for n in range(spec.n_steps):
        tp = spec.time_point(n)
        phi = problem.phi_at(tp)
        try:
            if fam in (Family.TWO_LEVEL, Family.SPLIT_WEIGHTS):
                y_new = step_two_level(spec, problem, y, n, solver)
            elif fam is Family.EXPLICIT_IMPLICIT:
                y_new = step_explicit_implicit(spec, problem, y, n, solver)
            elif fam is Family.THREE_LEVEL:
                if n == 0:
                    y_new = startup_crank_nicolson(spec, problem, y, solver)
                    phi = problem.phi_at(0.5 * spec.tau)
                else:
                    y_new = step_three_level(spec, problem, y, y_prev, n, solver)
            elif fam is Family.REACTION_SPLIT:
                y_new = step_reaction_split(spec, problem, y, n, solver)
            elif fam is Family.SYMMETRIC_REACTION_SPLIT:
                y_new = (startup_reaction_symmetric(spec, problem, y, solver) if n == 0
                         else step_reaction_symmetric(spec, problem, y, y_prev, n, solver))
            elif fam is Family.EXP_TRANSFORM:
                y_new = step_exp_transform(spec, problem, y, n, solver)
            elif fam is Family.LOD:
                y_new = step_lod(spec, problem, y, n, solver)
            else:
                y_new = step_additive_avg(spec, problem, y, n, solver=solver)
        except StepError as exc:
            err = exc if exc.step == n else StepError(n, exc.cause)
            ts.failure = err
            err.series = ts  # type: ignore[attr-defined]
            raise err from exc
        if not np.all(np.isfinite(y_new)):
            err = StepError(n, CdlabError("solution is no longer finite"))
            ts.failure = err
            err.series = ts  # type: ignore[attr-defined]
            raise err
        _record(ts, ts.phi_norms, {k: v for k, v in grid_norms(phi, w).items()})
        if "dinv_phi" in monitors and D is not None:
            z = solve_sparse(D, phi, symmetric=True, weights=problem.weights) if np.any(phi) else np.zeros_like(phi)
            ts.monitors.setdefault("dinv_phi", []).append(float(np.dot(w * z, phi)))
        if "energy" in monitors and D is not None:
            ts.monitors.setdefault("energy", []).append(three_level_energy(problem, spec.sigma, y_new, y))
        if "min" in monitors:
            ts.monitors.setdefault("min", []).append(float(y_new.min(initial=0.0)))
        y_prev, y = y, y_new
        ts.t.append((n + 1) * spec.tau)
        _record(ts, ts.norms, grid_norms(y, w, D))
        if ts.solutions is not None:
            ts.solutions.append(y.copy())
        if on_step is not None:
            on_step(n, y)
    if ts.solutions is None:
        ts.solutions = [y]
    return ts
