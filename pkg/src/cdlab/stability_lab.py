"""Matrix-level stability certificates.

Operator inequalities ``M >= 0`` are decided on the symmetric part of ``M``
(``(My, y)`` only sees it), in the weighted inner product when weights are
given.  Maximum-norm results use logarithmic norms, diagonal dominance and
M-matrix structure.  Everything here works on dense copies and is meant for
grids of up to a few thousand unknowns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DimensionError, PreconditionError

INEQUALITY_RTOL = 1e-10


def _dense(M: Any) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))


def _square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def _weights(n: int, weights) -> np.ndarray:
    return np.ones(n) if weights is None else np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class OperatorInequalityReport:
    """Outcome of testing ``M >= 0``; ``witness`` is the minimizing eigenvector on failure."""

    name: str
    passed: bool
    min_eigenvalue: float
    scale: float
    witness: np.ndarray | None = None

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


def check_operator_inequality(M: Any, name: str = "M >= 0", weights=None,
                              rtol: float = INEQUALITY_RTOL) -> OperatorInequalityReport:
    """Certify ``(My, y)_W >= 0`` for all ``y`` up to ``rtol`` times the size of ``M``."""
    Md = _square(_dense(M))
    w = _weights(Md.shape[0], weights)
    S = 0.5 * (w[:, None] * Md + (w[:, None] * Md).T)
    lam, vec = sla.eigh(S, np.diag(w))
    scale = max(float(np.max(np.abs(lam))), 1.0) if lam.size else 1.0
    lo = float(lam[0]) if lam.size else math.inf
    passed = lo >= -rtol * scale
    return OperatorInequalityReport(name, passed, lo, scale, None if passed else vec[:, 0])


def _is_spd(A: np.ndarray, weights=None) -> bool:
    w = _weights(A.shape[0], weights)
    WA = w[:, None] * A
    if not np.allclose(WA, WA.T, rtol=1e-10, atol=1e-12 * max(np.max(np.abs(WA)), 1e-300)):
        return False
    lam = sla.eigh(0.5 * (WA + WA.T), np.diag(w), eigvals_only=True)
    return bool(lam[0] > 1e-12 * max(abs(lam[-1]), 1e-300))


def check_samarskii(B: Any, A: Any, tau: float, weights=None) -> OperatorInequalityReport:
    """``B >= tau/2 A`` for a self-adjoint positive ``A``: stability in the energy norm of ``A``."""
    Bd, Ad = _square(_dense(B), "B"), _square(_dense(A), "A")
    if Bd.shape != Ad.shape:
        raise DimensionError("B and A differ in size")
    if not _is_spd(Ad, weights):
        raise PreconditionError("A must be self-adjoint and positive definite")
    return check_operator_inequality(Bd - 0.5 * tau * Ad, "B >= tau/2 A", weights)


def check_b_lower_bound(B: Any, A: Any, tau: float, factor: float, weights=None) -> OperatorInequalityReport:
    """``B >= factor * tau * A``.

    ``factor = 1/2`` is the classical condition, ``1/(1+rho)`` the one-sided
    rho-stability condition and ``(1+eps)/2`` the strengthened one.
    """
    return check_operator_inequality(_dense(B) - factor * tau * _dense(A), f"B >= {factor:g} tau A", weights)


def check_b_with_gap(B: Any, A: Any, tau: float, G: Any, weights=None) -> OperatorInequalityReport:
    """``B >= G + tau/2 A``."""
    return check_operator_inequality(_dense(B) - _dense(G) - 0.5 * tau * _dense(A), "B >= G + tau/2 A", weights)


def check_two_sided_rho(B: Any, A: Any, tau: float, rho: float, weights=None) -> tuple[OperatorInequalityReport,
                                                                                        OperatorInequalityReport]:
    """``(1-rho)/tau B <= A <= (1+rho)/tau B`` for self-adjoint ``A`` and ``B``."""
    Bd, Ad = _dense(B), _dense(A)
    lower = check_operator_inequality(Ad - (1 - rho) / tau * Bd, "A >= (1-rho)/tau B", weights)
    upper = check_operator_inequality((1 + rho) / tau * Bd - Ad, "A <= (1+rho)/tau B", weights)
    return lower, upper


def check_weight_condition(A: Any, sigma: float, tau: float, weights=None) -> OperatorInequalityReport:
    """``A + (sigma - 1/2) tau A* A >= 0`` for a non-self-adjoint ``A >= 0`` (weighted adjoint)."""
    Ad = _dense(A)
    w = _weights(Ad.shape[0], weights)
    Astar = (Ad.T * w[None, :]) / w[:, None]  # W^-1 A^T W
    return check_operator_inequality(Ad + (sigma - 0.5) * tau * Astar @ Ad, "A + (sigma-1/2) tau A*A >= 0", weights)


@dataclass(frozen=True)
class RhoStabilityReport:
    passed: bool
    rho: float
    growth: float  # smallest admissible rho, sqrt of the largest generalized eigenvalue
    witness: np.ndarray | None = None


def transition_matrix(B: Any, A: Any, tau: float) -> np.ndarray:
    """``S = E - tau B^-1 A`` of the two-level scheme ``B (y' - y)/tau + A y = 0``."""
    Bd, Ad = _dense(B), _dense(A)
    return np.eye(Bd.shape[0]) - tau * sla.solve(Bd, Ad)


def check_rho_stability(S: Any = None, *, B: Any = None, A: Any = None, tau: float | None = None, D: Any = None,
                        rho: float = 1.0, weights=None) -> RhoStabilityReport:
    """``(D S y, S y) <= rho^2 (D y, y)`` for all ``y``, where ``D`` defines the norm.

    ``S`` may be given directly or through ``(B, A, tau)``; ``D`` defaults to
    the identity.  The smallest admissible ``rho`` is reported as ``growth``.
    """
    if S is None:
        if B is None or A is None or tau is None:
            raise PreconditionError("give either S or all of B, A and tau")
        S = transition_matrix(B, A, tau)
    Sd = _square(_dense(S), "S")
    n = Sd.shape[0]
    w = _weights(n, weights)
    Dd = np.eye(n) if D is None else _dense(D)
    WD = w[:, None] * Dd
    WD = 0.5 * (WD + WD.T)
    try:
        sla.cholesky(WD)
    except sla.LinAlgError as exc:
        raise PreconditionError("norm operator D must be self-adjoint positive definite") from exc
    K = Sd.T @ WD @ Sd
    lam, vec = sla.eigh(0.5 * (K + K.T), WD, subset_by_index=[n - 1, n - 1])
    growth = math.sqrt(max(float(lam[0]), 0.0))
    passed = growth <= rho * (1 + 1e-10)
    return RhoStabilityReport(passed, rho, growth, None if passed else vec[:, 0])


def rho_step_limits(M1: float, friedrichs: float, kappa1: float, sigma: float) -> tuple[float, float]:
    """Solvability limit ``tau1`` and rho-stability limit ``tau2`` for ``A = C1 + D`` when
    ``M1 * F > kappa1`` (``F`` the Friedrichs constant, ``rho = 1 + M1 tau``)."""
    gap = M1 * friedrichs - kappa1
    if gap <= 0:
        return math.inf, math.inf
    if sigma == 0:
        return math.inf, math.inf
    return friedrichs / (sigma * gap), kappa1 / (sigma * M1 * gap)


@dataclass(frozen=True)
class LogNormReport:
    mu_inf: float
    mu_1: float
    mu_inf_neg: float
    mu_1_neg: float

    def lower_bound(self, space: str = "inf") -> float:
        """``||A y|| >= bound * ||y||`` in the given maximum or L1 norm."""
        if space == "inf":
            return max(-self.mu_inf_neg, -self.mu_inf)
        return max(-self.mu_1_neg, -self.mu_1)


def log_norm(A: Any, space: str = "inf") -> float:
    """Logarithmic norm in the maximum (``"inf"``) or L1 (``"1"``) norm."""
    Ad = _square(_dense(A))
    if space not in ("inf", "1"):
        raise ValueError(f"unknown space {space!r}")
    M = Ad if space == "inf" else Ad.T
    off = np.abs(M).sum(1) - np.abs(np.diag(M))
    return float(np.max(np.diag(M) + off))


def log_norms(A: Any) -> LogNormReport:
    Ad = _dense(A)
    return LogNormReport(log_norm(Ad, "inf"), log_norm(Ad, "1"), log_norm(-Ad, "inf"), log_norm(-Ad, "1"))


@dataclass(frozen=True)
class DominanceReport:
    passed: bool
    orientation: str
    witness: int | None  # first row (or column) failing dominance
    margin: float  # min over i of a_ii - sum_j |a_ij|
    offdiag_nonpositive: bool
    offdiag_witness: tuple[int, int] | None = None


def _offdiag_witness(Ad: np.ndarray) -> tuple[int, int] | None:
    off = Ad - np.diag(np.diag(Ad))
    tol = 1e-14 * max(float(np.max(np.abs(Ad))), 1e-300)
    bad = np.argwhere(off > tol)
    return None if bad.size == 0 else (int(bad[0, 0]), int(bad[0, 1]))


def check_diag_dominance(A: Any, orientation: str = "rows") -> DominanceReport:
    """Weak diagonal dominance by rows or columns, plus the sign of the off-diagonals."""
    Ad = _square(_dense(A))
    if orientation not in ("rows", "columns"):
        raise ValueError(f"unknown orientation {orientation!r}")
    M = Ad if orientation == "rows" else Ad.T
    diag = np.diag(M)
    off = np.abs(M).sum(1) - np.abs(diag)
    margin = diag - off
    tol = 1e-12 * np.maximum(np.abs(diag) + off, 1e-300)
    bad = np.flatnonzero(margin < -tol)
    ow = _offdiag_witness(Ad)
    return DominanceReport(bad.size == 0, orientation, int(bad[0]) if bad.size else None,
                           float(margin.min(initial=math.inf)), ow is None, ow)


@dataclass(frozen=True)
class MMatrixReport:
    passed: bool
    reason: str
    witness: tuple[int, int] | None = None

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


def check_m_matrix(A: Any) -> MMatrixReport:
    """Positive diagonal, nonpositive off-diagonals and weak diagonal dominance
    (by rows or by columns) with at least one strictly dominant line.

    Irreducibility is not checked: the test is the practical sufficient
    condition for a nonnegative inverse on grid operators, whose stencils are
    connected.
    """
    Ad = _square(_dense(A))
    diag = np.diag(Ad)
    if np.any(diag <= 0):
        i = int(np.flatnonzero(diag <= 0)[0])
        return MMatrixReport(False, "nonpositive diagonal entry", (i, i))
    ow = _offdiag_witness(Ad)
    if ow is not None:
        return MMatrixReport(False, "positive off-diagonal entry", ow)
    for orient in ("rows", "columns"):
        rep = check_diag_dominance(Ad, orient)
        if rep.passed:
            M = Ad if orient == "rows" else Ad.T
            strict = np.diag(M) - (np.abs(M).sum(1) - np.abs(np.diag(M)))
            if np.any(strict > 1e-12 * np.abs(np.diag(M))):
                return MMatrixReport(True, f"diagonally dominant by {orient}")
    rep = check_diag_dominance(Ad, "rows")
    return MMatrixReport(False, "not diagonally dominant", (rep.witness, rep.witness) if rep.witness is not None
                         else None)


def banach_step_bound(A: Any = None, sigma: float = 1.0, gamma: float | None = None) -> float:
    """Largest ``tau`` for which the weighted scheme is stable in the maximum and L1 norms.

    ``1/((1-sigma) max a_ii)`` for a diagonally dominant ``A``, or
    ``1/((1-sigma) gamma)`` when a scheme-specific constant ``gamma`` is given.
    """
    if not 0.0 <= sigma <= 1.0:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma}")
    if sigma == 1.0:
        return math.inf
    if gamma is None:
        if A is None:
            raise PreconditionError("need the matrix or gamma")
        gamma = float(np.max(_dense(A).diagonal())) if not sp.issparse(A) else float(A.diagonal().max())
    if gamma <= 0:
        return math.inf
    return 1.0 / ((1.0 - sigma) * gamma)


def weighted_step_matrix(A: Any, sigma: float, tau: float) -> np.ndarray:
    """``(E + sigma tau A)^-1 (E - (1-sigma) tau A)``."""
    Ad = _dense(A)
    E = np.eye(Ad.shape[0])
    return sla.solve(E + sigma * tau * Ad, E - (1 - sigma) * tau * Ad)


def alternating_vector(shape: tuple[int, ...]) -> np.ndarray:
    """``(-1)^(i1+i2+...)``: the grid function most amplified by explicit diffusion."""
    idx = np.indices(shape).sum(0)
    return np.where(idx % 2 == 0, 1.0, -1.0).ravel()


def grows(step: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, steps: int = 200, norm: float = np.inf,
          factor: float = 1.0 + 1e-8) -> bool:
    """True when the norm of the trajectory exceeds ``factor`` times its initial value."""
    y = np.asarray(y0, dtype=float)
    n0 = np.linalg.norm(y, norm)
    for _ in range(steps):
        y = step(y)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y, norm) > factor * n0:
            return True
    return False


def find_stability_boundary(is_stable: Callable[[float], bool], lo: float, hi: float,
                            refinements: int = 8) -> tuple[float, float]:
    """Geometric bisection of a stable ``lo`` and an unstable ``hi``; returns the final bracket."""
    if not is_stable(lo):
        raise PreconditionError(f"lower end tau = {lo} is not stable")
    if is_stable(hi):
        raise PreconditionError(f"upper end tau = {hi} is not unstable")
    for _ in range(refinements):
        mid = math.sqrt(lo * hi)
        if is_stable(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi
