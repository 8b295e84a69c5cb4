"""Linear-algebra substrate: Thomas solver, Krylov solvers, eigenvalue bounds.

Sparse storage is scipy's CSR format.  The two Krylov methods are written out
here so that convergence is judged on the true residual and every result is
re-validated with an explicit residual computation before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, NonConvergenceError, PreconditionError, SingularityError

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SolverOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iters: int | None = None  # defaults to 10 * n

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise PreconditionError("solver tolerances must be positive")

    def iteration_cap(self, n: int) -> int:
        return self.max_iters if self.max_iters is not None else max(10 * n, 20)


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class TridiagonalSystem:
    """``sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]``.

    ``sub[0]`` and ``sup[-1]`` are ignored.  Extra trailing axes on the arrays
    describe a batch of independent systems (for line solves).
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __post_init__(self) -> None:
        shapes = {np.shape(a) for a in (self.sub, self.diag, self.sup, self.rhs)}
        if len(shapes) != 1:
            raise DimensionError(f"inconsistent tridiagonal shapes {shapes}")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.sub[1:] * x[:-1]
        y[:-1] += self.sup[:-1] * x[1:]
        return y


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Thomas algorithm, vectorized over any trailing batch axes."""
    a = np.asarray(system.sub, dtype=float)
    b = np.asarray(system.diag, dtype=float)
    c = np.asarray(system.sup, dtype=float)
    d = np.asarray(system.rhs, dtype=float)
    n = b.shape[0]
    cp = np.empty_like(b)
    dp = np.empty_like(b)
    denom = b[0]
    if np.any(denom == 0):
        raise SingularityError("zero pivot at row 0")
    cp[0] = c[0] / denom
    dp[0] = d[0] / denom
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        if np.any(denom == 0):
            raise SingularityError(f"zero pivot at row {i}")
        cp[i] = c[i] / denom
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom
    x = np.empty_like(b)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def tridiagonal_residual(system: TridiagonalSystem, x: np.ndarray) -> float:
    return float(np.max(np.abs(system.matvec(x) - system.rhs), initial=0.0))


def is_symmetric(A: Any, weights: np.ndarray | None = None, samples: int = 3, seed: int = 12345) -> bool:
    """Sample ``(Ay, w)`` against ``(y, Aw)`` in the (optionally weighted) inner product."""
    n = A.shape[0]
    wts = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        y = rng.standard_normal(n)
        w = rng.standard_normal(n)
        lhs = np.dot(A @ y * wts, w)
        rhs = np.dot(y * wts, A @ w)
        scale = np.linalg.norm(A @ y) * np.linalg.norm(w * wts) + np.linalg.norm(y * wts) * np.linalg.norm(A @ w)
        if abs(lhs - rhs) > 1e-11 * max(scale, 1e-300):
            return False
    return True


def _cg(A: Any, b: np.ndarray, x0: np.ndarray, opts: SolverOptions) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients."""
    n = b.size
    dinv = 1.0 / _safe_diag(A)
    target = max(opts.rel_tol * np.linalg.norm(b), opts.abs_tol)
    x = x0.copy()
    r = b - A @ x
    if np.linalg.norm(r) <= target:
        return x, 0
    z = dinv * r
    p = z.copy()
    rz = np.dot(r, z)
    for it in range(1, opts.iteration_cap(n) + 1):
        Ap = A @ p
        pAp = np.dot(p, Ap)
        if pAp <= 0:
            raise NonConvergenceError("conjugate gradients met a non-positive curvature", np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300), it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                return x, it
        z = dinv * r
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError("conjugate gradients hit the iteration cap", np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300), opts.iteration_cap(n))


def _bicgstab(A: Any, b: np.ndarray, x0: np.ndarray, opts: SolverOptions) -> tuple[np.ndarray, int]:
    """BiCGStab with right Jacobi scaling."""
    n = b.size
    dinv = 1.0 / _safe_diag(A)
    bnorm = np.linalg.norm(b)
    target = max(opts.rel_tol * bnorm, opts.abs_tol)
    x = x0.copy()
    r = b - A @ x
    if np.linalg.norm(r) <= target:
        return x, 0
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    cap = opts.iteration_cap(n)
    for it in range(1, cap + 1):
        rho_new = np.dot(r_hat, r)
        if rho_new == 0.0:
            # breakdown: restart from the current iterate with a fresh shadow residual
            r = b - A @ x
            r_hat = r.copy()
            rho_new = np.dot(r_hat, r)
            p = np.zeros(n)
            v = np.zeros(n)
            rho = alpha = omega = 1.0
            if rho_new == 0.0:
                break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        ph = dinv * p
        v = A @ ph
        denom = np.dot(r_hat, v)
        if denom == 0.0:
            break
        alpha = rho_new / denom
        s = r - alpha * v
        x += alpha * ph
        if np.linalg.norm(s) <= target:
            if np.linalg.norm(b - A @ x) <= target:
                return x, it
        sh = dinv * s
        t = A @ sh
        tt = np.dot(t, t)
        omega = np.dot(t, s) / tt if tt > 0 else 0.0
        x += omega * sh
        r = s - omega * t
        rho = rho_new
        if np.linalg.norm(r) <= target:
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                return x, it
        if omega == 0.0:
            break
    raise NonConvergenceError("BiCGStab did not converge", np.linalg.norm(b - A @ x) / max(bnorm, 1e-300), cap)


def _safe_diag(A: Any) -> np.ndarray:
    d = np.asarray(A.diagonal(), dtype=float)
    return np.where(d != 0, d, 1.0)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    relative_residual: float
    method: str


def solve_sparse(A: Any, b: np.ndarray, symmetric: bool | None = None, opts: SolverOptions = DEFAULT_OPTIONS,
                 weights: np.ndarray | None = None, x0: np.ndarray | None = None, method: str = "krylov",
                 return_info: bool = False) -> Any:
    """Solve ``A x = b``.

    ``symmetric`` selects conjugate gradients; the flag is checked by random
    sampling.  With ``weights`` the matrix is taken as self-adjoint in the
    weighted inner product and the system is symmetrized as ``(W A) x = W b``.
    ``method="direct"`` uses a sparse LU factorization instead of Krylov
    iterations (used by large convergence studies).
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    if A.shape != (n, n):
        raise DimensionError(f"matrix shape {A.shape} does not match rhs size {n}")
    if symmetric is None:
        symmetric = is_symmetric(A, weights)
    elif symmetric and not is_symmetric(A, weights):
        raise PreconditionError("matrix flagged symmetric but (Ay, w) != (y, Aw)")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(n)
        info = SolveInfo(0, 0.0, "trivial")
        return (x, info) if return_info else x
    if weights is not None:
        W = sp.diags(np.asarray(weights, dtype=float))
        As, bs = sp.csr_matrix(W @ A), weights * b
    else:
        As, bs = A, b
    start = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if method == "direct":
        x = spla.splu(sp.csc_matrix(As)).solve(bs)
        it, name = 1, "lu"
    elif symmetric:
        x, it = _cg(As, bs, start, opts)
        name = "cg"
    else:
        x, it = _bicgstab(As, bs, start, opts)
        name = "bicgstab"
    # judge convergence on the system that was iterated on (weighted or not)
    bs_norm = np.linalg.norm(bs)
    res_s = np.linalg.norm(bs - As @ x)
    if not np.isfinite(res_s) or res_s > 10 * max(opts.rel_tol * bs_norm, opts.abs_tol):
        raise NonConvergenceError(f"{name} result failed the residual check", res_s / bs_norm, it)
    info = SolveInfo(it, float(np.linalg.norm(b - A @ x) / bnorm), name)
    return (x, info) if return_info else x


def dense_solve(A: Any, b: np.ndarray) -> np.ndarray:
    """Dense LU reference solve, used as a test oracle."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        return sla.solve(M, b)
    except sla.LinAlgError as exc:
        raise SingularityError(str(exc)) from exc


def symmetric_part(M: Any, weights: np.ndarray | None = None) -> Any:
    """``(WM + (WM)^T)/2``; with ``weights`` this is the weighted symmetric part."""
    if weights is not None:
        M = sp.diags(weights) @ M if sp.issparse(M) else np.asarray(weights)[:, None] * np.asarray(M)
    return 0.5 * (M + M.T)


def min_symmetric_eigenvalue(M: Any, weights: np.ndarray | None = None, return_vector: bool = False) -> Any:
    """Smallest eigenvalue of the symmetric part of ``M``.

    With ``weights`` this is the minimum over ``y`` of ``(My, y)_W / (y, y)_W``,
    i.e. the generalized problem ``sym(WM) v = lam W v``.
    """
    S = symmetric_part(M, weights)
    n = S.shape[0]
    if n == 0:
        return (np.inf, np.zeros(0)) if return_vector else np.inf
    if n <= DENSE_LIMIT:
        Sd = S.toarray() if sp.issparse(S) else np.asarray(S)
        if weights is None:
            lam, vec = sla.eigh(Sd, subset_by_index=[0, 0])
        else:
            lam, vec = sla.eigh(Sd, np.diag(weights), subset_by_index=[0, 0])
        val, v = float(lam[0]), vec[:, 0]
    else:
        Wm = None if weights is None else sp.diags(weights)
        lam, vec = spla.eigsh(sp.csr_matrix(S), k=1, M=Wm, which="SA", tol=1e-12, v0=np.ones(n))
        val, v = float(lam[0]), vec[:, 0]
    return (val, v) if return_vector else val


def max_generalized_eigenvalue(K: Any, D: Any) -> tuple[float, np.ndarray]:
    """Largest ``lam`` with ``K v = lam D v`` for symmetric ``K`` and SPD ``D`` (dense)."""
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    Dd = D.toarray() if sp.issparse(D) else np.asarray(D, dtype=float)
    Kd = 0.5 * (Kd + Kd.T)
    Dd = 0.5 * (Dd + Dd.T)
    n = Kd.shape[0]
    lam, vec = sla.eigh(Kd, Dd, subset_by_index=[n - 1, n - 1])
    return float(lam[0]), vec[:, 0]


def power_spectral_radius(M: Any) -> float:
    """Largest eigenvalue modulus of a (small) matrix, via dense eigenvalues."""
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    return float(np.max(np.abs(np.linalg.eigvals(Md))))
