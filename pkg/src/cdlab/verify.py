"""Manufactured solutions, order estimation and a priori estimate monitors.

A :class:`ManufacturedCase` carries an exact solution together with the
closed-form derivatives needed to build the forcing for any convection form.
Spatial orders are measured on steady problems (the time derivative is
dropped from the forcing); temporal orders on semi-discrete problems whose
source makes the sampled exact solution an exact solution of the ODE system,
so that only the time discretization error remains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .core_grid import Grid1D, RectGrid2D
from .errors import PreconditionError
from .exponential_schemes import exp_operator_2d
from .fd_operators import (Grid, assemble_convection, assemble_diffusion, assemble_upwind_convection,
                           directional_operators, interior_coords, interior_shape)
from .fields import CoefficientField, CoefficientPlacement, ConvectionForm
from .linalg import solve_sparse
from .time_schemes import EvolutionProblem, TimeSeries

Fn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution ``u(x..., t)`` with its derivatives and the coefficients.

    ``grad`` and ``second`` return per-direction first and pure second
    derivatives; ``grad_k`` the gradient of ``k``; ``div_v`` the divergence of
    the velocity.  Velocity and ``k`` come from ``field``.
    """

    name: str
    field: CoefficientField
    u: Fn
    u_t: Fn
    grad: Callable[..., tuple]
    second: Callable[..., tuple]
    grad_k: Callable[..., tuple]
    div_v: Fn
    dim: int = 2

    def exact(self, *x, t: float = 0.0) -> np.ndarray:
        return self.u(*x, t)


def _bcast(val, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(val, dtype=float), shape)


def derive_forcing(case: ManufacturedCase, form: ConvectionForm, steady: bool = False) -> Fn:
    """``f = u_t + C[u] - div(k grad u)`` for the chosen convection form.

    With ``steady=True`` the time derivative is left out, so ``u(., t)`` solves
    the steady problem with source ``f(., t)``.
    """
    def f(*args):
        *x, t = args
        shape = np.broadcast(*x).shape
        g = case.grad(*x, t)
        s = case.second(*x, t)
        gk = case.grad_k(*x)
        k = _bcast(case.field.k(*x), shape)
        v = case.field.sample_v(*x, t=t)
        u = _bcast(case.u(*x, t), shape)
        diffusion = sum(k * s[a] + gk[a] * g[a] for a in range(case.dim))
        conv = sum(v[a] * g[a] for a in range(case.dim))
        if form is ConvectionForm.DIVERGENT:
            conv = conv + _bcast(case.div_v(*x, t), shape) * u
        elif form is ConvectionForm.SKEW:
            conv = conv + 0.5 * _bcast(case.div_v(*x, t), shape) * u
        out = conv - diffusion
        if not steady:
            out = out + _bcast(case.u_t(*x, t), shape)
        return out
    return f


def heat_sine_1d(k: float = 1.0) -> ManufacturedCase:
    """``u = exp(-t) sin(pi x)`` on ``[0, 1]`` with constant ``k`` and no convection."""
    pi = math.pi
    fld = CoefficientField(lambda x: np.full(np.shape(x), k), lambda x, t: np.zeros(np.shape(x)), k, k, dim=1)
    return ManufacturedCase(
        "heat-sine-1d", fld,
        u=lambda x, t: math.exp(-t) * np.sin(pi * x),
        u_t=lambda x, t: -math.exp(-t) * np.sin(pi * x),
        grad=lambda x, t: (math.exp(-t) * pi * np.cos(pi * x),),
        second=lambda x, t: (-math.exp(-t) * pi**2 * np.sin(pi * x),),
        grad_k=lambda x: (np.zeros(np.shape(x)),),
        div_v=lambda x, t: np.zeros(np.shape(x)),
        dim=1,
    )


def boundary_layer_1d(eps: float = 0.01) -> ManufacturedCase:
    """``k = eps``, ``v = 1``: ``u = exp(-t) g(x)`` with the outflow layer
    ``g = x - (exp((x-1)/eps) - exp(-1/eps)) / (1 - exp(-1/eps))``, which
    solves ``-eps g'' + g' = 1`` with zero end values."""
    q = -math.expm1(-1.0 / eps)  # 1 - exp(-1/eps)
    e0 = math.exp(-1.0 / eps)

    def g(x):
        return x - (np.exp((x - 1) / eps) - e0) / q

    fld = CoefficientField(lambda x: np.full(np.shape(x), eps), lambda x, t: np.ones(np.shape(x)), eps, eps, dim=1)
    return ManufacturedCase(
        f"boundary-layer(eps={eps:g})", fld,
        u=lambda x, t: math.exp(-t) * g(np.asarray(x, dtype=float)),
        u_t=lambda x, t: -math.exp(-t) * g(np.asarray(x, dtype=float)),
        grad=lambda x, t: (math.exp(-t) * (1 - np.exp((np.asarray(x) - 1) / eps) / (eps * q)),),
        second=lambda x, t: (-math.exp(-t) * np.exp((np.asarray(x) - 1) / eps) / (eps**2 * q),),
        grad_k=lambda x: (np.zeros(np.shape(x)),),
        div_v=lambda x, t: np.zeros(np.shape(x)),
        dim=1,
    )


def smooth_1d(k: float = 0.01, v: float = 1.0) -> ManufacturedCase:
    """``u = exp(-t) sin(pi x) exp(x)`` with constant ``k`` and ``v``; the global
    Peclet number is ``v / k``."""
    pi = math.pi

    def s(x):
        return np.sin(pi * x) * np.exp(x)

    def s1(x):
        return (pi * np.cos(pi * x) + np.sin(pi * x)) * np.exp(x)

    def s2(x):
        return ((1 - pi**2) * np.sin(pi * x) + 2 * pi * np.cos(pi * x)) * np.exp(x)

    fld = CoefficientField(lambda x: np.full(np.shape(x), k), lambda x, t: np.full(np.shape(x), v), k, k, dim=1)
    return ManufacturedCase(
        f"smooth-1d(Pe={v / k:g})", fld,
        u=lambda x, t: math.exp(-t) * s(x), u_t=lambda x, t: -math.exp(-t) * s(x),
        grad=lambda x, t: (math.exp(-t) * s1(x),), second=lambda x, t: (math.exp(-t) * s2(x),),
        grad_k=lambda x: (np.zeros(np.shape(x)),), div_v=lambda x, t: np.zeros(np.shape(x)), dim=1,
    )


def _sine2(kfun, gradk, v, divv, kappa1, kappa2, name) -> ManufacturedCase:
    pi = math.pi
    fld = CoefficientField(kfun, v, kappa1, kappa2)
    return ManufacturedCase(
        name, fld,
        u=lambda x1, x2, t: math.exp(-t) * np.sin(pi * x1) * np.sin(pi * x2),
        u_t=lambda x1, x2, t: -math.exp(-t) * np.sin(pi * x1) * np.sin(pi * x2),
        grad=lambda x1, x2, t: (math.exp(-t) * pi * np.cos(pi * x1) * np.sin(pi * x2),
                                math.exp(-t) * pi * np.sin(pi * x1) * np.cos(pi * x2)),
        second=lambda x1, x2, t: (-math.exp(-t) * pi**2 * np.sin(pi * x1) * np.sin(pi * x2),) * 2,
        grad_k=gradk, div_v=divv,
    )


def rotating_sine(omega: float = 1.0, k: float = 1.0) -> ManufacturedCase:
    """Separable sine on the unit square under solid-body rotation (divergence free)."""
    def v(x1, x2, t):
        return omega * (0.5 - np.asarray(x2, dtype=float)), omega * (np.asarray(x1, dtype=float) - 0.5)

    return _sine2(lambda x1, x2: np.full(np.broadcast(x1, x2).shape, k),
                  lambda x1, x2: (np.zeros(np.broadcast(x1, x2).shape),) * 2,
                  v, lambda x1, x2, t: np.zeros(np.broadcast(x1, x2).shape), k, k,
                  f"rotating-sine(omega={omega:g})")


def compressible_sine(scale: float = 1.0, k: float = 1.0) -> ManufacturedCase:
    """Separable sine with ``v = scale (x1, x2)`` and variable
    ``k = k0 (1 + x1 x2 / 4)``, so that ``div v = 2 scale``."""
    def kf(x1, x2):
        return k * (1 + 0.25 * np.asarray(x1) * np.asarray(x2))

    def gk(x1, x2):
        sh = np.broadcast(x1, x2).shape
        return _bcast(0.25 * k * np.asarray(x2), sh), _bcast(0.25 * k * np.asarray(x1), sh)

    def v(x1, x2, t):
        return scale * np.asarray(x1, dtype=float), scale * np.asarray(x2, dtype=float)

    return _sine2(kf, gk, v, lambda x1, x2, t: np.full(np.broadcast(x1, x2).shape, 2.0 * scale), k, 1.25 * k,
                  f"compressible-sine(scale={scale:g})")


CASES: dict[str, Callable[..., ManufacturedCase]] = {
    "heat_sine_1d": heat_sine_1d,
    "boundary_layer": boundary_layer_1d,
    "smooth_1d": smooth_1d,
    "rotating_sine": rotating_sine,
    "compressible_sine": compressible_sine,
}


def make_grid(case: ManufacturedCase, N: int) -> Grid:
    return Grid1D(1.0, N) if case.dim == 1 else RectGrid2D.unit_square(N)


def spatial_operator(grid: Grid, field: CoefficientField, scheme: str, form: ConvectionForm,
                     placement: CoefficientPlacement = CoefficientPlacement.NODE, t: float = 0.0) -> sp.csr_matrix:
    """Full convection-diffusion matrix for ``scheme`` in ``{"central", "upwind", "exponential"}``."""
    if scheme == "exponential":
        parts = exp_operator_2d(grid, field, form, t)
        return sp.csr_matrix(sum(parts[1:], parts[0]))
    D = assemble_diffusion(grid, field)
    if scheme == "upwind":
        return sp.csr_matrix(D + assemble_upwind_convection(grid, field, form, t))
    if scheme == "central":
        return sp.csr_matrix(D + assemble_convection(grid, field, form, placement, t))
    raise ValueError(f"unknown scheme {scheme!r}")


def sample(grid: Grid, fn: Fn, t: float) -> np.ndarray:
    return np.broadcast_to(fn(*interior_coords(grid), t), interior_shape(grid)).ravel().astype(float)


def grid_error(grid: Grid, y: np.ndarray, exact: np.ndarray, norm: str = "l2") -> float:
    e = np.asarray(y) - np.asarray(exact)
    w = grid.measure
    if norm == "l2":
        return float(np.sqrt(np.dot(w * e, e)))
    if norm == "linf":
        return float(np.max(np.abs(e), initial=0.0))
    if norm == "l1":
        return float(np.sum(w * np.abs(e)))
    raise ValueError(f"unknown norm {norm!r}")


def steady_error(case: ManufacturedCase, N: int, scheme: str, form: ConvectionForm, norm: str = "l2",
                 placement: CoefficientPlacement = CoefficientPlacement.NODE, t: float = 0.0) -> float:
    """Error of the steady discrete problem ``A y = f`` against ``u(., t)``."""
    grid = make_grid(case, N)
    A = spatial_operator(grid, case.field, scheme, form, placement, t)
    f = sample(grid, derive_forcing(case, form, steady=True), t)
    y = solve_sparse(A, f, symmetric=False, method="direct")
    return grid_error(grid, y, sample(grid, case.u, t), norm)


def semi_discrete_problem(case: ManufacturedCase, N: int, scheme: str, form: ConvectionForm,
                          split: bool = False, placement: CoefficientPlacement = CoefficientPlacement.NODE,
                          dt: float = 1e-6) -> tuple[EvolutionProblem, Grid]:
    """ODE system whose exact solution is ``u`` sampled at the nodes.

    The source is ``dy*/dt + A y*`` with ``dy*/dt`` from the case's ``u_t``.
    With ``split=True`` the problem carries directional parts (for
    splitting schemes) instead of a diffusion/convection pair.
    """
    grid = make_grid(case, N)
    fld = case.field
    if scheme == "exponential" or split:
        parts = (exp_operator_2d(grid, fld, form) if scheme == "exponential"
                 else tuple(directional_operators(grid, fld, form, placement, upwind=scheme == "upwind")))
        A = sp.csr_matrix(sum(parts[1:], parts[0]))

        def phi(t):
            return sample(grid, case.u_t, t) + A @ sample(grid, case.u, t)

        prob = EvolutionProblem(sample(grid, case.u, 0.0), parts=tuple(parts), phi=phi, weights=grid.measure,
                                shape=interior_shape(grid))
        return prob, grid
    D = assemble_diffusion(grid, fld)
    C = (assemble_upwind_convection(grid, fld, form) if scheme == "upwind"
         else assemble_convection(grid, fld, form, placement))
    A = sp.csr_matrix(D + C)

    def phi(t):
        return sample(grid, case.u_t, t) + A @ sample(grid, case.u, t)

    prob = EvolutionProblem(sample(grid, case.u, 0.0), D=D, C=C, phi=phi, weights=grid.measure,
                            shape=interior_shape(grid))
    return prob, grid


@dataclass(frozen=True)
class OrderEstimate:
    """Errors on a refinement ladder and the observed orders between levels."""

    params: tuple[float, ...]
    errors: tuple[float, ...]
    slopes: tuple[float, ...]
    exact: bool = False
    taus: tuple[float, ...] = ()

    @property
    def final_slope(self) -> float:
        return self.slopes[-1] if self.slopes else math.nan

    @property
    def fitted_slope(self) -> float:
        """Least-squares slope of ``log e`` against ``log h``."""
        if len(self.errors) < 2 or self.exact:
            return math.nan
        return float(np.polyfit(np.log(self.params), np.log(self.errors), 1)[0])

    def verdict(self) -> str:
        return "exact" if self.exact else f"{self.final_slope:.3f}"


def order_estimate(params: Sequence[float], errors: Sequence[float], scale: float = 1.0,
                   min_levels: int = 3, taus: Sequence[float] = ()) -> OrderEstimate:
    """Slopes ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` for each consecutive pair.

    Errors at rounding level (below ``1e-11 * scale``) mark the case as exact
    and no slopes are reported.
    """
    p = tuple(float(x) for x in params)
    e = tuple(float(x) for x in errors)
    if len(p) != len(e):
        raise PreconditionError("parameters and errors differ in length")
    if len(p) < min_levels:
        raise PreconditionError(f"need at least {min_levels} refinement levels, got {len(p)}")
    if all(x <= 1e-11 * scale for x in e):
        return OrderEstimate(p, e, (), True, tuple(taus))
    slopes = tuple(math.log(e[i] / e[i + 1]) / math.log(p[i] / p[i + 1]) for i in range(len(p) - 1))
    return OrderEstimate(p, e, slopes, False, tuple(taus))


def convergence_study(run: Callable[[int], float], levels: Sequence[int], params: Sequence[float] | None = None,
                      scale: float = 1.0, taus: Sequence[float] = ()) -> OrderEstimate:
    """Run ``run(level)`` for every level; ``params`` default to ``1/level`` (mesh width)."""
    if len(levels) < 3:
        raise PreconditionError(f"need at least 3 refinement levels, got {len(levels)}")
    errors = [run(L) for L in levels]
    p = params if params is not None else [1.0 / L for L in levels]
    return order_estimate(p, errors, scale, taus=taus)


def spatial_study(case: ManufacturedCase, Ns: Sequence[int], scheme: str, form: ConvectionForm,
                  norm: str = "l2", placement: CoefficientPlacement = CoefficientPlacement.NODE) -> OrderEstimate:
    return convergence_study(lambda N: steady_error(case, N, scheme, form, norm, placement), Ns)


def temporal_study(case: ManufacturedCase, N: int, spec_for: Callable[[float], object], taus: Sequence[float],
                   scheme: str = "central", form: ConvectionForm = ConvectionForm.SKEW, split: bool = False,
                   norm: str = "l2") -> OrderEstimate:
    """Final-time error of the time discretization alone, one run per ``tau``."""
    from .time_schemes import integrate
    prob, grid = semi_discrete_problem(case, N, scheme, form, split)

    def run(i: int) -> float:
        spec = spec_for(taus[i])
        ts = integrate(spec, prob, keep_solutions=False)
        return grid_error(grid, ts.final, sample(grid, case.u, spec.T), norm)

    return convergence_study(run, list(range(len(taus))), params=taus, taus=taus)


@dataclass(frozen=True)
class AprioriReport:
    estimate: str
    passed: bool
    first_violation: int | None  # level index n with lhs_n > rhs_n
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def _check(name: str, lhs, rhs) -> AprioriReport:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    scale = max(float(np.max(np.abs(rhs), initial=0.0)), 1e-300)
    bad = np.flatnonzero(~(lhs <= rhs + 1e-10 * scale))
    return AprioriReport(name, bad.size == 0, int(bad[0]) if bad.size else None, lhs, rhs)


def monitor_apriori(series: TimeSeries, estimate: str, tau: float, norm: str = "l2", rho: float = 1.0) -> AprioriReport:
    """Check a recorded trajectory against an a priori estimate at every level.

    ``"accumulation"``: ``||y^n|| <= ||y^0|| + sum_k tau ||phi^k||``.
    ``"gronwall"``: ``||y^n|| <= rho^n ||y^0|| + sum_k tau rho^(n-1-k) ||phi^k||``.
    ``"step"``: ``||y^(n+1)|| <= rho ||y^n||`` for each step.
    ``"energy_dinv"``: ``||y^n||^2 <= ||y^0||^2 + 1/2 sum_k tau (D^-1 phi^k, phi^k)``.
    ``"three_level"``: ``E^(n+1) <= rho E^n + tau ||phi^n||^2`` for ``n >= 1``.
    """
    y = series.series(norm)
    if estimate == "accumulation":
        f = np.asarray(series.phi_norms.get(norm, np.zeros(len(y) - 1)))
        rhs = y[0] + tau * np.concatenate([[0.0], np.cumsum(f)])
        return _check(estimate, y, rhs)
    if estimate == "gronwall":
        return _check(estimate, y, series.gronwall_bound(rho, tau, norm))
    if estimate == "step":
        return _check(estimate, y[1:], rho * y[:-1])
    if estimate == "energy_dinv":
        q = np.asarray(series.monitors["dinv_phi"])
        l2 = series.series("l2")
        rhs = l2[0] ** 2 + 0.5 * tau * np.concatenate([[0.0], np.cumsum(q)])
        return _check(estimate, l2**2, rhs)
    if estimate == "three_level":
        E = np.asarray(series.monitors["energy"])
        f2 = np.asarray(series.phi_norms["l2"]) ** 2
        # E[n] is the energy after step n; the estimate links steps n-1 and n
        return _check(estimate, E[1:], rho * E[:-1] + tau * f2[1:len(E)])
    raise ValueError(f"unknown estimate {estimate!r}")


def warn_short_ladder(levels: Sequence[int]) -> None:
    if len(levels) < 2:
        warnings.warn("a single refinement level gives no convergence slope", stacklevel=2)
