"""Exponential (transformed-equation) discretizations of convection-diffusion.

Writing ``-(k u')' + v u'`` as ``-(1/chi)(k chi u')'`` with
``chi = exp(-int v/k)`` and replacing ``chi`` at half points by
``chi(x) exp(+-theta h)``, ``theta = v/(2k)``, gives a three-point operator
whose off-diagonal entries are nonpositive for every Peclet number and whose
truncation error is still second order.  The nondivergent operator is
diagonally dominant by rows, the divergent one by columns.

In 2D the operator is a sum of directional parts ``A_1 + A_2``, each using
the velocity component of its own direction; every part couples unknowns
only along its grid lines.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core_grid import Grid1D
from .errors import RangeError
from .fd_operators import Grid, _take, assemble_stencil, interior_shape, line_sample, spacings
from .fields import CoefficientField, ConvectionForm

EXP_LIMIT = 700.0


def theta_field(grid: Grid, field: CoefficientField, alpha: int = 0, t: float = 0.0) -> np.ndarray:
    """``theta_a = v_a / (2k)`` at the nodes ``0..N`` of every line along ``alpha``."""
    k = line_sample(grid, field.sample_k, alpha, 0.0)
    v = line_sample(grid, lambda *c: field.sample_v(*c, t=t)[alpha], alpha, 0.0)
    return v / (2.0 * k)


def _exp(x: np.ndarray) -> np.ndarray:
    if np.any(np.abs(x) > EXP_LIMIT):
        raise RangeError(f"|theta h| = {float(np.max(np.abs(x))):.4g} exceeds {EXP_LIMIT}; exp would overflow")
    return np.exp(x)


def _directional_terms(grid: Grid, field: CoefficientField, alpha: int, form: ConvectionForm,
                       t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = spacings(grid)[alpha]
    k_half = line_sample(grid, field.eval_k, alpha, -0.5 * h)  # entry i: k at (i - 1/2) h
    field.check_k(_take(k_half, alpha, 1, None))
    k_m = _take(k_half, alpha, 1, -1) / h**2
    k_p = _take(k_half, alpha, 2, None) / h**2
    th = theta_field(grid, field, alpha, t) * h
    _exp(th)
    th_c = _take(th, alpha, 1, -1)
    if form is ConvectionForm.NONDIVERGENT:
        center = k_p * np.exp(-th_c) + k_m * np.exp(th_c)
        minus = -k_m * np.exp(th_c)
        plus = -k_p * np.exp(-th_c)
    elif form is ConvectionForm.DIVERGENT:
        center = k_p * np.exp(th_c) + k_m * np.exp(-th_c)
        minus = -k_m * np.exp(_take(th, alpha, 0, -2))
        plus = -k_p * np.exp(-_take(th, alpha, 2, None))
    else:
        raise ValueError("exponential operators exist for the nondivergent and divergent forms")
    return center, minus, plus


def exp_operator_1d(grid: Grid1D, field: CoefficientField, form: ConvectionForm = ConvectionForm.NONDIVERGENT,
                    t: float = 0.0) -> sp.csr_matrix:
    """Exponential approximation of ``-(k u')' + v u'`` (nondivergent) or
    ``-(k u')' + (v u)'`` (divergent) on a 1D grid."""
    if not isinstance(grid, Grid1D):
        raise TypeError("exp_operator_1d needs a Grid1D")
    c, m, p = _directional_terms(grid, field, 0, form, t)
    return assemble_stencil(grid, c, [m], [p])


def exp_operator_2d(grid: Grid, field: CoefficientField, form: ConvectionForm = ConvectionForm.NONDIVERGENT,
                    t: float = 0.0) -> tuple[sp.csr_matrix, ...]:
    """Directional exponential operators ``(A_1, A_2)``; their sum approximates the full operator."""
    dims = len(spacings(grid))
    out = []
    for a in range(dims):
        c, m, p = _directional_terms(grid, field, a, form, t)
        zero = np.zeros(interior_shape(grid))
        minus, plus = [zero] * dims, [zero] * dims
        minus[a], plus[a] = m, p
        out.append(assemble_stencil(grid, c, minus, plus))
    return tuple(out)


def exp_operator(grid: Grid, field: CoefficientField, form: ConvectionForm = ConvectionForm.NONDIVERGENT,
                 t: float = 0.0) -> sp.csr_matrix:
    """Sum of the directional operators (the full operator in any dimension)."""
    parts = exp_operator_2d(grid, field, form, t)
    return sp.csr_matrix(sum(parts[1:], parts[0]))


def gamma_constant(operators, variant: str = "full") -> float:
    """Largest diagonal entry governing the maximum-norm step bound.

    ``"full"``: of the whole operator; ``"per-direction"``: the largest over
    the directional parts (locally one-dimensional scheme); ``"additive"``:
    twice that, since additive averaging advances each part with ``2 tau``.
    """
    ops = [operators] if sp.issparse(operators) else list(operators)
    if variant == "full":
        total = sp.csr_matrix(sum(ops[1:], ops[0]))
        return float(total.diagonal().max())
    per = max(float(sp.csr_matrix(A).diagonal().max()) for A in ops)
    if variant == "per-direction":
        return per
    if variant == "additive":
        return 2.0 * per
    raise ValueError(f"unknown gamma variant {variant!r}")
