import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cdlab.core_grid import Grid1D, RectGrid2D
from cdlab.errors import DimensionError, NonConvergenceError, PreconditionError, SingularityError
from cdlab.fd_operators import assemble_convection, assemble_diffusion
from cdlab.fields import CoefficientField, ConvectionForm, constant_field, random_velocity
from cdlab.linalg import (SolverOptions, TridiagonalSystem, dense_solve, is_symmetric, max_generalized_eigenvalue,
                          min_symmetric_eigenvalue, solve_sparse, solve_tridiagonal, tridiagonal_residual)


def laplace_1d(n):
    return TridiagonalSystem(-np.ones(n), 2 * np.ones(n), -np.ones(n), np.zeros(n))


def test_tridiagonal_identity():
    rhs = np.array([1.0, -2.0, 3.5])
    sys = TridiagonalSystem(np.zeros(3), np.ones(3), np.zeros(3), rhs)
    np.testing.assert_array_equal(solve_tridiagonal(sys), rhs)


def test_tridiagonal_recovers_known_vector(rng):
    y = rng.standard_normal(50)
    base = laplace_1d(50)
    sys = TridiagonalSystem(base.sub, base.diag, base.sup, base.matvec(y))
    np.testing.assert_allclose(solve_tridiagonal(sys), y, atol=1e-13 * 50**2)
    assert tridiagonal_residual(sys, solve_tridiagonal(sys)) < 1e-12


def test_tridiagonal_scalar():
    sys = TridiagonalSystem(np.array([0.0]), np.array([4.0]), np.array([0.0]), np.array([2.0]))
    assert solve_tridiagonal(sys)[0] == 0.5


def test_tridiagonal_batched_matches_loop(rng):
    n, batch = 12, (3, 4)
    sub, sup = -rng.random((n, *batch)), -rng.random((n, *batch))
    diag = 2.5 + rng.random((n, *batch))
    rhs = rng.standard_normal((n, *batch))
    x = solve_tridiagonal(TridiagonalSystem(sub, diag, sup, rhs))
    for i in range(3):
        for j in range(4):
            single = TridiagonalSystem(sub[:, i, j], diag[:, i, j], sup[:, i, j], rhs[:, i, j])
            np.testing.assert_allclose(x[:, i, j], solve_tridiagonal(single), rtol=1e-14)


def test_tridiagonal_zero_pivot():
    sys = TridiagonalSystem(np.array([0.0, 1.0]), np.array([1.0, 1.0]), np.array([1.0, 0.0]), np.ones(2))
    with pytest.raises(SingularityError):
        solve_tridiagonal(sys)
    with pytest.raises(DimensionError):
        TridiagonalSystem(np.ones(2), np.ones(3), np.ones(3), np.ones(3))


def test_identity_solves_in_one_iteration(rng):
    b = rng.standard_normal(20)
    x, info = solve_sparse(sp.identity(20, format="csr"), b, symmetric=True, return_info=True)
    np.testing.assert_allclose(x, b, rtol=1e-15)
    assert info.iterations <= 1


def test_laplacian_matches_dense_oracle(rng):
    g = RectGrid2D.unit_square(12)
    D = assemble_diffusion(g, constant_field(1.0))
    b = rng.standard_normal(g.n_interior)
    x = solve_sparse(D, b, symmetric=True)
    ref = dense_solve(D, b)
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def test_nonsymmetric_exp_transform_system(rng):
    g = RectGrid2D.unit_square(10)
    fld = CoefficientField(lambda x1, x2: 0.1 + 0 * x1, random_velocity(rng, amplitude=3.0), 0.1, 0.1)
    A = assemble_diffusion(g, fld) + assemble_convection(g, fld, ConvectionForm.NONDIVERGENT)
    m = min_symmetric_eigenvalue(A)
    M = sp.identity(g.n_interior) + 0.5 * 0.1 * (A - m * sp.identity(g.n_interior))
    b = rng.standard_normal(g.n_interior)
    x, info = solve_sparse(M, b, symmetric=False, return_info=True)
    assert info.method == "bicgstab"
    ref = dense_solve(M, b)
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def test_weighted_symmetric_solve(rng):
    w = rng.uniform(0.5, 2.0, 30)
    S = sp.diags([-np.ones(29), 3 * np.ones(30), -np.ones(29)], [-1, 0, 1])
    A = sp.diags(1 / w) @ S  # self-adjoint in the w-weighted product
    b = rng.standard_normal(30)
    x = solve_sparse(A, b, symmetric=True, weights=w)
    np.testing.assert_allclose(A @ x, b, atol=1e-9)


def test_direct_method_agrees(rng):
    A = sp.diags([-np.ones(39), 2.2 * np.ones(40), -0.5 * np.ones(39)], [-1, 0, 1], format="csr")
    b = rng.standard_normal(40)
    np.testing.assert_allclose(solve_sparse(A, b, method="direct"), dense_solve(A, b), rtol=1e-12)


def test_false_symmetric_flag_rejected():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert not is_symmetric(A)
    with pytest.raises(PreconditionError):
        solve_sparse(A, np.ones(2), symmetric=True)


def test_iteration_limit_reports_residual(rng):
    g = RectGrid2D.unit_square(20)
    D = assemble_diffusion(g, constant_field(1.0))
    with pytest.raises(NonConvergenceError) as exc:
        solve_sparse(D, rng.standard_normal(g.n_interior), symmetric=True, opts=SolverOptions(max_iters=3))
    assert exc.value.residual > 0 and exc.value.iterations == 3


def test_zero_rhs_gives_zero():
    np.testing.assert_array_equal(solve_sparse(sp.identity(4), np.zeros(4)), np.zeros(4))


def test_solves_are_deterministic(rng):
    g = RectGrid2D.unit_square(9)
    fld = CoefficientField(lambda x1, x2: 1 + 0 * x1, random_velocity(rng, amplitude=5.0), 1.0, 1.0)
    A = assemble_diffusion(g, fld) + assemble_convection(g, fld, ConvectionForm.DIVERGENT)
    b = np.linspace(-1, 1, g.n_interior)
    assert np.array_equal(solve_sparse(A, b), solve_sparse(A, b))


def test_min_eigenvalue_diagonal():
    assert min_symmetric_eigenvalue(np.diag(np.arange(1.0, 6.0))) == pytest.approx(1.0, rel=1e-12)


def test_min_eigenvalue_interval_laplacian():
    D = assemble_diffusion(Grid1D(1.0, 4), constant_field(1.0, 0.0))
    assert min_symmetric_eigenvalue(D) == pytest.approx(64 * math.sin(math.pi / 8) ** 2, rel=1e-10)
    assert 64 * math.sin(math.pi / 8) ** 2 == pytest.approx(9.3726, abs=1e-4)


@given(st.floats(-50, 50))
def test_min_eigenvalue_shift(c):
    M = np.array([[4.0, 1.0, 0.0], [2.0, 3.0, -1.0], [0.0, 0.0, 5.0]])
    base = min_symmetric_eigenvalue(M)
    assert min_symmetric_eigenvalue(M + c * np.eye(3)) - base == pytest.approx(c, abs=1e-10)


def test_min_eigenvalue_sparse_path_agrees():
    g = RectGrid2D.unit_square(48)  # 2209 unknowns: above the dense limit
    D = assemble_diffusion(g, constant_field(1.0))
    exact = 2 * 4 / g.h1**2 * math.sin(math.pi * g.h1 / 2) ** 2
    assert min_symmetric_eigenvalue(D) == pytest.approx(exact, rel=1e-8)


def test_max_generalized_eigenvalue():
    lam, v = max_generalized_eigenvalue(np.diag([1.0, 6.0]), np.diag([1.0, 2.0]))
    assert lam == pytest.approx(3.0)
    assert abs(v[1]) > 0
