import math

import numpy as np
import pytest
import scipy.sparse as sp

from cdlab.core_grid import Grid1D, RectGrid2D
from cdlab.errors import AssemblyError
from cdlab.fd_operators import (assemble_convection, assemble_diffusion, assemble_upwind_convection,
                                directional_operators, operator_constants, sample_interior, semi_discrete_rhs)
from cdlab.fields import (CoefficientField, CoefficientPlacement, ConvectionForm, compressible_velocity,
                          constant_field, random_velocity, rotating_velocity)
from cdlab.linalg import min_symmetric_eigenvalue
from cdlab.verify import derive_forcing, heat_sine_1d

from .oracles import convection_matrix, diffusion_matrix, max_rel_diff, upwind_matrix

NODE, STAG = CoefficientPlacement.NODE, CoefficientPlacement.STAGGERED
FORMS = [ConvectionForm.NONDIVERGENT, ConvectionForm.DIVERGENT, ConvectionForm.SKEW]


def variable_field(rng, amplitude=2.0):
    return CoefficientField(lambda x1, x2: 1.0 + 0.5 * np.sin(3 * x1) * x2, random_velocity(rng, amplitude=amplitude),
                            0.5, 1.5)


def test_laplacian_entries_small_square():
    D = assemble_diffusion(RectGrid2D.unit_square(4), constant_field(1.0)).toarray()
    np.testing.assert_allclose(np.diag(D), 64.0)
    off = D[np.nonzero(D - np.diag(np.diag(D)))]
    np.testing.assert_allclose(off, -16.0)


def test_laplacian_smallest_eigenvalue():
    D = assemble_diffusion(RectGrid2D.unit_square(4), constant_field(1.0))
    lam = min_symmetric_eigenvalue(D)
    assert lam == pytest.approx(2 * 64 * math.sin(math.pi / 8) ** 2, rel=1e-12)
    assert lam == pytest.approx(18.745, abs=1e-3)


def test_diffusion_matches_loop_oracle(rng):
    g = RectGrid2D(1.0, 0.7, 9, 6)
    fld = variable_field(rng)
    assert max_rel_diff(assemble_diffusion(g, fld), diffusion_matrix(g, fld.k)) <= 1e-13


def test_diffusion_rejects_nonpositive_k():
    fld = CoefficientField(lambda x1, x2: x1 - 0.5, rotating_velocity(), 1e-3, 10.0)
    with pytest.raises(AssemblyError):
        assemble_diffusion(RectGrid2D.unit_square(8), fld)


def test_diffusion_rejects_k_outside_declared_bounds():
    fld = CoefficientField(lambda x1, x2: 1.0 + x1, rotating_velocity(), 1.0, 1.5)
    with pytest.raises(AssemblyError):
        assemble_diffusion(RectGrid2D.unit_square(8), fld)


@pytest.mark.parametrize("placement", [NODE, STAG])
@pytest.mark.parametrize("form", FORMS)
def test_convection_matches_loop_oracle(rng, form, placement):
    g = RectGrid2D(1.0, 1.3, 7, 8)
    fld = variable_field(rng)
    C = assemble_convection(g, fld, form, placement)
    ref = convection_matrix(g, lambda *x: fld.sample_v(*[np.asarray(c) for c in x]), form.value,
                            staggered=placement is STAG)
    assert max_rel_diff(C, ref) <= 1e-13


@pytest.mark.parametrize("form", [ConvectionForm.NONDIVERGENT, ConvectionForm.DIVERGENT])
def test_upwind_matches_loop_oracle(rng, form):
    g = RectGrid2D.unit_square(9)
    fld = variable_field(rng, amplitude=5.0)
    ref = upwind_matrix(g, lambda *x: fld.sample_v(*[np.asarray(c) for c in x]), form.value)
    assert max_rel_diff(assemble_upwind_convection(g, fld, form), ref) <= 1e-13


def test_upwind_rejects_skew():
    with pytest.raises(ValueError):
        assemble_upwind_convection(RectGrid2D.unit_square(4), constant_field(1.0, (1.0, 1.0)), ConvectionForm.SKEW)


@pytest.mark.parametrize("placement", [NODE, STAG])
def test_zero_velocity_gives_zero_operators(placement):
    g = RectGrid2D.unit_square(6)
    for form in FORMS:
        assert assemble_convection(g, constant_field(2.0), form, placement).count_nonzero() == 0


def test_staggered_skew_has_zero_diagonal(rng):
    C0 = assemble_convection(RectGrid2D.unit_square(10), variable_field(rng), ConvectionForm.SKEW, STAG)
    assert np.all(C0.diagonal() == 0.0)


@pytest.mark.parametrize("placement", [NODE, STAG])
def test_skew_is_half_sum(rng, placement):
    g = RectGrid2D.unit_square(10)
    fld = variable_field(rng)
    C1, C2, C0 = (assemble_convection(g, fld, f, placement) for f in FORMS)
    assert abs(C0 - 0.5 * (C1 + C2)).max() <= 1e-15 * abs(C1).max()


@pytest.mark.parametrize("placement", [NODE, STAG])
def test_adjointness_random_fields(placement):
    g = RectGrid2D(1.0, 1.5, 12, 9)
    for seed in range(20):
        fld = variable_field(np.random.default_rng(seed), amplitude=4.0)
        C1 = assemble_convection(g, fld, ConvectionForm.NONDIVERGENT, placement)
        C2 = assemble_convection(g, fld, ConvectionForm.DIVERGENT, placement)
        assert abs(C1.T + C2).max() <= 1e-14 * abs(C2).max()


@pytest.mark.parametrize("placement", [NODE, STAG])
@pytest.mark.parametrize("velocity", [compressible_velocity(2.0), rotating_velocity(3.0)])
def test_skew_symmetry_any_velocity(rng, placement, velocity):
    g = RectGrid2D.unit_square(11)
    fld = CoefficientField(lambda x1, x2: 1.0 + 0 * x1, velocity, 1.0, 1.0)
    C0 = assemble_convection(g, fld, ConvectionForm.SKEW, placement)
    w = g.h1 * g.h2
    for _ in range(25):
        y = rng.standard_normal(g.n_interior)
        assert abs(w * y @ (C0 @ y)) <= 1e-13 * w * (y @ y)


def test_diffusion_bounds_and_symmetry(rng):
    g = RectGrid2D.unit_square(10)
    fld = variable_field(rng)
    D = assemble_diffusion(g, fld)
    assert abs(D - D.T).max() == 0.0
    c = operator_constants(g, fld)
    assert c.M0 == 16.0
    for _ in range(50):
        y = rng.standard_normal(g.n_interior)
        q, yy = y @ (D @ y), y @ y
        assert q >= fld.kappa1 * c.M0 * yy  # spectral form of the lower bound
        assert q >= fld.kappa1 / c.M0 * yy
        assert q <= c.M3 * yy * (1 + 1e-14)


def test_m0_of_rectangle():
    g = RectGrid2D(2.0, 0.5, 4, 4)
    assert operator_constants(g, constant_field(1.0)).M0 == pytest.approx(8 / 4 + 8 / 0.25)


def test_m1_zero_for_divergence_free_staggered():
    g = RectGrid2D.unit_square(12)
    fld = CoefficientField(lambda x1, x2: 1 + 0 * x1, rotating_velocity(2.0), 1.0, 1.0)
    assert operator_constants(g, fld, STAG).M1 == 0.0


def test_m2_of_unit_velocity_nondivergent():
    g = RectGrid2D.unit_square(8)
    fld = CoefficientField(lambda x1, x2: 1 + 0 * x1, lambda x1, x2, t: (np.cos(4 * x2), 0 * x1 + 0.5), 1.0, 1.0)
    c = operator_constants(g, fld, NODE, ConvectionForm.NONDIVERGENT)
    vmax2 = max(float(np.max(np.cos(4 * g.interior_mesh()[1]) ** 2)), 0.25)
    assert c.M2 == pytest.approx(2 * vmax2)
    unit = CoefficientField(lambda x1, x2: 1 + 0 * x1, lambda x1, x2, t: (1 + 0 * x1, 0 * x1), 1.0, 1.0)
    assert operator_constants(g, unit, NODE, ConvectionForm.NONDIVERGENT).M2 == 2.0


@pytest.mark.parametrize("placement", [NODE, STAG])
@pytest.mark.parametrize("form", FORMS)
def test_energy_and_subordination_bounds(rng, form, placement):
    g = RectGrid2D(1.0, 0.8, 10, 8)
    fld = variable_field(rng, amplitude=3.0)
    D = assemble_diffusion(g, fld)
    c = operator_constants(g, fld, placement, form)
    C = assemble_convection(g, fld, form, placement)
    parts = [assemble_convection(g, fld, ConvectionForm.NONDIVERGENT, placement),
             assemble_convection(g, fld, ConvectionForm.DIVERGENT, placement)]
    for _ in range(100):
        y = rng.standard_normal(g.n_interior)
        Cy = C @ y
        assert Cy @ Cy <= c.M2 * (y @ (D @ y)) * (1 + 1e-12)
        for P in parts:
            assert abs(y @ (P @ y)) <= c.M1 * (y @ y) * (1 + 1e-12) + 1e-12


def test_directional_parts_sum_to_full_operator(rng):
    g = RectGrid2D.unit_square(9)
    fld = variable_field(rng)
    for form in FORMS:
        parts = directional_operators(g, fld, form, STAG)
        full = assemble_diffusion(g, fld) + assemble_convection(g, fld, form, STAG)
        assert abs(sum(parts[1:], parts[0]) - full).max() <= 1e-12 * abs(full).max()
    up = directional_operators(g, fld, ConvectionForm.DIVERGENT, upwind=True)
    full = assemble_diffusion(g, fld) + assemble_upwind_convection(g, fld, ConvectionForm.DIVERGENT)
    assert abs(up[0] + up[1] - full).max() <= 1e-12 * abs(full).max()


def test_directional_part_couples_one_direction_only(rng):
    g = RectGrid2D.unit_square(7)
    A1, A2 = directional_operators(g, variable_field(rng), ConvectionForm.NONDIVERGENT)
    stride = g.interior_shape[1]
    offsets = {int(j - i) for i, j in zip(*A1.nonzero())}
    assert offsets <= {0, stride, -stride}
    offsets = {int(j - i) for i, j in zip(*A2.nonzero())}
    assert offsets <= {0, 1, -1}


def test_one_dimensional_operators():
    g = Grid1D(1.0, 8)
    fld = CoefficientField(lambda x: 1 + x, lambda x, t: 2 - x, 1.0, 2.0, dim=1)
    D = assemble_diffusion(g, fld)
    assert max_rel_diff(D, diffusion_matrix(g, fld.k)) <= 1e-14
    C1 = assemble_convection(g, fld, ConvectionForm.NONDIVERGENT)
    C2 = assemble_convection(g, fld, ConvectionForm.DIVERGENT)
    assert abs(C1.T + C2).max() == 0.0


def test_rhs_sampling():
    g = RectGrid2D.unit_square(5)
    assert np.all(semi_discrete_rhs(g, lambda x1, x2, t: 0 * x1, 0.3).values == 0.0)
    phi = semi_discrete_rhs(g, lambda x1, x2, t: t + 0 * x1, 0.3)
    np.testing.assert_array_equal(phi.interior(), np.full(16, 0.3))
    assert phi.vanishes_on_boundary


def test_rhs_matches_hand_derived_forcing():
    k = 0.7
    g = Grid1D(1.0, 16)
    f = derive_forcing(heat_sine_1d(k), ConvectionForm.SKEW)
    got = semi_discrete_rhs(g, f, 0.4).interior()
    x = g.interior_x
    expected = (math.pi**2 * k - 1.0) * math.exp(-0.4) * np.sin(math.pi * x)
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(sample_interior(g, f, 0.4), got)


def test_operators_are_sparse_csr(rng):
    g = RectGrid2D.unit_square(6)
    fld = variable_field(rng)
    for M in (assemble_diffusion(g, fld), assemble_convection(g, fld, ConvectionForm.SKEW)):
        assert sp.isspmatrix_csr(M) and M.shape == (25, 25)
        assert M.nnz <= 5 * 25
