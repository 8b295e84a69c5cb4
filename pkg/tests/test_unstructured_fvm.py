import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from cdlab.errors import DegenerateGeometryError, MeshInputError
from cdlab.fields import CoefficientField, ConvectionForm, compressible_velocity, constant_field, rotating_velocity
from cdlab.unstructured_fvm import (
    NormalVelocity,
    build_fvm_scheme,
    build_mesh,
    check_fvm_monotone,
    delaunay_violations,
    face_peclet,
    friedrichs_constant,
    fvm_constants,
    fvm_convection,
    fvm_diffusion,
    fvm_divergence,
    fvm_upwind_adjoint,
    fvm_upwind_convection,
    laplace_form,
    normal_velocity,
    random_mesh,
    read_mesh,
    rectangle,
    split_velocity,
    write_mesh,
)

from .oracles import circumcircle_intruders

FIVE = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]


def unit_k(v):
    return CoefficientField(lambda x1, x2: np.ones(np.broadcast(x1, x2).shape), v, 1.0, 1.0)


def weighted(mesh, a, b):
    V = mesh.V[mesh.interior_nodes]
    return float(np.sum(V * a * b))


@pytest.fixture(scope="module")
def five():
    return build_mesh(FIVE, rectangle())


@pytest.fixture(scope="module")
def jittered():
    return random_mesh(7, seed=11)


def test_five_point_geometry(five):
    assert five.n_interior == 1
    np.testing.assert_allclose(five.V, [0.125] * 4 + [0.5], rtol=1e-14)
    np.testing.assert_allclose(five.l, np.sqrt(0.5), rtol=1e-14)
    np.testing.assert_allclose(five.d, np.sqrt(0.5), rtol=1e-14)
    assert np.sum(five.l * five.d) == pytest.approx(4 * five.V[4], rel=1e-14)


def test_five_point_diffusion(five):
    D = fvm_diffusion(five, constant_field(1.0, (0.0, 0.0))).toarray()
    assert D.shape == (1, 1)
    assert D[0, 0] == pytest.approx(8.0, rel=1e-14)


def test_five_point_upwind_hand_values(five):
    # normals from the centre point to the corners make b = +-1/sqrt(2) for v = (1, 0)
    f = constant_field(1.0, (1.0, 0.0))
    assert fvm_upwind_convection(five, f, "nondivergent").toarray()[0, 0] == pytest.approx(2.0, rel=1e-14)
    assert fvm_upwind_convection(five, f, "divergent").toarray()[0, 0] == pytest.approx(2.0, rel=1e-14)
    assert fvm_convection(five, f, "nondivergent").toarray()[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_laplace_form_linear_and_quadratic(jittered):
    m = jittered
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    cells = m.interior_closed
    assert cells.size > 0
    lin = laplace_form(m, 2.0 - 3.0 * x + 0.7 * y)
    np.testing.assert_allclose(lin[cells], 0.0, atol=1e-11)
    quad = laplace_form(m, x**2 + y**2)
    np.testing.assert_allclose(quad[cells], -4.0, rtol=1e-11)


def test_face_sum_equals_four_volumes(jittered):
    m = jittered
    acc = np.zeros(m.n_nodes)
    np.add.at(acc, m.edges[:, 0], m.l * m.d)
    np.add.at(acc, m.edges[:, 1], m.l * m.d)
    cells = m.interior_closed
    np.testing.assert_allclose(acc[cells], 4 * m.V[cells], rtol=1e-11)


def test_cells_tile_domain(jittered):
    assert jittered.V.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(jittered.l > 0) and np.all(jittered.V > 0)


def test_friedrichs_values():
    assert friedrichs_constant(build_mesh(FIVE, rectangle())) == pytest.approx(0.125)
    assert friedrichs_constant(random_mesh(4, seed=0, l1=2.0, l2=1.0)) == pytest.approx(0.3125)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_friedrichs_inequality_half_constant(seed):
    # (M0/2) sum l d ((y_j - y_i)/d)^2 >= ||y||^2 for all y, checked through the
    # smallest generalized eigenvalue of the weighted Laplacian
    m = random_mesh(6, seed=seed)
    D = fvm_diffusion(m, constant_field(1.0, (0.0, 0.0))).toarray()
    V = np.diag(m.V[m.interior_nodes])
    lam = sla.eigh(V @ D, V, eigvals_only=True)[0]
    assert 0.5 * friedrichs_constant(m) * lam >= 1.0


def test_friedrichs_inequality_random_vectors(rng):
    m = random_mesh(6, seed=5)
    M0 = friedrichs_constant(m)
    e = m.edges
    for _ in range(30):
        y = np.zeros(m.n_nodes)
        y[m.interior_nodes] = rng.normal(size=m.n_interior)
        grad = (y[e[:, 1]] - y[e[:, 0]]) / m.d
        assert 0.5 * M0 * np.sum(m.l * m.d * grad**2) >= np.sum(m.V * y**2)


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), form=st.sampled_from(list(ConvectionForm)))
def test_adjoint_in_volume_inner_product(seed, form):
    m = random_mesh(5, seed=seed)
    rng = np.random.default_rng(seed)
    field = unit_k(compressible_velocity(1.5))
    scheme = build_fvm_scheme(m, field, form, upwind=False)
    A = scheme.matrix()
    Astar = scheme.stencil.adjoint().matrix()
    y, w = rng.normal(size=(2, m.n_interior))
    assert weighted(m, A @ y, w) == pytest.approx(weighted(m, y, Astar @ w), rel=1e-12, abs=1e-12)


def test_upwind_adjoint_operator(jittered, rng):
    field = unit_k(compressible_velocity(-2.0))
    A = fvm_upwind_convection(jittered, field, "divergent")
    Astar = fvm_upwind_adjoint(jittered, field)
    for _ in range(10):
        y, w = rng.normal(size=(2, jittered.n_interior))
        assert weighted(jittered, A @ y, w) == pytest.approx(weighted(jittered, y, Astar @ w), rel=1e-12)


def test_skew_form_is_skew(jittered, rng):
    C0 = fvm_convection(jittered, unit_k(compressible_velocity(3.0)), "skew")
    for _ in range(20):
        y = rng.normal(size=jittered.n_interior)
        assert abs(weighted(jittered, C0 @ y, y)) < 1e-12 * weighted(jittered, y, y)


def test_divergent_minus_nondivergent_is_divergence(jittered, rng):
    field = unit_k(compressible_velocity(1.3))
    C1 = fvm_convection(jittered, field, "nondivergent")
    C2 = fvm_convection(jittered, field, "divergent")
    div = fvm_divergence(jittered, field)[jittered.interior_nodes]
    y = rng.normal(size=jittered.n_interior)
    np.testing.assert_allclose(C2 @ y, C1 @ y + div * y, atol=1e-12)
    # central C0 is the mean of C1 and C2
    C0 = fvm_convection(jittered, field, "skew")
    np.testing.assert_allclose(C0 @ y, 0.5 * (C1 @ y + C2 @ y), atol=1e-12)


def test_divergence_of_linear_field(jittered):
    div = fvm_divergence(jittered, compressible_velocity(1.0))
    np.testing.assert_allclose(div[jittered.interior_closed], 2.0, rtol=1e-11)
    rot = fvm_divergence(jittered, rotating_velocity(4.0))
    np.testing.assert_allclose(rot[jittered.interior_closed], 0.0, atol=1e-11)


def test_normal_velocity_antisymmetric(jittered):
    nv = normal_velocity(jittered, rotating_velocity())
    i, j = jittered.edges[0]
    again = NormalVelocity.from_directed(jittered, {(int(j), int(i)): -nv.b[0], **{
        (int(a), int(b)): float(v) for (a, b), v in zip(jittered.edges[1:], nv.b[1:])}})
    np.testing.assert_array_equal(again.b, nv.b)
    with pytest.raises(MeshInputError):
        NormalVelocity.from_directed(jittered, {(int(i), int(j)): 1.0, (int(j), int(i)): 0.5})


def test_split_velocity_parts():
    b = np.array([-2.0, 0.0, 3.0, -0.5])
    bp, bm = split_velocity(b)
    np.testing.assert_array_equal(bp + bm, b)
    assert np.all(bp >= 0) and np.all(bm <= 0)
    np.testing.assert_array_equal(bp, [0, 0, 3, 0])


def test_upwind_nondivergent_kills_constants(jittered):
    # interior cells away from the boundary see y = 1 everywhere
    field = unit_k(compressible_velocity(2.0))
    ones = np.ones(jittered.n_interior)
    r = fvm_upwind_convection(jittered, field, "nondivergent") @ ones
    inner = np.array([np.all(~jittered.boundary[jittered.neighbors(n)]) for n in jittered.interior_nodes])
    assert inner.any()
    np.testing.assert_allclose(r[inner], 0.0, atol=1e-12)


def test_face_peclet(jittered):
    pe = face_peclet(jittered, constant_field(0.5, (2.0, 0.0)))
    expected = np.abs(2.0 * jittered.normal[:, 0]) * jittered.d / 0.5
    np.testing.assert_allclose(pe, expected, rtol=1e-14)


def test_fvm_constants_divergence_free():
    m = random_mesh(6, seed=4)
    c = fvm_constants(m, unit_k(rotating_velocity()))
    assert c.M0 == pytest.approx(0.125)
    assert c.M1 == pytest.approx(0.0, abs=1e-12)
    assert c.M2 > 0


def test_central_certificate_fails_at_peclet_three():
    m = random_mesh(8, seed=0, jitter=0.0)
    scheme = build_fvm_scheme(m, constant_field(1.0, (24.0, 0.0)), "nondivergent", upwind=False)
    cert = check_fvm_monotone(scheme)
    assert not cert.passed
    assert cert.witness.coefficient == "beta" and cert.witness.value < 0
    assert cert.details["peclet"] > 2
    assert cert.details["green_min"] < 0


@pytest.mark.parametrize("form", ["nondivergent", "divergent"])
def test_upwind_certificates_pass(form):
    m = random_mesh(6, seed=1)
    cert = check_fvm_monotone(build_fvm_scheme(m, constant_field(1.0, (30.0, 10.0)), form, upwind=True))
    assert cert.passed and "direct" in cert.kinds


def test_upwind_divergent_contracting_flow_uses_adjoint():
    # a converging flow gives delta < 0, so only the adjoint route certifies
    m = random_mesh(6, seed=2)
    scheme = build_fvm_scheme(m, unit_k(compressible_velocity(-20.0)), "divergent", upwind=True)
    cert = check_fvm_monotone(scheme)
    assert "direct" not in cert.kinds
    assert "adjoint" in cert.kinds and "green" in cert.kinds
    assert check_fvm_monotone(scheme, green_limit=0).kinds == ("adjoint",)


def test_upwind_solution_nonnegative(rng):
    m = random_mesh(6, seed=3)
    scheme = build_fvm_scheme(m, unit_k(compressible_velocity(-20.0)), "divergent", upwind=True)
    A = scheme.matrix().toarray()
    for _ in range(10):
        y = np.linalg.solve(A, rng.uniform(0, 1, m.n_interior))
        assert y.min() >= -1e-12


@pytest.mark.parametrize("seed", [0, 7, 42])
def test_random_mesh_is_delaunay(seed):
    m = random_mesh(6, seed=seed)
    assert delaunay_violations(m.nodes, m.triangles) == []
    assert circumcircle_intruders(m.nodes.tolist(), m.triangles.tolist()) == []
    assert m.boundary.sum() == 4 * 6


def test_cocircular_square_builds():
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], rectangle())
    assert m.n_interior == 0 and len(m.triangles) == 2
    assert m.V.sum() == pytest.approx(1.0)


def test_degenerate_inputs():
    with pytest.raises(DegenerateGeometryError):
        build_mesh([[0, 0], [0.5, 0], [1, 0]], rectangle())
    with pytest.raises(MeshInputError):
        build_mesh(FIVE + [[0.5, 0.5]], rectangle())
    with pytest.raises(MeshInputError):
        build_mesh([[0, 0], [1, 0], [1, 1], [0, 1], [1.5, 0.5]], rectangle())
    with pytest.raises(MeshInputError):
        random_mesh(1)


def test_mesh_file_round_trip(tmp_path):
    m = random_mesh(5, seed=9)
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    back = read_mesh(p)
    np.testing.assert_array_equal(back.nodes, m.nodes)
    np.testing.assert_array_equal(back.boundary, m.boundary)
    np.testing.assert_allclose(back.V, m.V, rtol=1e-12)
    np.testing.assert_allclose(np.sort(back.l), np.sort(m.l), rtol=1e-12)


def test_read_mesh_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("nodes 2 triangles\n")
    with pytest.raises(MeshInputError):
        read_mesh(p)
    p.write_text("nodes 3 triangles 1\n0 0 1\n1 0 1\n0 1 1\n0 1 5\n")
    with pytest.raises(MeshInputError, match="out of range"):
        read_mesh(p)
    # a kite whose long diagonal is the wrong one for Delaunay
    p.write_text("nodes 4 triangles 2\n0 0 1\n1 -0.2 1\n2 0 1\n1 0.2 1\n0 1 2\n0 2 3\n")
    with pytest.raises(MeshInputError, match="circumcircle"):
        read_mesh(p)


def test_flipped_kite_is_not_delaunay():
    pts = np.array([[0, 0], [1, -0.2], [2, 0], [1, 0.2]], dtype=float)
    assert delaunay_violations(pts, np.array([[0, 1, 3], [1, 2, 3]])) == []
    assert delaunay_violations(pts, np.array([[0, 1, 2], [0, 2, 3]])) != []
