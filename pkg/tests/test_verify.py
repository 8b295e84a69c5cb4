import math
import warnings

import numpy as np
import pytest

from cdlab.core_grid import RectGrid2D
from cdlab.errors import PreconditionError
from cdlab.fd_operators import assemble_convection, assemble_diffusion, interior_shape
from cdlab.fields import CoefficientField, ConvectionForm, constant_field
from cdlab.linalg import solve_sparse
from cdlab.stability_lab import alternating_vector, banach_step_bound
from cdlab.time_schemes import EvolutionProblem, Family, SchemeSpec, integrate
from cdlab.verify import (
    CASES,
    ManufacturedCase,
    boundary_layer_1d,
    compressible_sine,
    convergence_study,
    derive_forcing,
    grid_error,
    heat_sine_1d,
    make_grid,
    monitor_apriori,
    order_estimate,
    rotating_sine,
    sample,
    semi_discrete_problem,
    spatial_operator,
    spatial_study,
    steady_error,
    warn_short_ladder,
)

ND, DV, SK = ConvectionForm.NONDIVERGENT, ConvectionForm.DIVERGENT, ConvectionForm.SKEW
H = 1e-3


def d1(fn, x, a, h=H):
    """Fourth-order central first derivative of ``fn`` in coordinate ``a``."""
    def at(s):
        y = list(x)
        y[a] = y[a] + s
        return fn(*y)
    return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)


def numeric_forcing(case, form, x, t):
    """Residual of the continuous equation from finite-difference derivatives only."""
    u = lambda *y: case.u(*y[:-1], y[-1])  # noqa: E731
    pts = list(x) + [t]
    dim = case.dim
    ut = d1(u, pts, dim)
    k = lambda *y: case.field.eval_k(*y[:dim])  # noqa: E731
    flux_div = 0.0
    conv = 0.0
    vel = case.field.sample_v(*x, t=t)
    for a in range(dim):
        ka_ua = lambda *y, a=a: k(*y) * d1(u, list(y), a)  # noqa: E731
        flux_div = flux_div + d1(ka_ua, pts, a)
        if form is ND:
            conv = conv + vel[a] * d1(u, pts, a)
        else:
            vu = lambda *y, a=a: case.field.sample_v(*y[:dim], t=y[dim])[a] * u(*y)  # noqa: E731
            term = d1(vu, pts, a)
            conv = conv + (term if form is DV else 0.5 * (term + vel[a] * d1(u, pts, a)))
    return ut + conv - flux_div


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("form", [ND, DV, SK])
def test_forcing_matches_numeric_residual(name, form, rng):
    case = CASES[name](eps=0.2) if name == "boundary_layer" else CASES[name]()
    x = [rng.uniform(0.1, 0.9, 100) for _ in range(case.dim)]
    t = 0.3
    f = derive_forcing(case, form)(*x, t)
    ref = numeric_forcing(case, form, x, t)
    np.testing.assert_allclose(f, ref, rtol=1e-8, atol=1e-8 * np.max(np.abs(ref)))


def test_zero_solution_has_zero_forcing():
    z = lambda *a: np.zeros(np.broadcast(*a[:-1]).shape)  # noqa: E731
    case = ManufacturedCase("zero", constant_field(2.0, (1.0, -3.0)), u=z, u_t=z,
                            grad=lambda x1, x2, t: (z(x1, x2, t),) * 2,
                            second=lambda x1, x2, t: (z(x1, x2, t),) * 2,
                            grad_k=lambda x1, x2: (np.zeros(np.shape(x1)),) * 2, div_v=z)
    x1, x2 = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    for form in (ND, DV, SK):
        assert np.all(derive_forcing(case, form)(x1, x2, 0.7) == 0)


def test_heat_forcing_by_hand():
    x = np.linspace(0, 1, 11)
    t = 0.4
    f = derive_forcing(heat_sine_1d(), ND)(x, t)
    np.testing.assert_allclose(f, (math.pi**2 - 1) * math.exp(-t) * np.sin(math.pi * x), atol=1e-14)


def test_divergent_minus_nondivergent_forcing(rng):
    case = compressible_sine(1.7)
    x1, x2 = rng.uniform(0, 1, (2, 50))
    diff = derive_forcing(case, DV)(x1, x2, 0.2) - derive_forcing(case, ND)(x1, x2, 0.2)
    np.testing.assert_allclose(diff, 2 * 1.7 * case.u(x1, x2, 0.2), rtol=1e-12, atol=1e-14)
    skew = derive_forcing(case, SK)(x1, x2, 0.2)
    mean = 0.5 * (derive_forcing(case, DV)(x1, x2, 0.2) + derive_forcing(case, ND)(x1, x2, 0.2))
    np.testing.assert_allclose(skew, mean, rtol=1e-12)


def test_steady_forcing_omits_time_derivative():
    case = heat_sine_1d()
    x = np.linspace(0, 1, 7)
    steady = derive_forcing(case, ND, steady=True)(x, 0.0)
    np.testing.assert_allclose(steady, math.pi**2 * np.sin(math.pi * x), atol=1e-13)


def quadratic_case():
    z = lambda x, t: np.zeros(np.shape(x))  # noqa: E731
    fld = CoefficientField(lambda x: np.ones(np.shape(x)), lambda x, t: np.zeros(np.shape(x)), 1.0, 1.0, dim=1)
    return ManufacturedCase("quadratic", fld, u=lambda x, t: x * (1 - x), u_t=z,
                            grad=lambda x, t: (1 - 2 * x,), second=lambda x, t: (np.full(np.shape(x), -2.0),),
                            grad_k=lambda x: (np.zeros(np.shape(x)),), div_v=z, dim=1)


def test_scheme_exact_case_is_reported_exact():
    est = spatial_study(quadratic_case(), (8, 16, 32), "exponential", ND)
    assert est.exact and est.slopes == ()
    assert est.verdict() == "exact"
    assert max(est.errors) < 1e-12


def test_order_estimate_slopes():
    est = order_estimate([0.1, 0.05, 0.025], [4e-2, 1e-2, 2.5e-3])
    np.testing.assert_allclose(est.slopes, [2.0, 2.0])
    assert est.fitted_slope == pytest.approx(2.0)
    assert est.verdict() == "2.000"


def test_too_few_levels():
    with pytest.raises(PreconditionError):
        order_estimate([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(PreconditionError):
        convergence_study(lambda N: 1.0 / N, [8, 16])
    with pytest.raises(PreconditionError):
        order_estimate([0.1, 0.05, 0.025], [1.0, 0.5])


def test_single_level_warning():
    with pytest.warns(UserWarning, match="single refinement level"):
        warn_short_ladder([16])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        warn_short_ladder([16, 32])


def test_joint_refinement_central_crank_nicolson():
    case = rotating_sine(1.0)

    def run(N):
        prob, g = semi_discrete_problem(case, N, "central", SK)
        tau = 0.4 / N
        ts = integrate(SchemeSpec(Family.TWO_LEVEL, tau, 0.4, sigma=0.5, linear_solver="direct"), prob,
                       keep_solutions=False)
        return grid_error(g, ts.final, sample(g, case.u, 0.4))

    est = convergence_study(run, [8, 16, 32])
    assert 1.85 <= est.final_slope <= 2.15


def test_upwind_first_order():
    est = spatial_study(rotating_sine(1.0, 0.05), (32, 64, 128), "upwind", ND)
    assert 0.9 <= est.final_slope <= 1.1


def test_order_estimates_settle():
    for case in (rotating_sine(1.0), compressible_sine(1.0)):
        est = spatial_study(case, (8, 16, 32, 64), "central", SK)
        assert abs(est.slopes[-1] - est.slopes[-2]) <= 0.15


def test_mixed_forms_plateau():
    case = compressible_sine(1.0)
    mixed, matched = [], []
    for N in (8, 16, 32, 64):
        g = make_grid(case, N)
        A = spatial_operator(g, case.field, "central", DV)
        u = sample(g, case.u, 0.0)
        wrong = sample(g, derive_forcing(case, ND, steady=True), 0.0)
        mixed.append(grid_error(g, solve_sparse(A, wrong, method="direct"), u))
        matched.append(steady_error(case, N, "central", DV))
    assert mixed[-1] > 0.5 * mixed[0]
    assert matched[-1] < matched[0] / 30


def test_semi_discrete_problem_is_consistent():
    case = rotating_sine(2.0)
    prob, g = semi_discrete_problem(case, 8, "central", SK)
    A = prob.A_at(0.0).toarray()
    t, dt = 0.3, 1e-5
    dy = (sample(g, case.u, t + dt) - sample(g, case.u, t - dt)) / (2 * dt)
    np.testing.assert_allclose(prob.phi_at(t), dy + A @ sample(g, case.u, t), rtol=1e-8, atol=1e-8)
    split, _ = semi_discrete_problem(case, 8, "central", SK, split=True)
    assert len(split.parts) == 2 and split.D is None


def _monotone_run(form, sigma=1.0, tau=0.01, steps=50):
    g = RectGrid2D.unit_square(12)
    field = constant_field(1.0, (2.0, -1.0))  # grid Peclet 1/6: central is monotone
    D = assemble_diffusion(g, field)
    C = assemble_convection(g, field, form)
    shape = interior_shape(g)
    X = np.indices(shape).sum(0).ravel()
    u0 = np.abs(np.sin(X + 0.3))
    phi = lambda t: 1.0 + np.cos(X * t) ** 2  # noqa: E731
    prob = EvolutionProblem(u0, D=D, C=C, phi=phi, weights=g.measure)
    spec = SchemeSpec(Family.TWO_LEVEL, tau, tau * steps, sigma=sigma, linear_solver="direct")
    return integrate(spec, prob), spec, D + C


def test_monitor_linf_for_nondivergent():
    ts, spec, _ = _monotone_run(ND)
    rep = monitor_apriori(ts, "accumulation", spec.tau, norm="linf")
    assert rep.passed and rep.first_violation is None


def test_monitor_l1_for_divergent():
    ts, spec, _ = _monotone_run(DV)
    assert monitor_apriori(ts, "accumulation", spec.tau, norm="l1").passed


def test_monitor_flags_violated_stability():
    g = RectGrid2D.unit_square(12)
    D = assemble_diffusion(g, constant_field(1.0, (0.0, 0.0)))
    tau = 1.05 * banach_step_bound(D, 0.0)
    u0 = alternating_vector(interior_shape(g))
    ts = integrate(SchemeSpec(Family.TWO_LEVEL, tau, 80 * tau, sigma=0.0), EvolutionProblem(u0, D=D))
    rep = monitor_apriori(ts, "step", tau, norm="linf")
    assert not rep.passed
    assert rep.first_violation is not None
    assert rep.lhs[rep.first_violation] > rep.rhs[rep.first_violation]
    assert monitor_apriori(ts, "accumulation", tau, norm="linf").first_violation is not None


def test_monitor_unknown_estimate():
    ts, spec, _ = _monotone_run(ND, steps=2)
    with pytest.raises(ValueError):
        monitor_apriori(ts, "nonsense", spec.tau)


def test_boundary_layer_case_values():
    case = boundary_layer_1d(0.05)
    x = np.array([0.0, 1.0])
    np.testing.assert_allclose(case.u(x, 0.0), 0.0, atol=1e-14)
    assert case.field.kappa1 == 0.05
