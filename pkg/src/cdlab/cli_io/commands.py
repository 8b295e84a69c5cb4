"""``solve``, ``analyze`` and ``converge`` commands and the argument parser."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from ..core_grid import Grid1D, RectGrid2D
from ..errors import CdlabError, ConfigError, MeshInputError, StepError
from ..exponential_schemes import exp_operator_2d, gamma_constant
from ..fd_operators import (assemble_convection, assemble_diffusion, assemble_upwind_convection,
                            directional_operators, interior_coords, interior_shape, operator_constants)
from ..fields import (CoefficientField, CoefficientPlacement, ConvectionForm, compressible_velocity,
                      rotating_velocity)
from ..linalg import SolverOptions
from ..monotone_fd import (Regularizer, RegularizerKind, build_divergent_scheme, build_nondivergent_scheme,
                           check_maximum_principle, peclet_field)
from ..stability_lab import (banach_step_bound, check_diag_dominance, check_m_matrix, check_operator_inequality,
                             check_samarskii, check_weight_condition)
from ..time_schemes import EvolutionProblem, Family, ReactionField, SchemeSpec, TimeSeries, integrate
from ..unstructured_fvm import (TriMesh, build_fvm_scheme, check_fvm_monotone, face_peclet, friedrichs_constant,
                                fvm_convection, fvm_diffusion, fvm_upwind_convection, random_mesh, read_mesh)
from ..verify import (CASES, grid_error, order_estimate, sample, semi_discrete_problem, steady_error,
                      warn_short_ladder)
from .config import ProblemConfig, case_parameters, load_config
from .expr import Expression

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FAILURE = 2
DENSE_ANALYSIS_LIMIT = 2000
BUILTIN_VELOCITIES = {"rotating": rotating_velocity, "compressible": compressible_velocity}


def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else ("" if v is None else v) for v in row])


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything a command needs: the space, coefficients and the ODE system."""

    cfg: ProblemConfig
    space: Any  # Grid1D, RectGrid2D or TriMesh
    field: CoefficientField
    form: ConvectionForm
    problem: EvolutionProblem
    spec: SchemeSpec
    coords: tuple[np.ndarray, ...]  # interior node coordinates, flattened

    @property
    def is_mesh(self) -> bool:
        return isinstance(self.space, TriMesh)

    def operator(self, t: float = 0.0) -> sp.csr_matrix:
        return self.problem.A_at(t)


def _field(cfg: ProblemConfig, dim: int) -> CoefficientField:
    k: Expression = cfg.get("coefficients", "k")
    v1: Expression = cfg.get("coefficients", "v1")
    v2: Expression = cfg.get("coefficients", "v2")
    k1, k2 = cfg.get("coefficients", "kappa1"), cfg.get("coefficients", "kappa2")
    if k1 is None:
        if not k.is_constant:
            raise cfg.error("coefficients", "k", "a variable k needs its lower bound kappa1")
        k1 = float(k())
    if k2 is None:
        k2 = float(k()) if k.is_constant else math.inf
    if "t" in k.variables:
        raise cfg.error("coefficients", "k", "k may not depend on t")
    builtin = cfg.get("coefficients", "velocity")
    if builtin is not None:
        make = BUILTIN_VELOCITIES[builtin]
        velocity = make(cfg.get("coefficients", "omega"))
    else:
        def velocity(x1, x2, t):
            return v1(x1, x2, t), v2(x1, x2, t)
    try:
        if dim == 1:
            return CoefficientField(lambda x: k(x), lambda x, t: v1(x, 0.0, t), k1, k2, dim=1)
        return CoefficientField(lambda x1, x2: k(x1, x2), velocity, k1, k2)
    except CdlabError as exc:
        raise cfg.error("coefficients", "kappa1", str(exc)) from exc


def _space(cfg: ProblemConfig, seed: int):
    kind = cfg.get("domain", "kind")
    if kind == "interval":
        return Grid1D(cfg.get("domain", "l1"), cfg.get("domain", "n1"))
    if kind == "rect":
        return RectGrid2D(cfg.get("domain", "l1"), cfg.get("domain", "l2"), cfg.get("domain", "n1"),
                          cfg.get("domain", "n2"))
    if kind == "random_mesh":
        return random_mesh(cfg.get("domain", "n_side"), seed, cfg.get("domain", "l1"), cfg.get("domain", "l2"),
                           cfg.get("domain", "jitter"))
    path = Path(cfg.get("domain", "mesh"))
    try:
        return read_mesh(path)
    except OSError as exc:
        raise cfg.error("domain", "mesh", f"cannot read mesh file {str(path)!r}: {exc.strerror or exc}") from exc


def _spec(cfg: ProblemConfig) -> SchemeSpec:
    g = lambda key: cfg.get("scheme", key)  # noqa: E731
    try:
        return SchemeSpec(Family(g("family")), g("tau"), g("T"), sigma=g("sigma"), sigma1=g("sigma1"),
                          sigma2=g("sigma2"), m=g("m"), convection_form=g("form"), placement=g("placement"),
                          linear_solver=g("solver"), opts=SolverOptions())
    except CdlabError as exc:
        raise cfg.error("scheme", "family", str(exc)) from exc


def build_setup(cfg: ProblemConfig, seed: int = 0) -> Setup:
    """Translate a validated configuration into a space, coefficients and an ODE system."""
    space = _space(cfg, seed)
    is_mesh = isinstance(space, TriMesh)
    dim = 1 if isinstance(space, Grid1D) else 2
    fld = _field(cfg, dim)
    form = ConvectionForm(cfg.get("scheme", "form"))
    placement = CoefficientPlacement(cfg.get("scheme", "placement"))
    scheme = cfg.get("scheme", "space")
    spec = _spec(cfg)
    split = spec.family in (Family.LOD, Family.ADDITIVE_AVG)
    v_moves = any("t" in cfg.get("coefficients", key).variables for key in ("v1", "v2"))

    if is_mesh:
        pts = space.nodes[space.interior_nodes]
        coords = (pts[:, 0], pts[:, 1])
        weights = space.measure
        shape = None
    else:
        coords = tuple(c.ravel() for c in interior_coords(space))
        weights = space.measure
        shape = interior_shape(space)
    x1 = coords[0]
    x2 = coords[1] if len(coords) > 1 else np.zeros_like(x1)

    if scheme == "upwind" and form is ConvectionForm.SKEW:
        raise cfg.error("scheme", "form", "upwind differencing needs form = nondivergent or divergent")
    if scheme == "exponential" and (is_mesh or form is ConvectionForm.SKEW):
        raise cfg.error("scheme", "space", "exponential operators need a grid and a nondivergent or divergent form")
    if split and is_mesh:
        raise cfg.error("scheme", "family", "splitting schemes need a tensor grid")

    def convection(t: float):
        if is_mesh:
            return (fvm_upwind_convection(space, fld, form, t) if scheme == "upwind"
                    else fvm_convection(space, fld, form, t))
        if scheme == "upwind":
            return assemble_upwind_convection(space, fld, form, t)
        return assemble_convection(space, fld, form, placement, t)

    def parts(t: float):
        if scheme == "exponential":
            return exp_operator_2d(space, fld, form, t)
        return tuple(directional_operators(space, fld, form, placement, t, upwind=scheme == "upwind"))

    f_expr: Expression = cfg.get("coefficients", "f")
    phi = None if (f_expr.is_constant and float(f_expr()) == 0.0) else (lambda t: f_expr(x1, x2, t))
    r_expr = cfg.get("coefficients", "r")
    reaction = None if r_expr is None else ReactionField(lambda t: r_expr(x1, x2, t))
    u0 = cfg.get("coefficients", "u0")(x1, x2, 0.0)

    try:
        if scheme == "exponential" or split:
            P = (lambda t: parts(t)) if v_moves else parts(0.0)
            plist = tuple((lambda t, a=a: P(t)[a]) for a in range(dim)) if v_moves else P
            problem = EvolutionProblem(u0, reaction=reaction, phi=phi, parts=plist, weights=weights, shape=shape)
        else:
            D = fvm_diffusion(space, fld) if is_mesh else assemble_diffusion(space, fld)
            C = convection if v_moves else convection(0.0)
            if not v_moves and C.count_nonzero() == 0:
                C = None  # keeps pure diffusion on the symmetric solver
            problem = EvolutionProblem(u0, D=D, C=C, reaction=reaction, phi=phi, weights=weights, shape=shape)
    except CdlabError as exc:
        raise cfg.error("coefficients", "k", str(exc)) from exc
    if spec.family in (Family.EXPLICIT_IMPLICIT, Family.THREE_LEVEL) and problem.D is None:
        raise cfg.error("scheme", "family", f"{spec.family.value} needs a diffusion/convection split "
                                            "(space = central or upwind)")
    return Setup(cfg, space, fld, form, problem, spec, coords)


# gates --------------------------------------------------------------------

def stability_gate(setup: Setup) -> tuple[bool, str]:
    """Evaluate the configured stability gate; returns ``(passed, certificate text)``."""
    gate = setup.cfg.get("scheme", "gate")
    spec = setup.spec
    if gate == "none":
        return True, "gate: none\n"
    A = setup.operator(spec.time_point(0))
    s = spec.sigma
    w = setup.problem.weights
    if gate == "samarskii":
        E = sp.identity(A.shape[0], format="csr")
        try:
            rep = check_samarskii(E + s * spec.tau * A, A, spec.tau, w)
            bound = "B >= tau/2 A with B = E + sigma tau A"
        except CdlabError:
            rep = check_weight_condition(A, s, spec.tau, w)
            bound = "A + (sigma - 1/2) tau A*A >= 0"
        text = (f"gate: samarskii\nbound: {bound}\nverdict: {rep.verdict.upper()}\n"
                f"min_eigenvalue: {fmt(rep.min_eigenvalue)}\n")
        return rep.passed, text
    rows = check_diag_dominance(A, "rows")
    cols = check_diag_dominance(A, "columns")
    dominant = rows.passed or cols.passed
    tau_max = banach_step_bound(A, s)
    ok = dominant and spec.tau <= tau_max * (1 + 1e-12)
    orient = ", ".join(name for name, rep in (("rows", rows), ("columns", cols)) if rep.passed) or "none"
    text = (f"gate: {gate}\nbound: tau <= 1/((1 - sigma) max a_ii)\ntau: {fmt(spec.tau)}\n"
            f"tau_max: {fmt(tau_max)}\ndiagonally_dominant: {orient}\n")
    if gate == "monotone":
        E = sp.identity(A.shape[0], format="csr")
        mm = check_m_matrix(E + s * spec.tau * A)
        ok = ok and mm.passed
        text += f"m_matrix: {mm.verdict} ({mm.reason})\n"
        if mm.witness is not None:
            text += f"m_matrix_witness: {mm.witness[0]} {mm.witness[1]}\n"
    text += f"verdict: {'PASS' if ok else 'FAIL'}\n"
    return ok, text


# solve --------------------------------------------------------------------

def _snapshot_rows(setup: Setup, solutions: list[np.ndarray]) -> tuple[list[str], list[list[Any]]]:
    coords = setup.coords
    names = ["x1", "x2"][: len(coords)]
    if len(solutions) == 1:
        header = names + ["value"]
    else:
        header = names + [f"t={setup.spec.tau * n:.12g}" for n in range(len(solutions))]
    rows = [[float(c[i]) for c in coords] + [float(s[i]) for s in solutions] for i in range(len(coords[0]))]
    return header, rows


def write_series(path: Path, ts: TimeSeries) -> None:
    norm_keys = list(ts.norms)
    mon_keys = list(ts.monitors)
    header = ["step", "t"] + norm_keys + mon_keys
    rows = []
    for n, t in enumerate(ts.t):
        row = [n, float(t)] + [float(ts.norms[k][n]) for k in norm_keys]
        for k in mon_keys:
            vals = ts.monitors[k]
            off = len(ts.t) - len(vals)  # step monitors start at level 1
            row.append(float(vals[n - off]) if n - off >= 0 else None)
        rows.append(row)
    write_csv(path, header, rows)


def cmd_solve(cfg: ProblemConfig, out: Path, seed: int = 0, quiet: bool = False) -> int:
    setup = build_setup(cfg, seed)
    ok, cert = stability_gate(setup)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificate.txt").write_text(cert)
    if not ok:
        _say(quiet, f"stability gate violated; see {out / 'certificate.txt'}")
        return EXIT_FAILURE
    snap = cfg.get("output", "snapshots")
    monitors = tuple(cfg.get("output", "monitors"))
    status = EXIT_OK
    try:
        ts = integrate(setup.spec, setup.problem, monitors=monitors, keep_solutions=snap == "all")
    except StepError as exc:
        ts = getattr(exc, "series", TimeSeries())
        (out / "failure.txt").write_text(f"step: {exc.step}\nerror: {exc.cause}\n")
        _say(quiet, f"step {exc.step} failed: {exc.cause}")
        status = EXIT_FAILURE
    write_series(out / "series.csv", ts)
    if snap != "none" and ts.solutions:
        sols = ts.solutions if snap == "all" else [ts.solutions[-1]]
        header, rows = _snapshot_rows(setup, sols)
        write_csv(out / ("snapshots.csv" if snap == "all" else "solution.csv"), header, rows)
    if status == EXIT_OK:
        _say(quiet, f"{setup.spec.n_steps} steps to T = {fmt(setup.spec.T)}; results in {out}")
    return status


# analyze ------------------------------------------------------------------

def _maximum_principle(setup: Setup) -> tuple[str, str]:
    scheme = setup.cfg.get("scheme", "space")
    if setup.is_mesh:
        fvm = build_fvm_scheme(setup.space, setup.field, setup.form, upwind=scheme == "upwind")
        cert = check_fvm_monotone(fvm)
        where = "" if cert.witness is None else f" at face {cert.witness.node} ({cert.witness.coefficient})"
        return cert.verdict, where
    if scheme in ("central", "upwind") and setup.form is not ConvectionForm.SKEW:
        reg = Regularizer(RegularizerKind.UPWIND if scheme == "upwind" else RegularizerKind.NONE)
        build = build_divergent_scheme if setup.form is ConvectionForm.DIVERGENT else build_nondivergent_scheme
        cert = check_maximum_principle(build(setup.space, setup.field, reg))
        where = "" if cert.witness is None else (f" at node {cert.witness.node} ({cert.witness.coefficient} = "
                                                 f"{fmt(cert.witness.value)})")
        return cert.verdict, where
    mm = check_m_matrix(setup.operator())
    where = "" if mm.witness is None else f" at entry {mm.witness} ({mm.reason})"
    return ("m-matrix" if mm.passed else "fail"), where


def analyze_report(setup: Setup, seed: int = 0) -> list[tuple[str, str]]:
    rng = np.random.default_rng(seed)
    out: list[tuple[str, str]] = []
    A = setup.operator()
    n = A.shape[0]
    w = setup.problem.measure
    spec = setup.spec
    verdict, where = _maximum_principle(setup)
    out.append(("maximum_principle", f"{verdict.upper() if verdict == 'fail' else verdict}{where}"))
    if setup.is_mesh:
        pe = face_peclet(setup.space, setup.field)
        out.append(("peclet_max", fmt(float(pe.max(initial=0.0)))))
        out.append(("peclet_faces_above_2", str(int(np.sum(pe > 2)))))
    else:
        thetas = peclet_field(setup.space, setup.field)
        for a, th in enumerate(thetas):
            out.append((f"peclet_max_{a + 1}", fmt(float(2 * np.max(np.abs(th), initial=0.0)))))
        out.append(("peclet_nodes_above_2", str(int(sum(np.sum(2 * np.abs(th) > 2) for th in thetas)))))
    split = spec.family in (Family.LOD, Family.ADDITIVE_AVG)
    if split:
        variant = "additive" if spec.family is Family.ADDITIVE_AVG else "per-direction"
        gamma = gamma_constant(setup.problem.parts_at(0.0), variant)
    else:
        gamma = float(A.diagonal().max())
    out.append(("gamma", fmt(gamma)))
    out.append(("tau_max", fmt(banach_step_bound(sigma=spec.sigma, gamma=gamma))))
    rows, cols = check_diag_dominance(A, "rows"), check_diag_dominance(A, "columns")
    out.append(("diagonal_dominance", ", ".join(k for k, r in (("rows", rows), ("columns", cols)) if r.passed) or
                "none"))
    # convection operator identities
    if setup.is_mesh:
        C1 = fvm_convection(setup.space, setup.field, ConvectionForm.NONDIVERGENT)
        C2 = fvm_convection(setup.space, setup.field, ConvectionForm.DIVERGENT)
        C0 = fvm_convection(setup.space, setup.field, ConvectionForm.SKEW)
    else:
        pl = CoefficientPlacement(setup.cfg.get("scheme", "placement"))
        C1 = assemble_convection(setup.space, setup.field, ConvectionForm.NONDIVERGENT, pl)
        C2 = assemble_convection(setup.space, setup.field, ConvectionForm.DIVERGENT, pl)
        C0 = assemble_convection(setup.space, setup.field, ConvectionForm.SKEW, pl)
    W = sp.diags(w)
    scale = max(abs(W @ C2).max(), 1e-300)
    out.append(("adjointness_residual", fmt(float(abs(W @ C1 + (W @ C2).T).max() / scale))))
    skew = 0.0
    for _ in range(20):
        y = rng.standard_normal(n)
        skew = max(skew, abs(float(np.dot(w * (C0 @ y), y))) / float(np.dot(w * y, y)))
    out.append(("skew_residual", fmt(skew)))
    D = setup.problem.D
    if D is not None and n <= DENSE_ANALYSIS_LIMIT:
        lo = check_operator_inequality(D, "D >= 0", w).min_eigenvalue
        hi = -check_operator_inequality(-D, "-D >= 0", w).min_eigenvalue
        out.append(("diffusion_eigen_min", fmt(lo)))
        out.append(("diffusion_eigen_max", fmt(hi)))
        if not setup.is_mesh:
            c = operator_constants(setup.space, setup.field)
            out.append(("diffusion_lower_bound", fmt(setup.field.kappa1 * c.M0)))
            out.append(("diffusion_upper_bound", fmt(c.M3)))
    if setup.is_mesh:
        mesh: TriMesh = setup.space
        out.append(("friedrichs_constant", fmt(friedrichs_constant(mesh))))
        sums = np.zeros(mesh.n_nodes)
        np.add.at(sums, mesh.edges[:, 0], mesh.l * mesh.d)
        np.add.at(sums, mesh.edges[:, 1], mesh.l * mesh.d)
        closed = mesh.interior_closed
        audit = np.abs(sums - 4 * mesh.V)[closed] / mesh.V[closed]
        out.append(("ld_4V_audit_max_rel", fmt(float(audit.max(initial=0.0)))))
        out.append(("ld_4V_audit_cells", str(closed.size)))
    _, gate_text = stability_gate(setup)
    for line in gate_text.strip().splitlines():
        key, _, val = line.partition(":")
        out.append((f"gate_{key.strip()}" if key.strip() != "gate" else "gate", val.strip()))
    return out


def cmd_analyze(cfg: ProblemConfig, out: Path, seed: int = 0, quiet: bool = False) -> int:
    setup = build_setup(cfg, seed)
    report = analyze_report(setup, seed)
    text = "".join(f"{k}: {v}\n" for k, v in report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificates.txt").write_text(text)
    _say(quiet, text.rstrip())
    return EXIT_OK


# converge -----------------------------------------------------------------

def cmd_converge(cfg: ProblemConfig, out: Path, seed: int = 0, quiet: bool = False) -> int:
    if not cfg.has("converge"):
        raise ConfigError("converge needs a [converge] section")
    case = CASES[cfg.get("converge", "case")](**case_parameters(cfg))
    kind = cfg.get("converge", "kind")
    norm = cfg.get("converge", "norm")
    scheme = cfg.get("scheme", "space")
    form = ConvectionForm(cfg.get("scheme", "form"))
    placement = CoefficientPlacement(cfg.get("scheme", "placement"))
    rows = []
    if kind == "space":
        levels = cfg.get("converge", "levels")
        if not levels:
            raise cfg.error("converge", "kind", "a spatial study needs 'levels'")
        errors = [steady_error(case, N, scheme, form, norm, placement) for N in levels]
        params = [1.0 / N for N in levels]
        taus = [None] * len(levels)
    else:
        taus = cfg.get("converge", "taus")
        if not taus:
            raise cfg.error("converge", "kind", "a temporal study needs 'taus'")
        base = _spec(cfg)
        N = cfg.get("converge", "N")
        split = base.family in (Family.LOD, Family.ADDITIVE_AVG)
        prob, grid = semi_discrete_problem(case, N, scheme, form, split, placement)
        errors = []
        for tau in taus:
            spec = SchemeSpec(base.family, tau, base.T, base.sigma, base.sigma1, base.sigma2, base.m,
                              linear_solver=base.linear_solver)
            ts = integrate(spec, prob, keep_solutions=False)
            errors.append(grid_error(grid, ts.final, sample(grid, case.u, spec.T), norm))
        params = list(taus)
        levels = list(range(len(taus)))
    if len(errors) < 2:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            warn_short_ladder(levels)
        for wmsg in caught:
            print(f"warning: {wmsg.message}", file=sys.stderr)
        slopes: tuple = ()
    else:
        slopes = order_estimate(params, errors, min_levels=1).slopes
    for i, e in enumerate(errors):
        h = params[i] if kind == "space" else 1.0 / cfg.get("converge", "N")
        tau = taus[i] if kind == "time" else None
        slope = slopes[i - 1] if i >= 1 and slopes else None
        rows.append([i, float(h), None if tau is None else float(tau), float(e), slope])
    write_csv(out / "convergence.csv", ["level", "h", "tau", "error", "slope"], rows)
    _say(quiet, "\n".join(f"level {r[0]}: error {fmt(r[3])}" + ("" if r[4] is None else f", slope {r[4]:.4f}")
                          for r in rows))
    return EXIT_OK


# entry point --------------------------------------------------------------

def _say(quiet: bool, text: str) -> None:
    if not quiet:
        print(text)


COMMANDS = {"solve": cmd_solve, "analyze": cmd_analyze, "converge": cmd_converge}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdlab", description="Convection-diffusion schemes: solve, analyze, converge.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="configuration file")
    p.add_argument("--out", default="cdlab-out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for random meshes and probes")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, Path(args.out), args.seed, args.quiet)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MeshInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
