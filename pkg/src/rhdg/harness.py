"""Convergence studies and invariant check suites behind the command line."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import legendre as npleg

from . import linsolve
from .basis import gauss_legendre, reduced_edge_mass, tri_quadrature
from .crfem import compare_edge_means, solve_cr
from .hdg import (
    SchemeConfig,
    assemble_local_blocks,
    assemble_skeleton,
    interpolate_solution,
    local_conservation_residual,
    solve,
)
from .mesh import Mesh, generate_unit_square, refine_uniform
from .norms import error_report, fit_orders, least_squares_order
from .problems import ExactSolution, get_problem, unit_load

log = logging.getLogger(__name__)

CSV_COLUMNS = ["k", "scheme", "level", "h", "dofs_skeleton", "l2", "l2_order", "h1", "h1_order", "energy", "energy_order"]


@dataclass(frozen=True)
class StudyConfig:
    ks: tuple = (1, 2, 3)
    scheme: str = "reduced"
    hybrid: str = "disc"
    s: float = 1.0
    tau0: Optional[float] = None
    levels: int = 4
    base_n: int = 14
    perturb: float = 0.15
    seed: int = 42
    problem: Union[str, ExactSolution] = "sinsin"
    out: str = "csv"

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a study needs at least 2 levels to compute orders")
        if isinstance(self.problem, str):
            get_problem(self.problem)

    def exact(self) -> ExactSolution:
        return get_problem(self.problem) if isinstance(self.problem, str) else self.problem

    def scheme_config(self, k: int) -> SchemeConfig:
        p = self.exact()
        return SchemeConfig(k=k, scheme=self.scheme, hybrid=self.hybrid, s=self.s, tau0=self.tau0,
                            source=p.f, dirichlet=p.g)


@dataclass
class StudyRow:
    k: int
    scheme: str
    level: int
    h: float
    dofs_skeleton: int
    l2: float
    h1: float
    energy: float
    l2_order: Optional[float] = None
    h1_order: Optional[float] = None
    energy_order: Optional[float] = None
    # diagnostics outside the CSV layout
    conservation: float = float("nan")
    solver: str = ""
    negative_eigenvalues: Optional[int] = None
    report: object = None
    report_hi: object = None


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list = field(default_factory=list)

    def for_k(self, k: int) -> list:
        return [r for r in self.rows if r.k == k]

    def ls_orders(self, k: int) -> dict:
        rows = self.for_k(k)
        hs = [r.h for r in rows]
        return {
            "l2": least_squares_order(hs, [r.l2 for r in rows]),
            "h1": least_squares_order(hs, [r.h1 for r in rows]),
            "energy": least_squares_order(hs, [r.energy for r in rows]),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.k, r.scheme, r.level, f"{r.h:.6e}", r.dofs_skeleton, f"{r.l2:.6e}", _order(r.l2_order),
                        f"{r.h1:.6e}", _order(r.h1_order), f"{r.energy:.6e}", _order(r.energy_order)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        cfg = self.config
        lines = [
            f"Convergence history: scheme={cfg.scheme}, hybrid={cfg.hybrid}, s={cfg.s:g}, problem={_problem_name(cfg)}",
            "",
            "| method | l | h | DOFs | L2 error | order | H1 error | order | energy error | order |",
            "|---|---|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            label = _method_label(r.k, cfg.scheme) if r.level == 1 else ""
            lines.append(
                f"| {label} | {r.level} | {r.h:.4e} | {r.dofs_skeleton} | {r.l2:.4E} | {_order(r.l2_order, '--')} "
                f"| {r.h1:.4E} | {_order(r.h1_order, '--')} | {r.energy:.4E} | {_order(r.energy_order, '--')} |"
            )
        return "\n".join(lines) + "\n"

    def render(self, fmt: Optional[str] = None) -> str:
        fmt = fmt or self.config.out
        if fmt == "csv":
            return self.to_csv()
        if fmt == "md":
            return self.to_markdown()
        raise ValueError(f"unknown output format {fmt!r}")


def _order(x: Optional[float], blank: str = "") -> str:
    return blank if x is None else f"{x:.2f}"


def _method_label(k: int, scheme: str) -> str:
    return f"P{k}P{k - 1}" if scheme == "reduced" else f"P{k}P{k}"


def _problem_name(cfg: StudyConfig) -> str:
    return cfg.problem if isinstance(cfg.problem, str) else cfg.problem.name


def level_meshes(levels: int, base_n: int = 14, perturb: float = 0.15, seed: int = 42) -> Iterator[Mesh]:
    """Base mesh followed by successive uniform refinements."""
    mesh = generate_unit_square(base_n, perturb, seed=seed)
    for lev in range(levels):
        yield mesh
        if lev + 1 < levels:
            mesh = refine_uniform(mesh)


def run_study(config: StudyConfig, quadrature_check: bool = False) -> StudyResult:
    """One solve per level and degree; orders between consecutive levels.

    With ``quadrature_check`` the errors are also evaluated with a rule
    exact to degree ``2k + 10`` (stored in ``report_hi``).
    """
    exact = config.exact()
    result = StudyResult(config=config)
    meshes = list(level_meshes(config.levels, config.base_n, config.perturb, config.seed))
    for k in config.ks:
        scfg = config.scheme_config(k)
        rows = []
        for lev, mesh in enumerate(meshes, start=1):
            try:
                sol = solve(scfg, mesh)
            except Exception as exc:
                raise RuntimeError(f"k={k}, level {lev}: {exc}") from exc
            rep = error_report(sol, exact)
            row = StudyRow(k=k, scheme=config.scheme, level=lev, h=rep.h, dofs_skeleton=rep.dofs_skeleton,
                           l2=rep.l2, h1=rep.h1, energy=rep.energy, report=rep,
                           conservation=float(local_conservation_residual(sol).max()), solver=sol.solver,
                           negative_eigenvalues=sol.meta.get("negative_eigenvalues"))
            if quadrature_check:
                row.report_hi = error_report(sol, exact, degree=2 * k + 10)
            log.info("k=%d level=%d h=%.4e dofs=%d l2=%.4e h1=%.4e", k, lev, rep.h, rep.dofs_skeleton, rep.l2, rep.h1)
            rows.append(row)
        hs = [r.h for r in rows]
        for name in ("l2", "h1", "energy"):
            for r, o in zip(rows, fit_orders(hs, [getattr(r, name) for r in rows])):
                setattr(r, f"{name}_order", o)
        result.rows.extend(rows)
    return result


# ---------------------------------------------------------------------------
# invariant checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.3e} tolerance={self.tolerance:.1e} {self.detail}".rstrip()


def _check(name, measured, tol, detail="") -> CheckResult:
    return CheckResult(name, bool(measured <= tol), float(measured), tol, detail)


def quadrature_identity_deviation(k: int, pairs: int = 1000, seed: int = 0) -> float:
    """Max of |G_k[f g] - int P_{k-1} f P_{k-1} g| / (1 + |G_k[f g]|) over random f, g in P^k.

    The reference side uses numpy's Legendre series evaluation, a (k+2)-point
    rule and an explicit projection.
    """
    rng = np.random.default_rng(seed)
    rule = gauss_legendre(k + 2)
    x, w = rule.points, rule.weights
    # standard Legendre P_m, orthonormalised by sqrt((2m+1)/2)
    norms = np.sqrt((2 * np.arange(k + 1) + 1) / 2.0)
    P = np.stack([npleg.legval(x, np.eye(k + 1)[m]) * norms[m] for m in range(k + 1)], axis=1)
    worst = 0.0
    for _ in range(pairs):
        f, g = rng.standard_normal(k + 1), rng.standard_normal(k + 1)
        fv, gv = P @ f, P @ g
        # explicit projection onto span(P_0..P_{k-1})
        pf = P[:, :k] @ (P[:, :k].T @ (w * fv))
        pg = P[:, :k] @ (P[:, :k].T @ (w * gv))
        ref = float(np.dot(w, pf * pg))
        got = reduced_edge_mass(k, f, g)
        worst = max(worst, abs(got - ref) / (1.0 + abs(got)))
    return worst


def coercivity_identity_deviation(k: int, mesh: Mesh, pairs: int = 100, seed: int = 1, tau0: float = 1.0) -> float:
    """Relative gap between B_h(v, v) from assembled blocks and |v|_{1,h}^2 + stabilisation for s = -1.

    The right side is computed independently: gradients at quadrature points
    and explicit L2 projection of the edge jump.
    """
    cfg = SchemeConfig(k=k, s=-1.0, tau0=tau0)
    local = assemble_local_blocks(cfg, mesh)
    M = np.concatenate([np.concatenate([local.A, local.B], 2), np.concatenate([local.Bt, local.D], 2)], 1)
    rng = np.random.default_rng(seed)
    l = cfg.hybrid_degree
    worst = 0.0
    for _ in range(pairs):
        v = rng.standard_normal((mesh.num_triangles, cfg.n_elem))
        vhat = rng.standard_normal((mesh.num_edges, l + 1))
        vhat[mesh.boundary] = 0.0
        x = np.concatenate([v, vhat[mesh.triangle_edges].reshape(mesh.num_triangles, -1)], axis=1)
        lhs = float(np.einsum("ti,tij,tj->", x, M, x))
        rhs = _grad_norm_sq(cfg, mesh, v) + _stab_norm_sq(cfg, mesh, v, vhat)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return worst


def _grad_norm_sq(cfg: SchemeConfig, mesh: Mesh, v: np.ndarray) -> float:
    from .basis import TriBasis

    basis = TriBasis(cfg.k)
    rule = tri_quadrature(2 * cfg.k)
    g = np.einsum("tac,qia,ti->tqc", mesh.inverse_jacobians, basis.grads(rule.points), v)
    return float(np.sum(2.0 * mesh.areas[:, None] * rule.weights[None, :] * np.sum(g**2, axis=-1)))


def _stab_norm_sq(cfg: SchemeConfig, mesh: Mesh, v: np.ndarray, vhat: np.ndarray) -> float:
    """sum_K sum_e tau_e ||P_{k-1}(vhat - v)||^2_e by explicit projection on physical edges."""
    from .basis import TriBasis

    basis = TriBasis(cfg.k)
    k, l = cfg.k, cfg.hybrid_degree
    rule = gauss_legendre(k + 2)
    t = rule.points
    total = 0.0
    norms = np.sqrt((2 * np.arange(max(k, l + 1)) + 1) / 2.0)
    L = np.stack([npleg.legval(t, np.eye(len(norms))[m]) * norms[m] for m in range(len(norms))], axis=1)
    for j in range(3):
        a = mesh.nodes[mesh.triangles[:, j]]
        b = mesh.nodes[mesh.triangles[:, (j + 1) % 3]]
        e = mesh.triangle_edges[:, j]
        length = mesh.edge_lengths[e]
        tau = cfg.tau / length
        # physical points along the local direction, mapped back to the reference element
        x = 0.5 * (a + b)[:, None, :] + 0.5 * t[None, :, None] * (b - a)[:, None, :]
        xi = np.einsum("tab,tqb->tqa", mesh.inverse_jacobians, x - mesh.nodes[mesh.triangles[:, 0]][:, None, :])
        vals = np.einsum("tqi,ti->tq", basis.values(xi.reshape(-1, 2)).reshape(len(xi), len(t), -1), v)
        # hybrid in global orientation: parameter flips when the local direction disagrees
        sgn = mesh.triangle_edge_signs[:, j]
        tg = sgn[:, None] * t[None, :]
        Lg = np.stack([npleg.legval(tg, np.eye(l + 1)[m]) * norms[m] for m in range(l + 1)], axis=-1)
        hv = np.einsum("tqm,tm->tq", Lg, vhat[e])
        jump = hv - vals
        coeffs = np.einsum("q,qm,tq->tm", rule.weights, L[:, :k], jump)  # projection onto P^{k-1}
        total += float(np.sum(tau * 0.5 * length * np.sum(coeffs**2, axis=1)))
    return total


SUITES = ("quadrature-identity", "conservation", "cr-equivalence", "symmetry", "coercivity-s-neg", "patch-exactness")


def run_checks(suite: str, base_n: int = 14, perturb: float = 0.15, seed: int = 42) -> list:
    """Run one named invariant suite; returns a list of :class:`CheckResult`."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    meshes = list(level_meshes(3, base_n, perturb, seed))
    sinsin = get_problem("sinsin")
    out = []
    if suite == "quadrature-identity":
        for k in range(1, 6):
            out.append(_check(f"quadrature-identity k={k}", quadrature_identity_deviation(k), 1e-12, "1000 random pairs"))
    elif suite == "conservation":
        for k in (1, 2, 3):
            sol = solve(SchemeConfig(k=k, source=sinsin.f), meshes[2])
            out.append(_check(f"conservation k={k} level=3", float(local_conservation_residual(sol).max()), 1e-10))
    elif suite == "cr-equivalence":
        for fname, f in (("f=1", unit_load), ("f=sinsin", sinsin.f)):
            for lev, mesh in enumerate(meshes, start=1):
                cr = solve_cr(mesh, f)
                worst = max(compare_edge_means(solve(SchemeConfig(k=1, tau0=t0, source=f), mesh), cr)
                            for t0 in (1.0, 10.0, 100.0))
                out.append(_check(f"cr-equivalence {fname} level={lev}", worst, 1e-9, "tau0 in {1,10,100}"))
    elif suite == "symmetry":
        for scheme in ("reduced", "standard"):
            for k in (1, 2, 3):
                cfg = SchemeConfig(k=k, scheme=scheme, source=sinsin.f)
                system = assemble_skeleton(cfg, meshes[0])
                out.append(_check(f"symmetry {scheme} k={k}", system.operator.asymmetry(), 1e-12))
                info = linsolve.KrylovInfo(0, 0.0)
                try:
                    linsolve.cg(system.operator, system.rhs, tol=1e-12, maxiter=20 * system.n, info=info)
                    out.append(_check(f"cg positive curvature {scheme} k={k}", info.residual, 1e-12,
                                      f"{info.iterations} iterations"))
                except linsolve.SolverError as exc:
                    out.append(CheckResult(f"cg positive curvature {scheme} k={k}", False, float("inf"), 1e-12, str(exc)))
    elif suite == "coercivity-s-neg":
        for k in (1, 2, 3):
            out.append(_check(f"coercivity s=-1 k={k}", coercivity_identity_deviation(k, meshes[0]), 1e-11,
                              "100 random pairs"))
    elif suite == "patch-exactness":
        cases = [(get_problem("poly-patch"), k, sch) for k in (2, 3) for sch in ("reduced", "standard")]
        cases += [(get_problem("linear"), k, sch) for k in (1, 2, 3) for sch in ("reduced", "standard")]
        for prob, k, sch in cases:
            out.append(_check(f"patch-exactness {prob.name} k={k} {sch}", patch_error(prob, k, sch, meshes[0]), 1e-9))
    return out


def patch_error(problem: ExactSolution, k: int, scheme: str, mesh: Mesh) -> float:
    """Max coefficient error of the discrete solution against the interpolated polynomial."""
    cfg = SchemeConfig(k=k, scheme=scheme, source=problem.f, dirichlet=problem.g)
    sol = solve(cfg, mesh)
    ref = interpolate_solution(cfg, mesh, problem.u)
    return float(max(np.abs(sol.u - ref.u).max(), np.abs(sol.uhat - ref.uhat).max()))


def format_checks(results: Sequence[CheckResult]) -> str:
    return "\n".join(r.line() for r in results) + "\n"
