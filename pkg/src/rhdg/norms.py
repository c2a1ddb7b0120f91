"""Mesh-dependent error norms and convergence-order fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .basis import gauss_legendre, legendre_values, tri_quadrature
from .hdg import HdgSolution, SchemeConfig, _orientation, edge_parametrisation, reference_data
from .mesh import Mesh
from .problems import ExactSolution


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    h1: float  # broken H1 seminorm
    h2: float  # h_K-weighted broken H2 seminorm
    jump: float
    edge_mean: float  # max over edges of |mean(uhat_h) - mean(u)|
    dofs_skeleton: int
    h: float

    @property
    def energy(self) -> float:
        return math.sqrt(self.h1**2 + self.h2**2 + self.jump**2)


def jump_seminorm_squared(solution: HdgSolution, config: SchemeConfig | None = None,
                          mesh: Mesh | None = None) -> np.ndarray:
    """Per-element sum over sides of h_e^-1 ||P_{k-1}(uhat - u)||^2."""
    cfg = config or solution.config
    mesh = mesh or solution.mesh
    k = cfg.k
    ref = reference_data(cfg)
    er = ref.edge_rule  # exact for trace * psi_{k-1}
    psi = legendre_values(er.points, k - 1)
    # projection coefficients of element traces onto P^{k-1}, local orientation
    trace = np.einsum("q,qm,jqi,ti->tjm", er.weights, psi, ref.phi_edge, solution.u)
    orient = _orientation(mesh, cfg.hybrid_degree)
    uhat = (solution.uhat[mesh.triangle_edges] * orient)[..., :k]
    diff = np.zeros_like(trace)
    diff[..., : uhat.shape[-1]] += uhat
    diff -= trace
    # ||.||^2_e = (|e|/2) sum c_m^2, weighted by 1/|e|
    return 0.5 * np.einsum("tjm->t", diff**2)


def error_report(solution: HdgSolution, exact: ExactSolution, config: SchemeConfig | None = None,
                 mesh: Mesh | None = None, degree: Optional[int] = None) -> ErrorReport:
    """Errors of the discrete pair against an exact solution.

    Volume integrals use a triangle rule exact to ``degree`` (default
    ``2k + 6``).
    """
    cfg = config or solution.config
    mesh = mesh or solution.mesh
    k = cfg.k
    degree = 2 * k + 6 if degree is None else degree
    basis = reference_data(cfg).basis
    rule = tri_quadrature(degree)
    phi = basis.values(rule.points)
    gref = basis.grads(rule.points)
    href = basis.hessians(rule.points)
    Jinv = mesh.inverse_jacobians
    detJ = 2.0 * mesh.areas
    xq = mesh.to_physical(rule.points)
    x, y = xq[..., 0], xq[..., 1]
    c = solution.u

    shape = x.shape
    e0 = exact.u(x, y) * np.ones(shape) - np.einsum("qi,ti->tq", phi, c)
    ux, uy = exact.grad(x, y)
    gh = np.einsum("tac,qia,ti->tqc", Jinv, gref, c)
    e1 = np.stack([ux * np.ones(shape), uy * np.ones(shape)], -1) - gh
    hxx, hxy, hyy = exact.hess(x, y)
    Hu = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2) * np.ones(shape)[..., None, None]
    Hh = np.einsum("tac,qiab,tbd,ti->tqcd", Jinv, href, Jinv, c)
    e2 = Hu - Hh

    w = rule.weights
    l2_K = detJ * np.einsum("q,tq->t", w, e0**2)
    h1_K = detJ * np.einsum("q,tqc->t", w, e1**2)
    h2_K = detJ * np.einsum("q,tqcd->t", w, e2**2) * mesh.diameters**2
    jump_K = jump_seminorm_squared(solution, cfg, mesh)

    # edge means of the hybrid unknown against the exact solution
    er = gauss_legendre(k + 4)
    xe = edge_parametrisation(mesh, np.arange(mesh.num_edges), er.points)
    umean = 0.5 * (exact.u(xe[..., 0], xe[..., 1]) * np.ones(xe.shape[:2])) @ er.weights
    hmean = solution.uhat[:, 0] / math.sqrt(2.0)
    return ErrorReport(
        l2=math.sqrt(l2_K.sum()),
        h1=math.sqrt(h1_K.sum()),
        h2=math.sqrt(h2_K.sum()),
        jump=math.sqrt(jump_K.sum()),
        edge_mean=float(np.abs(hmean - umean).max()),
        dofs_skeleton=int(solution.n_skeleton),
        h=mesh.h,
    )


def fit_orders(hs: Sequence[float], errors: Sequence[float]) -> list[Optional[float]]:
    """Per-step orders log(e_{l-1}/e_l) / log(h_{l-1}/h_l); first entry None.

    Steps with a non-positive error (or equal mesh sizes) are marked None.
    """
    if len(hs) != len(errors):
        raise ValueError("hs and errors must have equal length")
    out: list[Optional[float]] = [None]
    for i in range(1, len(hs)):
        e0, e1, h0, h1 = errors[i - 1], errors[i], hs[i - 1], hs[i]
        if e0 > 0 and e1 > 0 and h0 > 0 and h1 > 0 and h0 != h1:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            out.append(None)
    return out


def least_squares_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Slope of the least-squares line through (log h, log e)."""
    h = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 2 or np.any(e <= 0) or np.any(h <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])
