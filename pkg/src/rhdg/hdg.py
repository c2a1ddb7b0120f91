"""Hybridized DG assembly, static condensation and solution recovery.

Element unknowns live in the orthonormal ``TriBasis`` of degree ``k`` on each
triangle. Hybrid unknowns are orthonormal Legendre coefficients on each edge,
referred to the global edge orientation (lower node index first). For the
reduced scheme the hybrid degree is ``k - 1`` and the stabilisation only sees
the ``P_{k-1}`` projection of the trace jump; for the standard scheme the
hybrid degree is ``k`` and the full jump is penalised.

All per-element work is vectorised over the element axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .basis import (
    TriBasis,
    edge_points_reference,
    gauss_legendre,
    legendre_values,
    tri_quadrature,
)
from .mesh import Mesh

log = logging.getLogger(__name__)

SCHEMES = ("reduced", "standard")
HYBRIDS = ("disc", "cont")
SOLVERS = ("auto", "krylov", "dense", "direct")


class CondensationError(linsolve.SolverError):
    """An element block could not be inverted."""

    def __init__(self, element: int, cond: float):
        super().__init__(
            f"element {element}: local block is singular or ill-conditioned (cond={cond:.3e}); "
            "tau0 may be too small or the element degenerate"
        )
        self.element = element


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class SchemeConfig:
    """Discretisation parameters.

    ``tau0`` sets the stabilisation ``tau = tau0 / h_e`` on each edge and
    defaults to ``10 (l + 1)^2`` with ``l`` the hybrid degree, i.e. ``10 k^2``
    for the reduced scheme and ``10 (k + 1)^2`` for the standard one. ``source`` and ``dirichlet`` are vectorised
    callables ``f(x, y)``; ``dirichlet=None`` means homogeneous data.
    ``stab_route`` selects how the reduced stabilisation is integrated:
    ``"gauss"`` (k-point Gauss-Legendre rule) or ``"projection"`` (explicit
    edge projection).
    """

    k: int = 1
    scheme: str = "reduced"
    hybrid: str = "disc"
    s: float = 1.0
    tau0: Optional[float] = None
    source: Callable = _zero
    dirichlet: Optional[Callable] = None
    stab_route: str = "gauss"
    load_degree: Optional[int] = None
    dense_threshold: int = 3000
    solver: str = "auto"
    tol: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("element degree k must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.hybrid not in HYBRIDS:
            raise ValueError(f"hybrid must be one of {HYBRIDS}")
        if self.tau0 is not None and not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.stab_route not in ("gauss", "projection"):
            raise ValueError("stab_route must be 'gauss' or 'projection'")
        if self.hybrid == "cont" and self.hybrid_degree < 1:
            raise ValueError("continuous hybrid space needs hybrid degree >= 1")

    @property
    def tau(self) -> float:
        return float(self.tau0) if self.tau0 is not None else 10.0 * (self.hybrid_degree + 1) ** 2

    @property
    def hybrid_degree(self) -> int:
        return self.k - 1 if self.scheme == "reduced" else self.k

    @property
    def n_elem(self) -> int:
        return (self.k + 1) * (self.k + 2) // 2

    @property
    def n_edge(self) -> int:
        return self.hybrid_degree + 1

    @property
    def volume_degree(self) -> int:
        return self.load_degree if self.load_degree is not None else 2 * self.k + 2


# ---------------------------------------------------------------------------
# reference tensors


@dataclass(frozen=True)
class _Reference:
    basis: TriBasis
    vol_rule: object
    phi_vol: np.ndarray  # (q, nK)
    stiff: np.ndarray  # (2, 2, nK, nK): sum_q w dphi_i/da dphi_j/db
    cons_elem: np.ndarray  # (3, 2, nK, nK): E[j,a,i,jj] = int_-1^1 phi_i d_a phi_jj
    cons_hyb: np.ndarray  # (3, 2, nE, nK): H[j,a,m,i] = int psi_m d_a phi_i
    stab_ee: np.ndarray  # (3, nK, nK)
    stab_eh: np.ndarray  # (3, nK, nE)
    stab_hh: np.ndarray  # (nE, nE)
    edge_rule: object  # consistency/flux rule, exact to degree 2k+1
    phi_edge: np.ndarray  # (3, q, nK)
    grad_edge: np.ndarray  # (3, q, nK, 2)
    psi_edge: np.ndarray  # (q, nE) in local orientation


@lru_cache(maxsize=None)
def _reference(k: int, l: int, scheme: str, route: str, vol_degree: int) -> _Reference:
    basis = TriBasis(k)
    nE = l + 1
    vol = tri_quadrature(vol_degree)
    phi_vol = basis.values(vol.points)
    stiff_rule = tri_quadrature(max(2 * k - 2, 0))
    g = basis.grads(stiff_rule.points)
    stiff = np.einsum("q,qia,qjb->abij", stiff_rule.weights, g, g)

    er = gauss_legendre(k + 1)
    psi = legendre_values(er.points, l)
    phi_e = np.stack([basis.values(edge_points_reference(er.points, j)) for j in range(3)])
    grad_e = np.stack([basis.grads(edge_points_reference(er.points, j)) for j in range(3)])
    cons_elem = np.einsum("q,jqi,jqka->jaik", er.weights, phi_e, grad_e)
    cons_hyb = np.einsum("q,qm,jqia->jami", er.weights, psi, grad_e)

    if scheme == "reduced" and route == "gauss":
        sr = gauss_legendre(k)
        ps = legendre_values(sr.points, l)
        phs = np.stack([basis.values(edge_points_reference(sr.points, j)) for j in range(3)])
        stab_ee = np.einsum("q,jqi,jqk->jik", sr.weights, phs, phs)
        stab_eh = np.einsum("q,jqi,qm->jim", sr.weights, phs, ps)
        stab_hh = np.einsum("q,qm,qn->mn", sr.weights, ps, ps)
    elif scheme == "reduced":
        # explicit projection of element traces onto P^{k-1}
        proj = np.einsum("q,qm,jqi->jmi", er.weights, psi, phi_e)  # (3, nE, nK)
        stab_ee = np.einsum("jmi,jmk->jik", proj, proj)
        stab_eh = np.transpose(proj, (0, 2, 1)).copy()
        stab_hh = np.eye(nE)
    else:
        stab_ee = np.einsum("q,jqi,jqk->jik", er.weights, phi_e, phi_e)
        stab_eh = np.einsum("q,jqi,qm->jim", er.weights, phi_e, psi)
        stab_hh = np.einsum("q,qm,qn->mn", er.weights, psi, psi)
    return _Reference(
        basis=basis,
        vol_rule=vol,
        phi_vol=phi_vol,
        stiff=stiff,
        cons_elem=cons_elem,
        cons_hyb=cons_hyb,
        stab_ee=stab_ee,
        stab_eh=stab_eh,
        stab_hh=stab_hh,
        edge_rule=er,
        phi_edge=phi_e,
        grad_edge=grad_e,
        psi_edge=psi,
    )


def reference_data(config: SchemeConfig) -> _Reference:
    return _reference(config.k, config.hybrid_degree, config.scheme, config.stab_route, config.volume_degree)


def _orientation(mesh: Mesh, l: int, tris=slice(None)) -> np.ndarray:
    """(T, 3, nE) factors sign**m converting local-orientation coefficients to global."""
    sgn = mesh.triangle_edge_signs[tris].astype(float)
    return sgn[..., None] ** np.arange(l + 1)


# ---------------------------------------------------------------------------
# local systems


@dataclass
class LocalSystem:
    """Blocks of the element-local bilinear form and load.

    Rows of ``A``/``B`` are element test functions, rows of ``Bt``/``D`` are
    hybrid test functions on the three local edges (global orientation).
    Leading axis indexes elements when several are assembled together.
    """

    A: np.ndarray
    B: np.ndarray
    Bt: np.ndarray
    D: np.ndarray
    F: np.ndarray
    dofs: np.ndarray
    elements: np.ndarray

    def matrix(self, i: int = 0) -> np.ndarray:
        A, B, Bt, D = (X[i] if X.ndim == 3 else X for X in (self.A, self.B, self.Bt, self.D))
        return np.block([[A, B], [Bt, D]])


def assemble_local_blocks(config: SchemeConfig, mesh: Mesh, elements=None) -> LocalSystem:
    """Assemble local blocks for the given elements (all by default)."""
    ref = reference_data(config)
    tris = np.arange(mesh.num_triangles) if elements is None else np.atleast_1d(np.asarray(elements, dtype=np.int64))
    k, l = config.k, config.hybrid_degree
    nK, nE = config.n_elem, config.n_edge
    s, tau0 = config.s, config.tau
    T = len(tris)

    detJ = 2.0 * mesh.areas[tris]
    if np.any(detJ <= 0.0):
        bad = tris[np.flatnonzero(detJ <= 0.0)[0]]
        raise CondensationError(int(bad), np.inf)
    Jinv = mesh.inverse_jacobians[tris]
    metric = np.einsum("tac,tbc->tab", Jinv, Jinv)
    half_len = 0.5 * mesh.edge_lengths[mesh.triangle_edges[tris]]  # (T, 3)
    tau = tau0 / (2.0 * half_len)
    gvec = np.einsum("tab,tjb->tja", Jinv, mesh.local_normals[tris])  # Jinv @ n, (T, 3, 2)
    orient = _orientation(mesh, l, tris)  # (T, 3, nE)

    A = detJ[:, None, None] * np.einsum("tab,abij->tij", metric, ref.stiff)
    cons = np.einsum("tja,jaik->tjik", gvec, ref.cons_elem)  # int (n.grad phi_k) phi_i
    A -= np.einsum("tj,tjik->tik", half_len, cons + s * np.transpose(cons, (0, 1, 3, 2)))
    A += np.einsum("tj,jik->tik", half_len * tau, ref.stab_ee)

    hyb = np.einsum("tja,jami->tjmi", gvec, ref.cons_hyb)  # int psi_m (n.grad phi_i)
    stab_eh = np.einsum("tj,jim->tjim", half_len * tau, ref.stab_eh)
    B = s * half_len[..., None, None] * np.transpose(hyb, (0, 1, 3, 2)) - stab_eh  # (T, 3, nK, nE)
    Bt = half_len[..., None, None] * hyb - np.transpose(stab_eh, (0, 1, 3, 2))  # (T, 3, nE, nK)
    B = B * orient[:, :, None, :]
    Bt = Bt * orient[:, :, :, None]
    B = np.transpose(B, (0, 2, 1, 3)).reshape(T, nK, 3 * nE)
    Bt = Bt.reshape(T, 3 * nE, nK)

    D = np.zeros((T, 3, nE, 3, nE))
    for j in range(3):
        D[:, j, :, j, :] = (half_len[:, j] * tau[:, j])[:, None, None] * ref.stab_hh * (
            orient[:, j, :, None] * orient[:, j, None, :]
        )
    D = D.reshape(T, 3 * nE, 3 * nE)

    xq = mesh.to_physical(ref.vol_rule.points, tris)
    fq = np.asarray(config.source(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(xq.shape[:2])
    F = detJ[:, None] * np.einsum("q,tq,qi->ti", ref.vol_rule.weights, fq, ref.phi_vol)

    dofs = hybrid_dof_map(config, mesh)[0][tris]
    return LocalSystem(A=A, B=B, Bt=Bt, D=D, F=F, dofs=dofs, elements=tris)


def local_assemble(config: SchemeConfig, mesh: Mesh, element: int) -> LocalSystem:
    """Local blocks of a single element (leading element axis dropped)."""
    if not 0 <= element < mesh.num_triangles:
        raise IndexError(f"element {element} out of range")
    loc = assemble_local_blocks(config, mesh, [element])
    return LocalSystem(A=loc.A[0], B=loc.B[0], Bt=loc.Bt[0], D=loc.D[0], F=loc.F[0], dofs=loc.dofs[0],
                       elements=loc.elements)


# ---------------------------------------------------------------------------
# hybrid degrees of freedom


def _cont_nodes(l: int) -> np.ndarray:
    # endpoints first (node a at t=-1, node b at t=+1), then interior nodes in order
    interior = np.linspace(-1.0, 1.0, l + 1)[1:-1]
    return np.concatenate([[-1.0, 1.0], interior])


@lru_cache(maxsize=None)
def _cont_transform(l: int) -> np.ndarray:
    """Legendre coefficients from nodal values on an edge: c = Q @ g."""
    V = legendre_values(_cont_nodes(l), l)
    return np.linalg.inv(V)


def hybrid_dof_map(config: SchemeConfig, mesh: Mesh):
    """Global hybrid DOF indices per element and the edge-to-DOF table.

    Returns ``(element_dofs (T, 3*nE), edge_dofs (E, nE), n_total)``.
    """
    nE = config.n_edge
    E = mesh.num_edges
    if config.hybrid == "disc":
        edge_dofs = np.arange(E * nE).reshape(E, nE)
        n_total = E * nE
    else:
        l = config.hybrid_degree
        N = mesh.num_nodes
        interior = N + np.arange(E * (l - 1)).reshape(E, l - 1)
        edge_dofs = np.column_stack([mesh.edges[:, 0], mesh.edges[:, 1], interior])
        n_total = N + E * (l - 1)
    elem_dofs = edge_dofs[mesh.triangle_edges].reshape(mesh.num_triangles, 3 * nE)
    return elem_dofs, edge_dofs, n_total


def edge_transform(config: SchemeConfig) -> np.ndarray:
    """Map from an edge's DOF values to its Legendre coefficients (global orientation)."""
    if config.hybrid == "disc":
        return np.eye(config.n_edge)
    return _cont_transform(config.hybrid_degree)


def edge_parametrisation(mesh: Mesh, edges, t):
    """Physical points (len(edges), len(t), 2) for parameters t on globally oriented edges."""
    a = mesh.nodes[mesh.edges[edges, 0]]
    b = mesh.nodes[mesh.edges[edges, 1]]
    t = np.asarray(t, dtype=float)
    return 0.5 * (a + b)[:, None, :] + 0.5 * t[None, :, None] * (b - a)[:, None, :]


def boundary_values(config: SchemeConfig, mesh: Mesh):
    """Indices and values of the hybrid DOFs fixed by Dirichlet data."""
    _, edge_dofs, n_total = hybrid_dof_map(config, mesh)
    bedges = np.flatnonzero(mesh.boundary)
    fixed = np.unique(edge_dofs[bedges])
    values = np.zeros(n_total)
    g = config.dirichlet
    if g is not None and len(bedges):
        l = config.hybrid_degree
        if config.hybrid == "disc":
            rule = gauss_legendre(l + 6)
            x = edge_parametrisation(mesh, bedges, rule.points)
            gv = np.asarray(g(x[..., 0], x[..., 1]), dtype=float) * np.ones(x.shape[:2])
            coeffs = np.einsum("q,qm,eq->em", rule.weights, legendre_values(rule.points, l), gv)
            values[edge_dofs[bedges]] = coeffs
        else:
            x = edge_parametrisation(mesh, bedges, _cont_nodes(l))
            gv = np.asarray(g(x[..., 0], x[..., 1]), dtype=float) * np.ones(x.shape[:2])
            values[edge_dofs[bedges]] = gv
    return fixed, values[fixed]


# ---------------------------------------------------------------------------
# condensation


@dataclass
class Condensed:
    """Schur complement blocks and recovery data, stacked over elements."""

    S: np.ndarray  # (T, 3nE, 3nE)
    G: np.ndarray  # (T, 3nE)
    AinvB: np.ndarray  # (T, nK, 3nE)
    AinvF: np.ndarray  # (T, nK)
    elements: np.ndarray

    def recover(self, uhat_local: np.ndarray) -> np.ndarray:
        """Element coefficients u = A^-1 (F - B uhat)."""
        return self.AinvF - np.einsum("tij,tj->ti", self.AinvB, uhat_local)


COND_LIMIT = 1e12


def condense(local: LocalSystem, check: bool = True) -> Condensed:
    """Eliminate element unknowns: S = D - Bt A^-1 B, G = -Bt A^-1 F."""
    A, B, Bt, D, F = local.A, local.B, local.Bt, local.D, local.F
    single = A.ndim == 2
    if single:
        A, B, Bt, D, F = A[None], B[None], Bt[None], D[None], F[None]
    elems = np.atleast_1d(local.elements)
    if check:
        cond = np.linalg.cond(A)
        bad = np.flatnonzero(~(cond < COND_LIMIT))
        if bad.size:
            raise CondensationError(int(elems[bad[0]]), float(cond[bad[0]]))
    X = np.linalg.solve(A, np.concatenate([B, F[..., None]], axis=-1))
    AinvB, AinvF = X[..., :-1], X[..., -1]
    S = D - Bt @ AinvB
    G = -np.einsum("tij,tj->ti", Bt, AinvF)
    return Condensed(S=S, G=G, AinvB=AinvB, AinvF=AinvF, elements=elems)


# ---------------------------------------------------------------------------
# global system


@dataclass
class SkeletonSystem:
    operator: linsolve.SparseOperator  # free-free block
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_total: int
    condensed: Condensed
    element_dofs: np.ndarray  # (T, 3nE) global hybrid DOFs
    edge_dofs: np.ndarray
    transform: np.ndarray

    @property
    def n(self) -> int:
        return len(self.free)


def _to_dof_space(cond: Condensed, Q: np.ndarray):
    """Express condensed blocks in the hybrid DOF basis: c_local = blockdiag(Q) g."""
    nE = Q.shape[0]
    if np.array_equal(Q, np.eye(nE)):
        return cond.S, cond.G
    Qb = np.kron(np.eye(3), Q)
    return Qb.T @ cond.S @ Qb, cond.G @ Qb


def assemble_skeleton(config: SchemeConfig, mesh: Mesh) -> SkeletonSystem:
    """Condense every element and sum the Schur blocks over the hybrid DOFs."""
    local = assemble_local_blocks(config, mesh)
    cond = condense(local)
    elem_dofs, edge_dofs, n_total = hybrid_dof_map(config, mesh)
    Q = edge_transform(config)
    S, G = _to_dof_space(cond, Q)
    m = elem_dofs.shape[1]
    rows = np.repeat(elem_dofs, m, axis=1).ravel()
    cols = np.tile(elem_dofs, (1, m)).ravel()
    full = sp.coo_matrix((S.ravel(), (rows, cols)), shape=(n_total, n_total)).tocsr()
    full.sum_duplicates()
    rhs_full = np.bincount(elem_dofs.ravel(), weights=G.ravel(), minlength=n_total)

    fixed, gvals = boundary_values(config, mesh)
    is_free = np.ones(n_total, dtype=bool)
    is_free[fixed] = False
    free = np.flatnonzero(is_free)
    Aff = full[free][:, free]
    rhs = rhs_full[free]
    if len(fixed) and np.any(gvals != 0.0):
        rhs = rhs - full[free][:, fixed] @ gvals
    return SkeletonSystem(
        operator=linsolve.SparseOperator.from_matrix(Aff),
        rhs=rhs,
        free=free,
        fixed=fixed,
        fixed_values=gvals,
        n_total=n_total,
        condensed=cond,
        element_dofs=elem_dofs,
        edge_dofs=edge_dofs,
        transform=Q,
    )


@dataclass
class HdgSolution:
    """Element coefficients ``u`` (T, nK) and hybrid Legendre coefficients ``uhat`` (E, nE).

    ``uhat`` refers to the global edge orientation and holds the Dirichlet
    data on boundary edges. ``dofs`` is the full hybrid DOF vector.
    """

    config: SchemeConfig
    mesh: Mesh
    u: np.ndarray
    uhat: np.ndarray
    dofs: np.ndarray
    n_skeleton: int
    solver: str = ""
    iterations: int = 0
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def local_hybrid(self, tris=slice(None)) -> np.ndarray:
        """Hybrid coefficients per element in (T, 3*nE) global-orientation layout."""
        return self.uhat[self.mesh.triangle_edges[tris]].reshape(-1, 3 * self.config.n_edge)


def solve_skeleton(system: SkeletonSystem, config: SchemeConfig):
    """Solve the condensed system; returns ``(x, method, iterations, backward_error)``.

    Below ``dense_threshold`` unknowns a dense LU is used. Above it,
    ``solver="auto"`` uses sparse LU and ``solver="krylov"`` uses Jacobi-CG
    for ``s = 1`` and TFQMR otherwise, to relative residual ``tol``.
    """
    op, b = system.operator, system.rhs
    n = system.n
    if n == 0:
        return np.zeros(0), "none", 0, 0.0
    params = f"k={config.k}, scheme={config.scheme}, s={config.s}, tau0={config.tau}, dofs={n}"
    hint = "; try a larger tau0" if config.s == 1 else ""
    its = 0
    method = config.solver
    if method == "auto" or method == "krylov":
        if n < config.dense_threshold:
            method = "dense"
        elif method == "auto":
            method = "direct"
    try:
        if method == "dense":
            x = linsolve.solve_dense(linsolve.factor_dense(op.toarray()), b)
        elif method == "direct":
            x = linsolve.sparse_direct(op, b)
        else:
            info = linsolve.KrylovInfo(0, 0.0)
            maxiter = int(20 * np.sqrt(n))
            if config.s == 1:
                x = linsolve.cg(op, b, tol=config.tol, maxiter=maxiter, info=info)
                method = "cg"
            else:
                x = linsolve.krylov_nonsym(op, b, tol=config.tol, maxiter=maxiter, info=info)
                method = "tfqmr"
            its = info.iterations
    except linsolve.SolverError as exc:
        raise linsolve.SolverError(f"skeleton solve failed ({params}): {exc}{hint}") from exc
    berr = linsolve.backward_error(op, x, b)
    if not berr <= config.tol:
        raise linsolve.SolverError(f"skeleton solve inaccurate ({params}): backward error {berr:.2e}{hint}")
    return x, method, its, berr


def solve(config: SchemeConfig, mesh: Mesh, check_definite: bool = True) -> HdgSolution:
    """Assemble, condense, solve for the hybrid unknowns and recover element unknowns.

    For ``s = 1`` the inertia of the condensed operator is recorded in
    ``meta["negative_eigenvalues"]`` (zero when it is positive definite).
    """
    system = assemble_skeleton(config, mesh)
    x, method, its, res = solve_skeleton(system, config)
    log.debug("skeleton solve: %s, n=%d, iterations=%d, residual=%.2e", method, system.n, its, res)
    sol = _finish(config, mesh, system, x, method, its, res)
    if config.s == 1 and check_definite:
        neg = linsolve.negative_eigenvalue_count(system.operator)
        sol.meta["negative_eigenvalues"] = neg
        if neg:
            log.warning("condensed operator has %d negative eigenvalues (k=%d, scheme=%s, tau0=%g); "
                        "tau0 is below the coercivity threshold", neg, config.k, config.scheme, config.tau)
    return sol


def _finish(config, mesh, system: SkeletonSystem, x, method="", its=0, res=0.0) -> HdgSolution:
    dofs = np.zeros(system.n_total)
    dofs[system.free] = x
    dofs[system.fixed] = system.fixed_values
    uhat = dofs[system.edge_dofs] @ system.transform.T
    local = uhat[mesh.triangle_edges].reshape(mesh.num_triangles, -1)
    u = system.condensed.recover(local)
    return HdgSolution(config=config, mesh=mesh, u=u, uhat=uhat, dofs=dofs, n_skeleton=system.n,
                       solver=method, iterations=its, residual=res)


def interpolate_solution(config: SchemeConfig, mesh: Mesh, exact: Callable) -> HdgSolution:
    """Discrete pair built from a function: element L2 projections and edge projections."""
    ref = reference_data(config)
    rule = tri_quadrature(2 * config.k + 6)
    phi = ref.basis.values(rule.points)
    xq = mesh.to_physical(rule.points)
    uq = exact(xq[..., 0], xq[..., 1]) * np.ones(xq.shape[:2])
    # orthonormal basis on the reference triangle: mass matrix is detJ * I
    u = np.einsum("q,tq,qi->ti", rule.weights, uq, phi)
    l = config.hybrid_degree
    er = gauss_legendre(l + 6)
    xe = edge_parametrisation(mesh, np.arange(mesh.num_edges), er.points)
    ue = exact(xe[..., 0], xe[..., 1]) * np.ones(xe.shape[:2])
    uhat = np.einsum("q,qm,eq->em", er.weights, legendre_values(er.points, l), ue)
    return HdgSolution(config=config, mesh=mesh, u=u, uhat=uhat, dofs=np.zeros(0), n_skeleton=0)


# ---------------------------------------------------------------------------
# uncondensed system


def assemble_full(config: SchemeConfig, mesh: Mesh):
    """Uncondensed global system over ``[element coefficients; free hybrid DOFs]``.

    Returns ``(matrix (csr), rhs, free hybrid DOF indices)``; Dirichlet data
    is moved to the right-hand side.
    """
    local = assemble_local_blocks(config, mesh)
    elem_dofs, _, n_total = hybrid_dof_map(config, mesh)
    Q = edge_transform(config)
    Qb = np.kron(np.eye(3), Q)
    B = local.B @ Qb
    Bt = np.einsum("ji,tjk->tik", Qb, local.Bt)
    D = np.einsum("ji,tjk,kl->til", Qb, local.D, Qb)
    T, nK = local.F.shape
    n_el = T * nK
    eid = np.arange(n_el).reshape(T, nK)
    hid = n_el + elem_dofs
    blocks = [(eid, eid, local.A), (eid, hid, B), (hid, eid, Bt), (hid, hid, D)]
    rows, cols, vals = [], [], []
    for r, c, v in blocks:
        rows.append(np.repeat(r, c.shape[1], axis=1).ravel())
        cols.append(np.tile(c, (1, r.shape[1])).ravel())
        vals.append(v.ravel())
    n = n_el + n_total
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    rhs[:n_el] = local.F.ravel()
    fixed, gvals = boundary_values(config, mesh)
    keep = np.ones(n, dtype=bool)
    keep[n_el + fixed] = False
    idx = np.flatnonzero(keep)
    rhs_red = rhs[idx] - M[idx][:, n_el + fixed] @ gvals
    free = np.setdiff1d(np.arange(n_total), fixed)
    return M[idx][:, idx], rhs_red, free


def full_residual(solution: HdgSolution) -> float:
    """Relative residual of the pair in the uncondensed system."""
    M, rhs, free = assemble_full(solution.config, solution.mesh)
    x = np.concatenate([solution.u.ravel(), solution.dofs[free]])
    r = M @ x - rhs
    return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), np.linalg.norm(M @ x), 1e-300))


# ---------------------------------------------------------------------------
# flux and conservation


def _locate(mesh: Mesh, element: int, edge: int, point, tol: float = 1e-10):
    j = np.flatnonzero(mesh.triangle_edges[element] == edge)
    if not j.size:
        raise ValueError(f"edge {edge} is not an edge of element {element}")
    j = int(j[0])
    a, b = mesh.nodes[mesh.edges[edge]]
    p = np.asarray(point, dtype=float)
    d = b - a
    L2 = d @ d
    t = 2.0 * ((p - a) @ d) / L2 - 1.0
    off = abs(d[0] * (p - a)[1] - d[1] * (p - a)[0]) / np.sqrt(L2)
    if off > tol * np.sqrt(L2) or not -1.0 - tol <= t <= 1.0 + tol:
        raise ValueError(f"point {tuple(p)} is not on edge {edge}")
    return j, float(t)


def numerical_flux(solution: HdgSolution, element: int, edge: int, point) -> np.ndarray:
    """Evaluate grad u_h + tau (uhat_h - u_h) n at a point of an element edge."""
    mesh, cfg = solution.mesh, solution.config
    j, t = _locate(mesh, element, edge, point)
    ref = reference_data(cfg)
    xi = mesh.inverse_jacobians[element] @ (np.asarray(point, float) - mesh.nodes[mesh.triangles[element, 0]])
    phi = ref.basis.values(xi[None])[0]
    grad = mesh.inverse_jacobians[element].T @ (ref.basis.grads(xi[None])[0].T @ solution.u[element])
    uh = phi @ solution.u[element]
    uhat = legendre_values(np.array([t]), cfg.hybrid_degree)[0] @ solution.uhat[edge]
    n = mesh.local_normals[element, j]
    tau = cfg.tau / mesh.edge_lengths[edge]
    return grad + tau * (uhat - uh) * n


def boundary_flux_integrals(solution: HdgSolution) -> np.ndarray:
    """Per-element integral of the numerical flux dotted with the outward normal."""
    mesh, cfg = solution.mesh, solution.config
    ref = reference_data(cfg)
    er = ref.edge_rule
    half_len = 0.5 * mesh.edge_lengths[mesh.triangle_edges]
    tau = cfg.tau / (2.0 * half_len)
    gvec = np.einsum("tab,tjb->tja", mesh.inverse_jacobians, mesh.local_normals)
    dn = np.einsum("tja,jqia,ti->tjq", gvec, ref.grad_edge, solution.u)
    u_tr = np.einsum("jqi,ti->tjq", ref.phi_edge, solution.u)
    orient = _orientation(mesh, cfg.hybrid_degree)
    uhat_loc = solution.uhat[mesh.triangle_edges] * orient  # local orientation coefficients
    uhat_tr = np.einsum("qm,tjm->tjq", ref.psi_edge, uhat_loc)
    integrand = dn + tau[..., None] * (uhat_tr - u_tr)
    return np.einsum("tj,q,tjq->t", half_len, er.weights, integrand)


def source_integrals(config: SchemeConfig, mesh: Mesh) -> np.ndarray:
    ref = reference_data(config)
    xq = mesh.to_physical(ref.vol_rule.points)
    fq = np.asarray(config.source(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(xq.shape[:2])
    return 2.0 * mesh.areas * (fq @ ref.vol_rule.weights)


def local_conservation_residual(solution: HdgSolution, config: SchemeConfig | None = None,
                                mesh: Mesh | None = None, element=None):
    """|int_dK flux.n + int_K f| / (1 + |int_K f|), per element or for one element."""
    config = config or solution.config
    mesh = mesh or solution.mesh
    flux = boundary_flux_integrals(solution)
    fint = source_integrals(config, mesh)
    res = np.abs(flux + fint) / (1.0 + np.abs(fint))
    return res if element is None else float(res[element])
