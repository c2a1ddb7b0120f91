import math

import numpy as np
import pytest

from rhdg import linsolve
from rhdg.basis import TriBasis, gauss_legendre, legendre_values
from rhdg.harness import coercivity_identity_deviation
from rhdg.hdg import (
    CondensationError,
    SchemeConfig,
    assemble_full,
    assemble_local_blocks,
    assemble_skeleton,
    condense,
    full_residual,
    interpolate_solution,
    local_assemble,
    local_conservation_residual,
    numerical_flux,
    solve,
)
from rhdg.mesh import Mesh, generate_unit_square
from rhdg.problems import get_problem


@pytest.fixture
def ref_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def _constant_state(cfg, c):
    u = np.zeros(cfg.n_elem)
    u[0] = c / math.sqrt(2.0)  # first orthonormal basis function is sqrt(2)
    uhat = np.zeros((3, cfg.n_edge))
    uhat[:, 0] = c * math.sqrt(2.0)  # first Legendre function is 1/sqrt(2)
    return np.concatenate([u, uhat.ravel()])


@pytest.mark.parametrize("scheme", ["reduced", "standard"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_local_matrix_symmetric_and_kills_constants(ref_triangle, scheme, k):
    cfg = SchemeConfig(k=k, scheme=scheme, s=1.0)
    M = local_assemble(cfg, ref_triangle, 0).matrix()
    assert np.abs(M - M.T).max() <= 1e-13 * np.abs(M).max()
    assert np.abs(M @ _constant_state(cfg, 2.5)).max() <= 1e-13 * np.abs(M).max()


def _p0_jump_oracle(mesh):
    """Sum over edges of (1/|e|) int P0(uhat - u) P0(vhat - v), built by explicit projection."""
    basis = TriBasis(1)
    r = gauss_legendre(5)
    n = 3 + 3
    S = np.zeros((n, n))
    verts = mesh.nodes[mesh.triangles[0]]
    for j in range(3):
        a, b = verts[j], verts[(j + 1) % 3]
        length = np.linalg.norm(b - a)
        x = 0.5 * (a + b) + 0.5 * r.points[:, None] * (b - a)
        xi = np.linalg.solve(mesh.jacobians[0], (x - verts[0]).T).T
        # P0 projection: mass |e|, load int g; so P0 g = mean of g
        J = np.zeros(n)
        J[:3] = -(0.5 * length * r.weights @ basis.values(xi)) / length
        J[3 + j] = 1.0 / math.sqrt(2.0)
        S += (1.0 / length) * length * np.outer(J, J)
    return S


def test_reduced_stabilisation_against_projection_oracle():
    mesh = Mesh(np.array([[0.1, 0.0], [1.2, 0.3], [0.4, 0.9]]), np.array([[0, 1, 2]]))
    M1 = local_assemble(SchemeConfig(k=1, tau0=1.0), mesh, 0).matrix()
    M2 = local_assemble(SchemeConfig(k=1, tau0=2.0), mesh, 0).matrix()
    assert np.abs((M2 - M1) - _p0_jump_oracle(mesh)).max() <= 1e-13


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("s", [1.0, -1.0])
def test_gauss_and_projection_routes_agree(small_mesh, k, s):
    a = assemble_local_blocks(SchemeConfig(k=k, s=s, stab_route="gauss"), small_mesh)
    b = assemble_local_blocks(SchemeConfig(k=k, s=s, stab_route="projection"), small_mesh)
    for name in ("A", "B", "Bt", "D"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.abs(x - y).max() <= 1e-12 * max(1.0, np.abs(x).max())


def test_condensation_recovery_satisfies_first_row(small_mesh):
    cfg = SchemeConfig(k=2, source=get_problem("sinsin").f)
    local = assemble_local_blocks(cfg, small_mesh)
    cond = condense(local)
    uhat = np.random.default_rng(0).standard_normal(local.F.shape[:1] + (local.B.shape[2],))
    u = cond.recover(uhat)
    r = np.einsum("tij,tj->ti", local.A, u) + np.einsum("tij,tj->ti", local.B, uhat) - local.F
    assert np.abs(r).max() <= 1e-12 * max(1.0, np.abs(local.F).max())
    assert np.abs(cond.S - np.swapaxes(cond.S, 1, 2)).max() <= 1e-12 * np.abs(cond.S).max()


def test_condensation_flags_singular_block(small_mesh):
    with pytest.raises(CondensationError) as err:
        condense(assemble_local_blocks(SchemeConfig(k=1, tau0=1e-14), small_mesh))
    assert err.value.element >= 0


def test_two_triangle_linear_exactness(square2):
    p = get_problem("linear")
    cfg = SchemeConfig(k=1, source=p.f, dirichlet=p.g)
    sol = solve(cfg, square2)
    ref = interpolate_solution(cfg, square2, p.u)
    assert np.abs(sol.u - ref.u).max() <= 1e-10
    # evaluate pointwise at element centroids and vertices
    basis = TriBasis(1)
    pts = np.array([[1 / 3, 1 / 3], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    xq = square2.to_physical(pts)
    uh = np.einsum("qi,ti->tq", basis.values(pts), sol.u)
    assert np.abs(uh - (xq[..., 0] + xq[..., 1])).max() <= 1e-10


@pytest.mark.parametrize("scheme, dim", [("reduced", 1), ("standard", 2)])
def test_skeleton_dimension_on_two_triangles(scheme, dim):
    assert assemble_skeleton(SchemeConfig(k=1, scheme=scheme), generate_unit_square(1)).n == dim


@pytest.mark.parametrize("k, scheme", [(1, "reduced"), (3, "reduced"), (2, "standard")])
def test_skeleton_dimension_discontinuous(small_mesh, k, scheme):
    cfg = SchemeConfig(k=k, scheme=scheme)
    n_interior = int((~small_mesh.boundary).sum())
    assert assemble_skeleton(cfg, small_mesh).n == n_interior * cfg.n_edge


@pytest.mark.parametrize("k, expected", [(2, 1), (3, 1 + 8)])
def test_skeleton_dimension_continuous(k, expected):
    # n=2 square: one interior vertex, eight interior edges
    assert assemble_skeleton(SchemeConfig(k=k, hybrid="cont"), generate_unit_square(2)).n == expected


def test_zero_data_zero_solution(small_mesh):
    sol = solve(SchemeConfig(k=2), small_mesh)
    assert not sol.u.any() and not sol.uhat.any()
    assert local_conservation_residual(sol).max() == 0.0


@pytest.mark.parametrize("k, scheme", [(2, "reduced"), (3, "reduced"), (2, "standard")])
def test_quadratic_patch(small_mesh, k, scheme):
    p = get_problem("poly-patch")
    cfg = SchemeConfig(k=k, scheme=scheme, source=p.f, dirichlet=p.g)
    sol = solve(cfg, small_mesh)
    ref = interpolate_solution(cfg, small_mesh, p.u)
    assert np.abs(sol.u - ref.u).max() <= 1e-9
    assert np.abs(sol.uhat - ref.uhat).max() <= 1e-9
    # the boundary hybrid values are the projected Dirichlet data
    assert np.abs(sol.uhat[small_mesh.boundary] - ref.uhat[small_mesh.boundary]).max() <= 1e-13


def test_continuous_hybrid_reproduces_quadratic(small_mesh):
    p = get_problem("poly-patch")
    cfg = SchemeConfig(k=3, hybrid="cont", source=p.f, dirichlet=p.g)
    sol = solve(cfg, small_mesh)
    assert np.abs(sol.u - interpolate_solution(cfg, small_mesh, p.u).u).max() <= 1e-9


def test_nonsymmetric_small_tau_solves(small_mesh):
    p = get_problem("sinsin")
    sol = solve(SchemeConfig(k=1, s=-1.0, tau0=0.1, source=p.f), small_mesh)
    assert np.all(np.isfinite(sol.u))
    assert "negative_eigenvalues" not in sol.meta


@pytest.mark.parametrize("solver", ["dense", "direct", "krylov"])
@pytest.mark.parametrize("s", [1.0, -1.0, 0.0])
def test_condensed_matches_uncondensed(small_mesh, solver, s):
    p = get_problem("sinsin")
    cfg = SchemeConfig(k=2, s=s, source=p.f, solver=solver, dense_threshold=0 if solver == "krylov" else 3000)
    sol = solve(cfg, small_mesh)
    M, rhs, free = assemble_full(cfg, small_mesh)
    x = linsolve.solve_dense(linsolve.factor_dense(M.toarray()), rhs)
    n_el = sol.u.size
    assert np.abs(x[:n_el] - sol.u.ravel()).max() <= 1e-10 * max(1.0, np.abs(x).max())
    assert np.abs(x[n_el:] - sol.dofs[free]).max() <= 1e-10 * max(1.0, np.abs(x).max())
    assert full_residual(sol) <= 1e-10


def test_default_tau_is_definite(small_mesh):
    for scheme in ("reduced", "standard"):
        for k in (1, 2, 3):
            sol = solve(SchemeConfig(k=k, scheme=scheme, source=get_problem("sinsin").f), small_mesh)
            assert sol.meta["negative_eigenvalues"] == 0


@pytest.mark.parametrize("scheme", ["reduced", "standard"])
def test_condensed_operator_symmetric(small_mesh, scheme):
    op = assemble_skeleton(SchemeConfig(k=3, scheme=scheme), small_mesh).operator
    assert op.asymmetry() <= 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_coercivity_identity_for_negative_s(small_mesh, k):
    assert coercivity_identity_deviation(k, small_mesh, pairs=100) <= 1e-11


def test_flux_of_constant_is_zero(small_mesh):
    cfg = SchemeConfig(k=2, tau0=7.0)
    sol = interpolate_solution(cfg, small_mesh, lambda x, y: 3.0 + 0 * x)
    e = small_mesh.triangle_edges[5, 1]
    a, b = small_mesh.nodes[small_mesh.edges[e]]
    assert np.abs(numerical_flux(sol, 5, e, 0.3 * a + 0.7 * b)).max() <= 1e-12


def test_flux_of_x_with_matching_trace(small_mesh):
    cfg = SchemeConfig(k=1, scheme="standard", tau0=123.0)
    sol = interpolate_solution(cfg, small_mesh, lambda x, y: x)
    for t in (0, 9, 17):
        for j in range(3):
            e = small_mesh.triangle_edges[t, j]
            a, b = small_mesh.nodes[small_mesh.edges[e]]
            assert numerical_flux(sol, t, e, 0.5 * (a + b)) == pytest.approx([1.0, 0.0], abs=1e-12)


def test_flux_random_against_direct_evaluation(small_mesh):
    rng = np.random.default_rng(2)
    cfg = SchemeConfig(k=2, tau0=3.0)
    sol = solve(cfg, small_mesh)
    sol.u = rng.standard_normal(sol.u.shape)
    sol.uhat = rng.standard_normal(sol.uhat.shape)
    basis = TriBasis(2)
    t, j = 11, 2
    e = small_mesh.triangle_edges[t, j]
    a, b = small_mesh.nodes[small_mesh.edges[e]]  # global orientation, a first
    param = 0.35
    p = 0.5 * (a + b) + 0.5 * param * (b - a)
    verts = small_mesh.nodes[small_mesh.triangles[t]]
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    xi = np.linalg.solve(J, p - verts[0])
    grad = np.linalg.inv(J).T @ (basis.grads(xi[None])[0].T @ sol.u[t])
    uh = basis.values(xi[None])[0] @ sol.u[t]
    uhat = legendre_values(np.array([param]), 1)[0] @ sol.uhat[e]
    v1, v2 = verts[j], verts[(j + 1) % 3]
    d = v2 - v1
    n = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    expected = grad + 3.0 / np.linalg.norm(d) * (uhat - uh) * n
    assert numerical_flux(sol, t, e, p) == pytest.approx(expected, abs=1e-12)


def test_flux_rejects_point_off_edge(small_mesh):
    sol = solve(SchemeConfig(k=1), small_mesh)
    e = small_mesh.triangle_edges[0, 0]
    with pytest.raises(ValueError):
        numerical_flux(sol, 0, e, small_mesh.nodes[small_mesh.triangles[0]].mean(axis=0))
    other = int(np.setdiff1d(np.arange(small_mesh.num_edges), small_mesh.triangle_edges[0])[0])
    with pytest.raises(ValueError):
        numerical_flux(sol, 0, other, small_mesh.nodes[0])


@pytest.mark.parametrize("k, scheme", [(1, "reduced"), (2, "reduced"), (3, "reduced"), (2, "standard")])
def test_local_conservation(level_meshes, k, scheme):
    f = get_problem("sinsin").f
    for mesh in level_meshes[:2]:
        sol = solve(SchemeConfig(k=k, scheme=scheme, source=f), mesh)
        res = local_conservation_residual(sol)
        assert res.max() <= 1e-10
        assert local_conservation_residual(sol, element=3) == res[3]


@pytest.mark.parametrize(
    "kwargs",
    [dict(k=0), dict(scheme="mixed"), dict(hybrid="both"), dict(tau0=0.0), dict(tau0=-1.0),
     dict(solver="gmres"), dict(stab_route="exact"), dict(k=1, hybrid="cont")],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SchemeConfig(**kwargs)


def test_default_tau():
    assert SchemeConfig(k=2).tau == 40.0
    assert SchemeConfig(k=2, scheme="standard").tau == 90.0
    assert SchemeConfig(k=2, tau0=3.0).tau == 3.0
