import math

import numpy as np
import pytest

from rhdg.crfem import (
    affine_edge_means,
    compare_edge_means,
    cr_interpolate,
    cr_load,
    cr_stiffness,
    solve_cr,
)
from rhdg.hdg import SchemeConfig, solve
from rhdg.mesh import generate_unit_square, refine_uniform
from rhdg.problems import get_problem, unit_load


def test_zero_load_zero_solution(small_mesh):
    assert not solve_cr(small_mesh, lambda x, y: 0 * x).coeffs.any()


def test_single_interior_dof(square2):
    # the only interior edge is the diagonal; its basis function is 1 - 2 lambda_opp on both triangles
    sol = solve_cr(square2, unit_load)
    e = int(np.flatnonzero(~square2.boundary)[0])
    # on each half, lambda_opp has gradient of length sqrt(2) and the basis integrates to area/3
    energy = 2 * 0.5 * (2 * math.sqrt(2)) ** 2
    load = 2 * 0.5 / 3
    assert sol.coeffs[e] == pytest.approx(load / energy, rel=1e-13)
    assert np.count_nonzero(sol.coeffs) == 1


def test_stiffness_spd_on_interior(small_mesh):
    A = cr_stiffness(small_mesh)
    free = small_mesh.interior_edges()
    K = A[free][:, free].toarray()
    assert np.abs(K - K.T).max() <= 1e-13 * np.abs(K).max()
    assert np.linalg.eigvalsh(K).min() > 0


def test_load_of_one_is_area_over_three(small_mesh):
    b = cr_load(small_mesh, unit_load)
    expected = np.bincount(small_mesh.triangle_edges.ravel(), weights=np.repeat(small_mesh.areas / 3, 3),
                           minlength=small_mesh.num_edges)
    assert b == pytest.approx(expected, rel=1e-13)


def test_interpolate_constant_and_linear(small_mesh):
    c = cr_interpolate(small_mesh, np.full(small_mesh.num_edges, 2.0))
    assert c == pytest.approx(np.tile([2.0, 0.0, 0.0], (small_mesh.num_triangles, 1)), abs=1e-13)
    mid = 0.5 * (small_mesh.nodes[small_mesh.edges[:, 0]] + small_mesh.nodes[small_mesh.edges[:, 1]])
    c = cr_interpolate(small_mesh, mid[:, 0])
    assert c == pytest.approx(np.tile([0.0, 1.0, 0.0], (small_mesh.num_triangles, 1)), abs=1e-12)


def test_interpolation_round_trip(small_mesh):
    m = np.random.default_rng(0).standard_normal(small_mesh.num_edges)
    again = affine_edge_means(small_mesh, cr_interpolate(small_mesh, m))
    assert np.abs(again - m[small_mesh.triangle_edges]).max() <= 1e-13


def test_cr_converges_at_second_order():
    p = get_problem("sinsin")
    mesh = generate_unit_square(6, 0.1, seed=1)
    errs, hs = [], []
    for _ in range(3):
        sol = solve_cr(mesh, p.f)
        mid = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
        coeffs = cr_interpolate(mesh, sol.coeffs)
        # L2 error by the edge-midpoint rule (exact for quadratics)
        val = coeffs[:, :1] + coeffs[:, 1:2] * mid[mesh.triangle_edges][..., 0] + coeffs[:, 2:] * mid[mesh.triangle_edges][..., 1]
        ex = p.u(mid[mesh.triangle_edges][..., 0], mid[mesh.triangle_edges][..., 1])
        errs.append(math.sqrt(np.sum(mesh.areas[:, None] / 3 * (val - ex) ** 2)))
        hs.append(mesh.h)
        mesh = refine_uniform(mesh)
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(2)]
    assert orders[-1] == pytest.approx(2.0, abs=0.2)


def test_zero_load_discrepancy(small_mesh):
    zero = lambda x, y: 0 * x
    assert compare_edge_means(solve(SchemeConfig(k=1, source=zero), small_mesh), solve_cr(small_mesh, zero)) == 0.0


@pytest.mark.parametrize("tau0", [1.0, 10.0, 100.0])
@pytest.mark.parametrize("load", ["one", "sinsin"])
def test_hybrid_means_equal_cr(level_meshes, tau0, load):
    f = unit_load if load == "one" else get_problem("sinsin").f
    for mesh in level_meshes[:2]:
        d = compare_edge_means(solve(SchemeConfig(k=1, tau0=tau0, source=f), mesh), solve_cr(mesh, f))
        assert d <= 1e-9


def test_sparse_path_matches_dense(level_meshes):
    mesh = level_meshes[1]
    f = get_problem("sinsin").f
    a = solve_cr(mesh, f)
    b = solve_cr(mesh, f, dense_threshold=0)
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-12


def test_mismatched_meshes_rejected(small_mesh):
    other = generate_unit_square(4, 0.15, seed=99)
    with pytest.raises(ValueError):
        compare_edge_means(solve(SchemeConfig(k=1), small_mesh), solve_cr(other, unit_load))
