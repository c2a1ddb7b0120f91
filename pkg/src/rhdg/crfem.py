"""Crouzeix-Raviart nonconforming P1 solver and edge-mean comparison with the P1-P0 hybrid solution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .basis import tri_quadrature
from .hdg import HdgSolution
from .mesh import Mesh

# local edge j joins vertices j and j+1; its CR basis function is 1 - 2 lambda_opp
OPPOSITE = np.array([2, 0, 1])


@dataclass
class CrSolution:
    """Edge-mean coefficients (one per edge, zero on the boundary)."""

    mesh: Mesh
    coeffs: np.ndarray

    def element_coefficients(self) -> np.ndarray:
        return cr_interpolate(self.mesh, self.coeffs)


def _barycentric_gradients(mesh: Mesh) -> np.ndarray:
    """(T, 3, 2) gradients of the barycentric coordinates."""
    Jinv = mesh.inverse_jacobians
    g1, g2 = Jinv[:, 0, :], Jinv[:, 1, :]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def cr_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Global CR stiffness over all edges (boundary rows included)."""
    grad_phi = -2.0 * _barycentric_gradients(mesh)[:, OPPOSITE, :]
    K = mesh.areas[:, None, None] * np.einsum("tia,tja->tij", grad_phi, grad_phi)
    dofs = mesh.triangle_edges
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(mesh.num_edges,) * 2).tocsr()
    A.sum_duplicates()
    return A


def cr_load(mesh: Mesh, f, degree: int = 4) -> np.ndarray:
    rule = tri_quadrature(degree)
    xi, eta = rule.points[:, 0], rule.points[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)  # (q, 3)
    phi = 1.0 - 2.0 * lam[:, OPPOSITE]
    xq = mesh.to_physical(rule.points)
    fq = np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(xq.shape[:2])
    local = 2.0 * mesh.areas[:, None] * np.einsum("q,tq,qj->tj", rule.weights, fq, phi)
    return np.bincount(mesh.triangle_edges.ravel(), weights=local.ravel(), minlength=mesh.num_edges)


def solve_cr(mesh: Mesh, f, degree: int = 4, dense_threshold: int = 3000) -> CrSolution:
    """CR-P1 solution of -lap u = f with homogeneous Dirichlet data.

    ``degree`` is the exactness of the triangle rule used for the load; the
    default matches the P1 hybrid scheme so the two discrete loads coincide.
    """
    A = cr_stiffness(mesh)
    b = cr_load(mesh, f, degree)
    free = mesh.interior_edges()
    Aff = A[free][:, free]
    coeffs = np.zeros(mesh.num_edges)
    if len(free):
        op = linsolve.SparseOperator.from_matrix(Aff)
        if len(free) < dense_threshold:
            x = linsolve.solve_dense(linsolve.factor_dense(op.toarray()), b[free])
        else:
            x = linsolve.sparse_direct(op, b[free])
        coeffs[free] = x
    return CrSolution(mesh=mesh, coeffs=coeffs)


def cr_interpolate(mesh: Mesh, edge_means: np.ndarray) -> np.ndarray:
    """Affine ``a + b x + c y`` per triangle whose three edge means match the data.

    Returns a (T, 3) array of ``(a, b, c)``.
    """
    m = np.asarray(edge_means, dtype=float)[mesh.triangle_edges]  # (T, 3) by local edge
    # value at vertex i: sum_j m_j (1 - 2 [i == opp(j)])
    vertex_vals = m.sum(axis=1)[:, None] - 2.0 * m[:, np.argsort(OPPOSITE)]
    p = mesh.nodes[mesh.triangles]
    V = np.concatenate([np.ones(p.shape[:2] + (1,)), p], axis=-1)
    return np.linalg.solve(V, vertex_vals[..., None])[..., 0]


def affine_edge_means(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """(T, 3) means of per-triangle affine functions over their local edges."""
    p = mesh.nodes[mesh.triangles]
    mid = 0.5 * (p + p[:, [1, 2, 0]])
    return coeffs[:, :1] + coeffs[:, 1:2] * mid[..., 0] + coeffs[:, 2:3] * mid[..., 1]


def compare_edge_means(hdg: HdgSolution, cr: CrSolution, mesh: Mesh | None = None) -> float:
    """max over edges of |mean(uhat_h) - mean(u_CR)| / (1 + |mean(u_CR)|)."""
    mesh = mesh or hdg.mesh
    for other in (hdg.mesh, cr.mesh):
        if other is not mesh and (
            other.num_edges != mesh.num_edges or not np.array_equal(other.nodes, mesh.nodes)
            or not np.array_equal(other.triangles, mesh.triangles)
        ):
            raise ValueError("solutions live on different meshes")
    hmean = hdg.uhat[:, 0] / math.sqrt(2.0)
    return float(np.max(np.abs(hmean - cr.coeffs) / (1.0 + np.abs(cr.coeffs)), initial=0.0))
