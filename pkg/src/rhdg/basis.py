"""Quadrature rules and polynomial bases on the reference edge and triangle.

Reference edge is ``[-1, 1]``; reference triangle is ``{x, y >= 0, x + y <= 1}``.
Edge bases are Legendre polynomials scaled to be orthonormal on ``[-1, 1]``, so
the L2 projection onto lower degree is a truncation of the coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

MAX_GAUSS_POINTS = 20
MAX_TRI_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights on a reference domain.

    ``points`` has shape ``(n,)`` for the edge and ``(n, 2)`` for the triangle.
    ``degree`` is the total polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the leading axis of ``values`` against the weights."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1], exact to degree 2n - 1."""
    if not 1 <= n <= MAX_GAUSS_POINTS:
        raise ValueError(f"Gauss-Legendre point count must lie in [1, {MAX_GAUSS_POINTS}], got {n}")
    x, w = npleg.leggauss(n)
    # enforce exact symmetry about the origin
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(points=x, weights=w, degree=2 * n - 1)


def gauss_legendre_for_degree(degree: int) -> QuadratureRule:
    """Smallest Gauss-Legendre rule exact for polynomials of the given degree."""
    return gauss_legendre(max(1, (degree + 2) // 2))


def tri_quadrature(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference triangle.

    Uses the Duffy map ``y = (1 + b) / 2``, ``x = (1 + a)(1 - y) / 2`` with
    Gauss-Legendre points in ``a`` and Gauss-Jacobi(1, 0) points in ``b`` so
    the ``(1 - b)`` Jacobian factor is absorbed into the weight.
    """
    if not 0 <= degree <= MAX_TRI_DEGREE:
        raise ValueError(f"triangle quadrature degree must lie in [0, {MAX_TRI_DEGREE}], got {degree}")
    n = max(1, (degree + 2) // 2)
    a, wa = npleg.leggauss(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    y = 0.5 * (1.0 + B)
    x = 0.5 * (1.0 + A) * (1.0 - y)
    w = np.outer(wa, wb) / 8.0
    pts = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(points=pts, weights=w.ravel(), degree=2 * n - 1)


# ---------------------------------------------------------------------------
# Edge basis


def legendre_values(t: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal Legendre polynomials ``psi_0..psi_degree`` at points ``t``.

    Returns an array of shape ``t.shape + (degree + 1,)``. The normalisation is
    ``int_{-1}^{1} psi_i psi_j dt = delta_ij``.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = t
    for m in range(1, degree):
        out[..., m + 1] = ((2 * m + 1) * t * out[..., m] - m * out[..., m - 1]) / (m + 1)
    scale = np.sqrt((2 * np.arange(degree + 1) + 1) / 2.0)
    return out * scale


@dataclass(frozen=True)
class EdgeBasis:
    """Orthonormal Legendre modal basis of degree ``degree`` on [-1, 1]."""

    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, t: np.ndarray) -> np.ndarray:
        return legendre_values(t, self.degree)

    def evaluate(self, coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
        return self.values(t)[..., : len(coeffs)] @ np.asarray(coeffs, dtype=float)

    def gram(self) -> np.ndarray:
        rule = gauss_legendre(self.degree + 1)
        V = self.values(rule.points)
        return V.T @ (rule.weights[:, None] * V)


def project_edge(values: np.ndarray, degree: int, rule: QuadratureRule | None = None) -> np.ndarray:
    """L2 projection onto the orthonormal Legendre basis of ``degree``.

    ``values`` are samples of the function at the points of ``rule`` (by
    default the Gauss-Legendre rule with ``len(values)`` points). Extra
    trailing axes of ``values`` are projected independently. The caller is
    responsible for choosing a rule that integrates ``f * psi_degree``
    exactly when exactness matters.
    """
    values = np.asarray(values, dtype=float)
    if rule is None:
        rule = gauss_legendre(values.shape[0])
    if values.shape[0] != len(rule):
        raise ValueError("values must be sampled at the quadrature points")
    psi = legendre_values(rule.points, degree)
    return np.tensordot(psi * rule.weights[:, None], values, axes=(0, 0))


def reduced_edge_mass(k: int, f_coeffs: np.ndarray, g_coeffs: np.ndarray) -> float:
    """k-point Gauss-Legendre quadrature of the product of two edge polynomials.

    For inputs of degree at most ``k`` this equals the integral of the product
    of their projections onto degree ``k - 1``, because the degree-``k``
    Legendre polynomial vanishes at the ``k`` Gauss points.
    """
    rule = gauss_legendre(k)
    f = np.asarray(f_coeffs, dtype=float)
    g = np.asarray(g_coeffs, dtype=float)
    if len(f) > k + 1 or len(g) > k + 1:
        raise ValueError(f"edge polynomials must have degree <= {k}")
    fv = legendre_values(rule.points, len(f) - 1) @ f
    gv = legendre_values(rule.points, len(g) - 1) @ g
    return float(np.dot(rule.weights, fv * gv))


# ---------------------------------------------------------------------------
# Triangle basis


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def _monomial_integral(a: int, b: int) -> float:
    # int over the reference triangle of x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def _powers(z: np.ndarray, k: int) -> np.ndarray:
    out = np.ones(z.shape + (k + 1,))
    for p in range(1, k + 1):
        out[..., p] = out[..., p - 1] * z
    return out


class TriBasis:
    """Orthonormal polynomial basis of P^k on the reference triangle.

    Monomials ordered by total degree are orthonormalised by a Cholesky
    factorisation of their exact Gram matrix. ``phi_0`` is the constant
    ``sqrt(2)``.
    """

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be non-negative")
        self.k = k
        self.exponents = monomial_exponents(k)
        n = len(self.exponents)
        G = np.array(
            [[_monomial_integral(a1 + a2, b1 + b2) for (a2, b2) in self.exponents] for (a1, b1) in self.exponents]
        )
        L = np.linalg.cholesky(G)
        # phi = C @ monomials
        self.coeffs = np.linalg.solve(L, np.eye(n))
        self._ea = np.array([e[0] for e in self.exponents])
        self._eb = np.array([e[1] for e in self.exponents])

    @property
    def dim(self) -> int:
        return (self.k + 1) * (self.k + 2) // 2

    def _monomial_derivs(self, pts: np.ndarray, dx: int, dy: int) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        X = _powers(pts[:, 0], self.k)
        Y = _powers(pts[:, 1], self.k)
        a, b = self._ea, self._eb
        fa = np.ones(len(a))
        fb = np.ones(len(b))
        for i in range(dx):
            fa = fa * np.maximum(a - i, 0)
        for i in range(dy):
            fb = fb * np.maximum(b - i, 0)
        pa = np.maximum(a - dx, 0)
        pb = np.maximum(b - dy, 0)
        return X[:, pa] * Y[:, pb] * (fa * fb)

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Basis values, shape ``(npts, dim)``."""
        return self._monomial_derivs(pts, 0, 0) @ self.coeffs.T

    def grads(self, pts: np.ndarray) -> np.ndarray:
        """Reference gradients, shape ``(npts, dim, 2)``."""
        gx = self._monomial_derivs(pts, 1, 0) @ self.coeffs.T
        gy = self._monomial_derivs(pts, 0, 1) @ self.coeffs.T
        return np.stack([gx, gy], axis=-1)

    def hessians(self, pts: np.ndarray) -> np.ndarray:
        """Reference Hessians, shape ``(npts, dim, 2, 2)``."""
        hxx = self._monomial_derivs(pts, 2, 0) @ self.coeffs.T
        hxy = self._monomial_derivs(pts, 1, 1) @ self.coeffs.T
        hyy = self._monomial_derivs(pts, 0, 2) @ self.coeffs.T
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def interpolation_points(self) -> np.ndarray:
        """Equispaced principal lattice, unisolvent for P^k."""
        if self.k == 0:
            return np.array([[1.0 / 3.0, 1.0 / 3.0]])
        return np.array([[i / self.k, j / self.k] for i in range(self.k + 1) for j in range(self.k + 1 - i)])


# reference triangle vertices and local edges (edge j joins vertex j and j+1)
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def edge_points_reference(t: np.ndarray, j: int) -> np.ndarray:
    """Map parameters ``t`` in [-1, 1] onto local edge ``j`` of the reference triangle."""
    a, b = REF_VERTICES[LOCAL_EDGES[j][0]], REF_VERTICES[LOCAL_EDGES[j][1]]
    s = 0.5 * (1.0 + np.asarray(t, dtype=float))
    return a[None, :] * (1.0 - s)[:, None] + b[None, :] * s[:, None]
