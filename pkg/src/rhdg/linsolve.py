"""Dense factorisation, sparse operator storage and Krylov solvers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_THRESHOLD = 1e-14


class SolverError(RuntimeError):
    """A linear solve failed."""


class SingularMatrixError(SolverError):
    def __init__(self, pivot: int, value: float, scale: float):
        super().__init__(f"matrix is singular to working tolerance: pivot {pivot} is {value:.3e} (max entry {scale:.3e})")
        self.pivot = pivot


class ConvergenceError(SolverError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} after {iterations} iterations (relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class NegativeCurvatureError(SolverError):
    def __init__(self, iteration: int, curvature: float):
        super().__init__(
            f"conjugate gradients met non-positive curvature {curvature:.3e} at iteration {iteration}; "
            "the operator is not positive definite, try a larger tau0"
        )
        self.iteration = iteration


@dataclass(frozen=True)
class DenseFactorization:
    lu: np.ndarray
    piv: np.ndarray


def factor_dense(matrix) -> DenseFactorization:
    """LU factorisation with partial pivoting; rejects numerically singular input."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = float(np.abs(A).max()) if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError(0, 0.0, scale)
    with warnings.catch_warnings():
        # exact zero pivots are reported below with their index
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    d = np.abs(np.diag(lu))
    bad = np.flatnonzero(d <= PIVOT_THRESHOLD * scale)
    if bad.size:
        raise SingularMatrixError(int(bad[0]), float(d[bad[0]]), scale)
    return DenseFactorization(lu, piv)


def solve_dense(factorization: DenseFactorization, rhs) -> np.ndarray:
    return sla.lu_solve((factorization.lu, factorization.piv), np.asarray(rhs, dtype=float))


def backward_error(op, x, b) -> float:
    """Normwise backward error ||b - Ax|| / (||A|| ||x|| + ||b||), infinity norms."""
    A = op.matrix if isinstance(op, SparseOperator) else op
    r = b - A @ x
    if sp.issparse(A):
        nA = abs(A).sum(axis=1).max() if A.nnz else 0.0
    else:
        nA = np.abs(A).sum(axis=1).max() if A.size else 0.0
    denom = nA * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
    return float(np.abs(r).max(initial=0.0) / denom) if denom > 0 else 0.0


def sparse_direct(op, rhs) -> np.ndarray:
    """Sparse LU solve (SuperLU)."""
    A = op.matrix if isinstance(op, SparseOperator) else sp.csr_matrix(op)
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}") from exc
    return lu.solve(np.asarray(rhs, dtype=float))


def negative_eigenvalue_count(op) -> int | None:
    """Number of negative eigenvalues of a symmetric matrix, by Sylvester's law of inertia.

    Uses a sparse LU with symmetric permutation and no row pivoting, so the
    pivots are those of an LDL^T factorisation. Returns None when the
    factorisation breaks down or pivots rows anyway.
    """
    A = op.matrix if isinstance(op, SparseOperator) else sp.csr_matrix(op)
    if A.shape[0] == 0:
        return 0
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if np.any(d == 0.0) or not np.all(np.isfinite(d)):
        return None
    return int(np.count_nonzero(d < 0.0))


class SparseOperator:
    """Square sparse matrix in compressed-row form, duplicates summed on construction."""

    def __init__(self, rows, cols, values, n: int):
        A = sp.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        self.matrix = A

    @classmethod
    def from_matrix(cls, A) -> "SparseOperator":
        op = cls.__new__(cls)
        A = sp.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        op.matrix = A
        return op

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, x):
        return self.matrix @ x

    def matvec(self, x):
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def asymmetry(self) -> float:
        """max|A - A^T| / max|A|."""
        A = self.matrix
        scale = abs(A).max() if A.nnz else 0.0
        if scale == 0.0:
            return 0.0
        d = A - A.T
        return float(abs(d).max() / scale) if d.nnz else 0.0


@dataclass
class KrylovInfo:
    iterations: int
    residual: float


def _as_matvec(op):
    if isinstance(op, SparseOperator):
        return op.matvec, op.diagonal()
    if sp.issparse(op):
        return (lambda x: op @ x), op.diagonal()
    A = np.asarray(op)
    return (lambda x: A @ x), np.diag(A).copy()


def cg(op, rhs, tol: float = 1e-12, maxiter: int | None = None, precondition: bool = True, info: KrylovInfo | None = None):
    """Jacobi-preconditioned conjugate gradients.

    Raises :class:`NegativeCurvatureError` when a search direction has
    non-positive energy, and :class:`ConvergenceError` when ``maxiter`` is
    exhausted before the relative residual drops below ``tol``.
    """
    matvec, diag = _as_matvec(op)
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    maxiter = maxiter if maxiter is not None else 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        if info is not None:
            info.iterations, info.residual = 0, 0.0
        return x
    if precondition:
        if np.any(diag <= 0.0):
            i = int(np.flatnonzero(diag <= 0.0)[0])
            raise NegativeCurvatureError(0, float(diag[i]))
        minv = 1.0 / diag
    else:
        minv = np.ones(n)
    r = b.copy()
    z = minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = matvec(p)
        curv = p @ Ap
        if curv <= 0.0:
            raise NegativeCurvatureError(it, float(curv))
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            # guard against drift of the recursive residual
            true_res = np.linalg.norm(b - matvec(x)) / bnorm
            if true_res <= tol:
                if info is not None:
                    info.iterations, info.residual = it, float(true_res)
                return x
            r = b - matvec(x)
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - matvec(x)) / bnorm
    raise ConvergenceError("conjugate gradients did not converge", maxiter, float(res))


def krylov_nonsym(op, rhs, tol: float = 1e-12, maxiter: int | None = None, precondition: bool = True,
                  info: KrylovInfo | None = None, x0=None):
    """Transpose-free QMR (Freund 1993) with right Jacobi preconditioning.

    Restarts from the current iterate when the quasi-residual bound claims
    convergence but the true residual does not meet ``tol``.
    """
    matvec, diag = _as_matvec(op)
    b = np.asarray(rhs, dtype=float)
    n = len(b)
    maxiter = maxiter if maxiter is not None else 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        if info is not None:
            info.iterations, info.residual = 0, 0.0
        return np.zeros(n)
    if precondition and np.all(diag != 0.0):
        minv = 1.0 / diag
    else:
        minv = np.ones(n)

    def apply(v):
        return matvec(minv * v)

    it = 0
    while it < maxiter:
        # solve (A M^-1) y = r, x += M^-1 y
        r0 = b - matvec(x)
        r0norm = np.linalg.norm(r0)
        if r0norm / bnorm <= tol:
            if info is not None:
                info.iterations, info.residual = it, float(r0norm / bnorm)
            return x
        y = np.zeros(n)
        w = r0.copy()
        u1 = r0.copy()
        v = apply(u1)
        Au1 = v.copy()
        d = np.zeros(n)
        rtilde = r0
        theta = 0.0
        eta = 0.0
        tau = r0norm
        rho = rtilde @ r0
        u2 = Au2 = None
        stalled = False
        while it < maxiter:
            it += 1
            sigma = rtilde @ v
            if sigma == 0.0 or rho == 0.0:
                stalled = True
                break
            alpha = rho / sigma
            u2 = u1 - alpha * v
            Au2 = apply(u2)
            converged = False
            for m, (u, Au) in enumerate(((u1, Au1), (u2, Au2))):
                w = w - alpha * Au
                d = u + (theta**2 * eta / alpha) * d
                theta = np.linalg.norm(w) / tau
                c = 1.0 / np.sqrt(1.0 + theta**2)
                tau = tau * theta * c
                eta = c**2 * alpha
                y = y + eta * d
                if tau * np.sqrt(2.0 * it + m + 1) / bnorm <= tol:
                    converged = True
                    break
            if converged:
                break
            rho_new = rtilde @ w
            beta = rho_new / rho
            rho = rho_new
            u1 = w + beta * u2
            Au1 = apply(u1)
            v = Au1 + beta * (Au2 + beta * v)
        x = x + minv * y
        true_res = np.linalg.norm(b - matvec(x)) / bnorm
        if true_res <= tol:
            if info is not None:
                info.iterations, info.residual = it, float(true_res)
            return x
        if stalled:
            raise ConvergenceError("TFQMR broke down", it, float(true_res))
    res = np.linalg.norm(b - matvec(x)) / bnorm
    raise ConvergenceError("TFQMR did not converge", it, float(res))
