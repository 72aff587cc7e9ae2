"""Sparse storage and linear solvers.

CSR storage and the Krylov/ILU kernels come from scipy; this module pins
down the contracts (sorted unique column indices, residual-checked solves,
explicit failures) the rest of the package relies on.
"""
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

DENSE_LIMIT = 5000


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, message, pivot=0.0):
        super().__init__(message)
        self.pivot = pivot


def csr_from_triplets(rows, cols, vals, n):
    """Square CSR matrix with duplicates summed in input order and sorted indices."""
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A):
    """Raise if the CSR invariants do not hold."""
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix is not square: {A.shape}")
    if len(A.indptr) != A.shape[0] + 1 or np.any(np.diff(A.indptr) < 0):
        raise ValueError("row offsets are not monotone")
    for i in range(A.shape[0]):
        idx = A.indices[A.indptr[i]:A.indptr[i + 1]]
        if np.any(np.diff(idx) <= 0):
            raise ValueError(f"row {i}: column indices not sorted and unique")


def solve_dense_oracle(A, b):
    """Partial-pivoting LU solve of a dense copy; for tests and tiny systems."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_LIMIT} unknowns, got {n}")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    smallest = pivots.min() if n else 1.0
    if smallest <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError(f"matrix is numerically singular (pivot {smallest:.3e})", smallest)
    return scipy.linalg.lu_solve((lu, piv), b)


def solve_iterative(A, b, tol=1e-10, max_iter=10000, restart=100, drop_tol=1e-8, fill_factor=40):
    """Restarted GMRES with an incomplete-LU preconditioner.

    Returns ``(x, info)`` where ``info`` has ``iterations`` and ``residual``
    (relative). Raises :class:`ConvergenceError` when the relative residual
    ``||Ax - b|| / ||b||`` does not reach ``tol``.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0}
    try:
        ilu = spla.spilu(A, drop_tol=drop_tol, fill_factor=fill_factor)
    except RuntimeError as exc:
        raise ConvergenceError(f"incomplete factorization broke down: {exc}") from exc
    M = spla.LinearOperator(A.shape, ilu.solve)

    count = [0]

    def callback(_):
        count[0] += 1

    x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart, maxiter=max(1, max_iter // restart),
                         M=M, callback=callback, callback_type="pr_norm")
    residual = np.linalg.norm(A @ x - b) / bnorm
    if not np.all(np.isfinite(x)) or residual > tol * 10:
        raise ConvergenceError(
            f"GMRES failed (info={info}) with relative residual {residual:.3e}", residual, count[0]
        )
    return x, {"iterations": count[0], "residual": residual}


def solve_direct(A, b):
    """Sparse LU; raises :class:`SingularMatrixError` on exact singularity."""
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    x = lu.solve(np.asarray(b, dtype=float))
    bnorm = np.linalg.norm(b)
    residual = np.linalg.norm(A @ x - b) / bnorm if bnorm else 0.0
    return x, {"iterations": 1, "residual": residual}


def solve(A, b, method="gmres", **kwargs):
    if method == "gmres":
        return solve_iterative(A, b, **kwargs)
    if method == "direct":
        return solve_direct(A, b)
    raise ValueError(f"unknown solver {method!r}")


def write_matrix(A, path):
    """Coordinate text dump, one ``row col value`` triple per line."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for i, j, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
