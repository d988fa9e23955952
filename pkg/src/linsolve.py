# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Symmetric linear solvers: preconditioned CG and a dense oracle."""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from errors import ConvergenceError, SingularMatrixError, SolverError
from literals import CG_MAXIT_FACTOR, CG_TOL

logger = logging.getLogger(__name__)


@dataclass
class CgInfo:
    """Statistics of a CG solve.

    Attributes:
        iterations: number of iterations performed.
        residual: final relative residual ||Ax - b|| / ||b||.
        history: relative residual after every iteration.
    """

    iterations: int = 0
    residual: float = 0.0
    history: List[float] = field(default_factory=list)


def to_csr(matrix):
    """Convert any matrix-like input to CSR format.

    Args:
        matrix: dense array or scipy sparse matrix.

    Returns:
        The matrix as scipy.sparse.csr_matrix.
    """
    return sp.csr_matrix(matrix)


def is_symmetric(matrix, tol=1e-14):
    """Check entrywise symmetry relative to the largest entry.

    Args:
        matrix: dense or sparse square matrix.
        tol: relative tolerance.

    Returns:
        True if |A - A^T| <= tol * max|A| entrywise.
    """
    matrix = to_csr(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        return False
    if matrix.nnz == 0:
        return True
    scale = abs(matrix).max()
    difference = abs(matrix - matrix.T)
    return difference.nnz == 0 or difference.max() <= tol * scale


def cg_solve(
    A,
    b,
    tol=CG_TOL,
    maxit=None,
    jacobi=True,
    x0=None,
    callback=None,
    info=None,
):
    """Solve A x = b for symmetric positive definite A by CG.

    Args:
        A: SPD matrix (sparse or dense) supporting ``A @ x``.
        b: right-hand side vector.
        tol: relative residual tolerance, ||Ax - b|| <= tol ||b||.
        maxit: iteration budget, 10 n by default.
        jacobi: whether to precondition with the diagonal of A.
        x0: optional initial guess.
        callback: optional callable invoked with the iterate after every
            iteration.
        info: optional CgInfo filled with the solve statistics.

    Returns:
        The solution vector.

    Raises:
        ValueError: for mismatched dimensions, a nonpositive tolerance or a
            nonpositive diagonal when preconditioning.
        SolverError: if a nonpositive curvature direction shows up.
        ConvergenceError: if the iteration budget is exhausted.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs {n}")
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if maxit is None:
        maxit = CG_MAXIT_FACTOR * max(n, 1)
    info = info if info is not None else CgInfo()

    if jacobi:
        diagonal = np.asarray(
            A.diagonal() if hasattr(A, "diagonal") else np.diag(A),
            dtype=float,
        )
        if np.any(diagonal <= 0):
            raise ValueError(
                "Jacobi preconditioning needs a positive diagonal"
            )
        inverse_diagonal = 1.0 / diagonal
    else:
        inverse_diagonal = np.ones(n)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        info.iterations, info.residual = 0, 0.0
        return np.zeros(n)
    threshold = tol * b_norm

    r = b - A @ x
    r_norm = np.linalg.norm(r)
    info.residual = r_norm / b_norm
    if r_norm <= threshold:
        info.iterations = 0
        return x

    z = inverse_diagonal * r
    p = z.copy()
    gamma = r @ z
    for iteration in range(1, maxit + 1):
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0:
            raise SolverError(
                f"nonpositive curvature {curvature:.3e} at CG iteration "
                f"{iteration}; the matrix is not positive definite"
            )
        alpha = gamma / curvature
        x += alpha * p
        r -= alpha * Ap
        r_norm = np.linalg.norm(r)
        info.history.append(r_norm / b_norm)
        if callback is not None:
            callback(x)

        if r_norm <= threshold:
            # The recursive residual drifts; confirm with the true one.
            r = b - A @ x
            r_norm = np.linalg.norm(r)
            if r_norm <= threshold:
                info.iterations = iteration
                info.residual = r_norm / b_norm
                logger.debug(
                    f"CG converged in {iteration} iterations, "
                    f"residual {info.residual:.3e}"
                )
                return x
            z = inverse_diagonal * r
            p = z.copy()
            gamma = r @ z
            continue

        z = inverse_diagonal * r
        gamma_next = r @ z
        p = z + (gamma_next / gamma) * p
        gamma = gamma_next

    info.iterations = maxit
    info.residual = np.linalg.norm(b - A @ x) / b_norm
    raise ConvergenceError(info.residual, maxit)


def dense_solve(A, b):
    """Solve a dense square system by LU factorization.

    Args:
        A: square nonsingular matrix.
        b: right-hand side.

    Returns:
        The solution vector.

    Raises:
        ValueError: if A is not square or b does not match.
        SingularMatrixError: if A is singular to working precision.
    """
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(
            f"rhs length {b.shape[0]} does not match matrix {A.shape}"
        )
    condition = np.linalg.cond(A)
    if not np.isfinite(condition) or condition * np.finfo(float).eps >= 1:
        raise SingularMatrixError(
            f"matrix is singular to working precision (cond={condition:.3e})"
        )
    try:
        return scipy.linalg.solve(A, b)
    except scipy.linalg.LinAlgError as e:
        raise SingularMatrixError(str(e)) from e
