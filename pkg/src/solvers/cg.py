import logging
from typing import NamedTuple

import numpy as np

from src.errors import RigidBodyModeError, SolverError

logger = logging.getLogger(__name__)


class CGResult(NamedTuple):
    solution: np.ndarray
    iterations: int
    relative_residual: float


def preconditioned_cg(matrix, rhs, rtol=1e-8, max_iterations=None, x0=None):
    """
    Jacobi-preconditioned conjugate gradient for symmetric positive-definite systems.

    Args:
        matrix: Sparse or dense (n, n) matrix.
        rhs: (n,) right-hand side.
        rtol: Stop when |b - Ax| <= rtol * |b|.
        max_iterations: Defaults to 20 * n.
        x0: Optional starting vector.

    Returns:
        CGResult with the solution, iteration count and final relative residual.

    Raises:
        RigidBodyModeError: a non-positive diagonal or search-direction curvature,
            i.e. the matrix is singular or indefinite.
        SolverError: no convergence within max_iterations.
    """
    rhs = np.asarray(rhs, dtype=float)
    size = len(rhs)
    if max_iterations is None:
        max_iterations = max(20 * size, 100)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return CGResult(np.zeros(size), 0, 0.0)

    diagonal = np.asarray(matrix.diagonal(), dtype=float)
    if np.any(diagonal <= 0):
        raise RigidBodyModeError(f"{int(np.sum(diagonal <= 0))} unknowns have no stiffness")
    inverse_diagonal = 1.0 / diagonal

    x = np.zeros(size) if x0 is None else np.array(x0, dtype=float)
    residual = rhs - matrix @ x
    z = inverse_diagonal * residual
    direction = z.copy()
    rz = residual @ z

    for iteration in range(1, max_iterations + 1):
        product = matrix @ direction
        curvature = direction @ product
        if curvature <= 0:
            raise RigidBodyModeError("stiffness matrix is not positive definite; supports leave a free mode")
        alpha = rz / curvature
        x += alpha * direction
        residual -= alpha * product
        relative = np.linalg.norm(residual) / rhs_norm
        if relative <= rtol:
            true_relative = np.linalg.norm(rhs - matrix @ x) / rhs_norm
            logger.debug("CG converged in %d iterations (relative residual %.3e)", iteration, true_relative)
            return CGResult(x, iteration, float(true_relative))
        z = inverse_diagonal * residual
        rz_next = residual @ z
        direction = z + (rz_next / rz) * direction
        rz = rz_next

    raise SolverError(f"conjugate gradient did not converge in {max_iterations} iterations", relative)
