#!/usr/bin/env python3
"""
Perron eigendata and spectral radii for nonnegative matrices.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from sft_core import ThermoflowError

logger = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 64
DENSE_RADIUS_LIMIT = 512


class EigenFailure(ThermoflowError):
    """Dominant eigenpair did not converge to tolerance."""
    pass


@dataclass(frozen=True, eq=False)
class PerronData:
    """Dominant eigenvalue with positive right/left eigenvectors, <left, right> = 1."""

    eigenvalue: float
    right: np.ndarray
    left: np.ndarray
    iterations: int


def _residual(matrix: np.ndarray, vector: np.ndarray, value: float) -> float:
    scale = max(value, 1.0) * np.abs(vector).max()
    return float(np.abs(matrix @ vector - value * vector).max() / scale)


def power_iteration(matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000):
    """
    Dominant eigenpair of a nonnegative primitive matrix.

    Starts from the all-ones vector and stops once the Rayleigh-quotient
    residual ||A x - lambda x|| falls below tol (relative to lambda).

    Returns:
        (eigenvalue, eigenvector normalized to sum 1, iterations)
    """
    matrix = np.asarray(matrix, dtype=float)
    x = np.full(matrix.shape[0], 1.0 / matrix.shape[0])
    for iteration in range(1, max_iter + 1):
        y = matrix @ x
        total = y.sum()
        if total <= 0:
            raise EigenFailure("power iteration collapsed to the zero vector")
        value = float(x @ y / (x @ x))
        x = y / total
        if _residual(matrix, x, value) < tol:
            return value, x, iteration
    raise EigenFailure(f"power iteration did not reach residual {tol} in {max_iter} iterations")


def _dense_pair(matrix: np.ndarray):
    values, vectors = np.linalg.eig(matrix)
    index = int(np.argmax(values.real))
    vector = np.abs(vectors[:, index].real)
    return float(values[index].real), vector / vector.sum()


def perron_eigenpair(matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000,
                     dense_limit: int = DENSE_EIGEN_LIMIT) -> PerronData:
    """
    Perron data of a nonnegative primitive matrix.

    Dense LAPACK solve for at most `dense_limit` states, power iteration
    otherwise. Both eigenvectors are checked for positivity and residual.
    """
    matrix = np.asarray(matrix, dtype=float)
    size = matrix.shape[0]

    if size <= dense_limit:
        value, right = _dense_pair(matrix)
        left_value, left = _dense_pair(matrix.T)
        iterations = 0
    else:
        value, right, iterations = power_iteration(matrix, tol, max_iter)
        left_value, left, left_iterations = power_iteration(matrix.T, tol, max_iter)
        iterations = max(iterations, left_iterations)

    if abs(value - left_value) > tol * max(value, 1.0):
        raise EigenFailure(f"left and right Perron values disagree: {value} vs {left_value}")
    if not (right > 0).all() or not (left > 0).all():
        raise EigenFailure("Perron eigenvector is not strictly positive")
    if _residual(matrix, right, value) > tol or _residual(matrix.T, left, value) > tol:
        raise EigenFailure(f"Perron residual exceeds {tol}")

    left = left / float(left @ right)
    logger.debug(f"Perron value {value!r} on {size} states ({iterations} iterations)")
    return PerronData(eigenvalue=value, right=right, left=left, iterations=iterations)


def is_nilpotent(matrix) -> bool:
    """True when the support graph of a nonnegative matrix has no cycle."""
    graph = sparse.csr_matrix(matrix)
    graph.eliminate_zeros()
    if graph.shape[0] == 0:
        return True
    if graph.diagonal().any():
        return False
    count, labels = csgraph.connected_components(graph, directed=True, connection='strong')
    return bool(np.bincount(labels, minlength=count).max() <= 1)


def spectral_radius(matrix, dense_limit: int = DENSE_RADIUS_LIMIT) -> float:
    """
    Spectral radius of a nonnegative (possibly reducible) matrix.

    Returns 0 for nilpotent matrices. Small matrices use a dense
    eigenvalue solve; larger ones use ARPACK on the sparse form.
    """
    if is_nilpotent(matrix):
        return 0.0
    size = matrix.shape[0]
    if size <= dense_limit:
        dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix, dtype=float)
        return float(np.abs(np.linalg.eigvals(dense)).max())

    operator = sparse.csr_matrix(matrix, dtype=float)
    try:
        values = eigs(operator, k=1, which='LM', return_eigenvectors=False, tol=0, maxiter=100_000)
    except ArpackNoConvergence as e:
        raise EigenFailure(f"ARPACK did not converge on {size} states: {e}")
    return float(np.abs(values).max())
