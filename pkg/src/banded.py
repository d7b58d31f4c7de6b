"""
Band-storage helpers and the two linear solvers used by the stepper and its start-up.

Storage follows LAPACK: ab[upper + i - j, j] = A[i, j].
"""

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from src.custom_exceptions import InitializationError, ZeroPivotError
from src.utils import logger


def banded_to_dense(ab: np.ndarray, lower: int, upper: int) -> np.ndarray:
    n = ab.shape[1]
    dense = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - lower), min(n, i + upper + 1)):
            dense[i, j] = ab[upper + i - j, j]
    return dense


def banded_matvec(ab: np.ndarray, lower: int, upper: int, x: np.ndarray) -> np.ndarray:
    """y = A x without expanding A."""
    n = ab.shape[1]
    x = np.asarray(x, dtype=float)
    y = np.zeros(n)
    for offset in range(-lower, upper + 1):
        # offset = j - i, stored in row upper - offset
        band = ab[upper - offset]
        if offset >= 0:
            y[: n - offset] += band[offset:] * x[offset:]
        else:
            y[-offset:] += band[: n + offset] * x[: n + offset]
    return y


def solve_banded_no_pivot(
    ab: np.ndarray,
    lower: int,
    upper: int,
    rhs: np.ndarray,
    pivot_tolerance: float = 1e-14,
) -> np.ndarray:
    """
    Gaussian elimination restricted to the band, without row exchanges.

    Args:
        ab: Matrix in band storage, left untouched.
        lower: Number of sub-diagonals.
        upper: Number of super-diagonals.
        rhs: Right-hand side.
        pivot_tolerance: A pivot is rejected when |pivot| < tolerance * row scale,
            the row scale being the largest magnitude in the original row.

    Returns:
        The solution vector.

    Raises:
        ZeroPivotError: On the first rejected pivot.
    """
    n = ab.shape[1]
    rows = ab.tolist()
    b = [float(value) for value in rhs]
    row_scale = np.zeros(n)
    for offset in range(-lower, upper + 1):
        band = np.abs(ab[upper - offset])
        if offset >= 0:
            row_scale[: n - offset] = np.maximum(row_scale[: n - offset], band[offset:])
        else:
            row_scale[-offset:] = np.maximum(row_scale[-offset:], band[: n + offset])
    row_scale = row_scale.tolist()

    for k in range(n):
        pivot = rows[upper][k]
        if not abs(pivot) >= pivot_tolerance * row_scale[k] or pivot == 0.0:
            logger.error(f"Pivot {pivot:.3e} at row {k} is below tolerance.")
            raise ZeroPivotError("Near-zero pivot in banded elimination.", k, pivot)
        last_row = min(k + lower, n - 1)
        last_col = min(k + upper, n - 1)
        for i in range(k + 1, last_row + 1):
            factor = rows[upper + i - k][k] / pivot
            if factor == 0.0:
                continue
            for j in range(k + 1, last_col + 1):
                rows[upper + i - j][j] -= factor * rows[upper + k - j][j]
            b[i] -= factor * b[k]

    x = [0.0] * n
    for k in range(n - 1, -1, -1):
        total = b[k]
        for j in range(k + 1, min(k + upper, n - 1) + 1):
            total -= rows[upper + k - j][j] * x[j]
        x[k] = total / rows[upper][k]
    return np.array(x)


def solve_banded_checked(ab: np.ndarray, lower: int, upper: int, rhs: np.ndarray) -> np.ndarray:
    """
    Solve a small banded system with scipy's LAPACK driver (partial pivoting).

    Used for the start-up interpolation, where the ghost closure may add a second
    sub-diagonal near the right end.

    Raises:
        InitializationError: If the matrix is singular or the solution is not finite.
    """
    n = ab.shape[1]
    try:
        solution = solve_banded((lower, upper), ab, np.asarray(rhs, dtype=float))
    except (LinAlgError, ValueError) as e:
        logger.error(f"Banded solve of size {n} failed. Error: {e}")
        raise InitializationError(
            "Singular banded system.", {"size": n, "lower": lower, "upper": upper}
        ) from e
    if not np.all(np.isfinite(solution)):
        raise InitializationError("Banded solve produced non-finite values.", {"size": n})
    return solution
