import math

import numpy as np
from scipy.optimize import linear_sum_assignment


def optimal_assignment(cost) -> tuple[dict[int, int], float]:
    """
    Minimum-cost bipartite assignment of rows to columns.

    Parameters
    ----------
    cost : array_like
        2-D matrix of non-negative finite costs; may be rectangular, in which
        case ``min(rows, cols)`` pairs are assigned.

    Returns
    -------
    tuple of (dict[int, int], float)
        Row-to-column mapping and the total cost of the assigned pairs. Ties
        between optimal assignments go to the lowest row, then the lowest
        column. An empty matrix gives ``({}, 0.0)``.

    Raises
    ------
    ValueError
        If the matrix is not 2-D or holds negative or non-finite entries.

    Examples
    --------
    .. code-block:: python

        optimal_assignment([[1, 2], [2, 1]])  # ({0: 0, 1: 1}, 2.0)
    """
    matrix = np.asarray(cost, dtype=float)
    if matrix.size == 0:
        return {}, 0.0
    if matrix.ndim != 2:
        raise ValueError(
            f"'cost' must be a 2-D matrix. Got {matrix.ndim} dimensions."
        )
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
        raise ValueError("'cost' entries must be finite and non-negative.")

    rows, cols = linear_sum_assignment(matrix)
    best = float(matrix[rows, cols].sum())
    return _lowest_indices(matrix, best), best


def _optimal_cost(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(matrix)
    return float(matrix[rows, cols].sum())


def _lowest_indices(matrix: np.ndarray, best: float) -> dict[int, int]:
    # Among all optimal assignments pick the one that pairs the lowest row
    # with the lowest column, then the next row, and so on.
    rows = list(range(matrix.shape[0]))
    cols = list(range(matrix.shape[1]))
    mapping = {}
    remaining = best
    while rows and cols:
        r = rows.pop(0)
        for c in cols:
            rest = matrix[np.ix_(rows, [k for k in cols if k != c])]
            cost = matrix[r, c] + _optimal_cost(rest)
            if math.isclose(cost, remaining, rel_tol=1e-9, abs_tol=1e-9):
                mapping[r] = c
                cols.remove(c)
                remaining -= matrix[r, c]
                break
    return mapping
