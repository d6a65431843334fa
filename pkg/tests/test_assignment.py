import itertools
import unittest

import numpy as np

from diar_dialogue.assignment import optimal_assignment


def brute_force_cost(matrix):
    rows, cols = matrix.shape
    best = None
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            total = sum(matrix[i, perm[i]] for i in range(rows))
            best = total if best is None else min(best, total)
    else:
        for perm in itertools.permutations(range(rows), cols):
            total = sum(matrix[perm[j], j] for j in range(cols))
            best = total if best is None else min(best, total)
    return best


def lowest_optimal_mapping(matrix):
    """Optimal mapping preferring the lowest row, then the lowest column."""
    rows, cols = matrix.shape
    candidates = []
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            candidates.append(dict(enumerate(perm)))
    else:
        for perm in itertools.permutations(range(rows), cols):
            candidates.append({r: c for c, r in enumerate(perm)})
    best = brute_force_cost(matrix)
    optimal = [m for m in candidates
               if sum(matrix[r, c] for r, c in m.items()) == best]
    return min(optimal,
               key=lambda m: [m.get(r, cols) for r in range(rows)])


class TestAssignment(unittest.TestCase):
    """
    Unit test for the minimum-cost assignment.

    This test validates:
    - Square and rectangular matrices reach the brute-force optimum.
    - Ties go to the lowest row, then the lowest column.
    - Invalid matrices are rejected.
    """

    def test_matches_brute_force(self):
        """
        Test random matrices against exhaustive search.
        """
        rng = np.random.default_rng(2)
        for _ in range(200):
            rows = int(rng.integers(1, 6))
            cols = int(rng.integers(1, 6))
            matrix = rng.integers(0, 20, size=(rows, cols)).astype(float)
            mapping, cost = optimal_assignment(matrix)
            self.assertEqual(len(mapping), min(rows, cols))
            self.assertEqual(len(set(mapping.values())), len(mapping),
                             "Columns must not be assigned twice.")
            self.assertAlmostEqual(cost, brute_force_cost(matrix))
            self.assertAlmostEqual(
                cost, sum(matrix[r, c] for r, c in mapping.items()))

    def test_small_cases(self):
        """
        Test the documented example and the empty matrix.
        """
        self.assertEqual(optimal_assignment([[1, 2], [2, 1]]),
                         ({0: 0, 1: 1}, 2.0))
        self.assertEqual(optimal_assignment([[5, 0], [0, 5]]),
                         ({0: 1, 1: 0}, 0.0))
        self.assertEqual(optimal_assignment(np.zeros((0, 0))), ({}, 0.0))

    def test_ties_prefer_lowest_indices(self):
        """
        Test tie breaking on matrices with several optimal assignments.
        """
        self.assertEqual(optimal_assignment(np.zeros((3, 3)))[0],
                         {0: 0, 1: 1, 2: 2})
        self.assertEqual(optimal_assignment(np.ones((2, 2)))[0],
                         {0: 0, 1: 1})
        self.assertEqual(optimal_assignment([[1, 1, 0], [0, 0, 1]])[0],
                         {0: 2, 1: 0})
        self.assertEqual(optimal_assignment([[2, 1, 1], [1, 2, 2]])[0],
                         {0: 1, 1: 0})
        self.assertEqual(optimal_assignment(np.zeros((3, 2)))[0],
                         {0: 0, 1: 1}, "The lowest rows are assigned first.")

        rng = np.random.default_rng(4)
        for _ in range(200):
            rows = int(rng.integers(1, 5))
            cols = int(rng.integers(1, 5))
            matrix = rng.integers(0, 3, size=(rows, cols)).astype(float)
            mapping, _ = optimal_assignment(matrix)
            self.assertEqual(mapping, lowest_optimal_mapping(matrix),
                             f"Tie broken differently on\n{matrix}")

    def test_rejects_invalid_costs(self):
        """
        Test that malformed matrices raise ValueError.
        """
        with self.assertRaises(ValueError):
            optimal_assignment([[1, -1], [0, 0]])
        with self.assertRaises(ValueError):
            optimal_assignment([[1, np.inf]])
        with self.assertRaises(ValueError):
            optimal_assignment([1, 2, 3])


if __name__ == "__main__":
    unittest.main()
