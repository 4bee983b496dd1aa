# -*- encoding: utf-8 -*-
"""Tests for the dense linear algebra of condlab."""

import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from condlab import linalg
from condlab.schema import (
    CondlabNonFiniteError,
    CondlabRankDeficientError,
    CondlabShapeError,
    RngStream,
)


def eigen_singular_values(a):
    """Singular values from the eigenvalues of the Gram matrix, descending."""
    a = np.asarray(a, dtype=np.float64)
    gram = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    eigenvalues = np.linalg.eigvalsh(gram)[::-1]
    return np.sqrt(np.maximum(eigenvalues, 0.0))


class MatmulTests(unittest.TestCase):
    """Unit tests for the checked matrix product."""

    def test_matches_triple_loop(self):
        """Test the product against an explicit triple loop."""
        generator = RngStream(seed=1).generator()
        a = generator.standard_normal((5, 4))
        b = generator.standard_normal((4, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(linalg.matmul(a, b), expected, atol=1e-12)

    def test_inner_dimension_mismatch(self):
        """Test that mismatched inner dimensions name both shapes."""
        with self.assertRaises(CondlabShapeError) as context:
            linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))
        self.assertIn("(2, 3) vs (2, 3)", str(context.exception))

    def test_rejects_non_finite(self):
        """Test that NaN entries are rejected."""
        a = np.ones((2, 2))
        a[0, 1] = np.nan
        with self.assertRaises(CondlabNonFiniteError):
            linalg.matmul(a, np.ones((2, 2)))

    def test_rejects_vectors(self):
        """Test that one-dimensional input is not a matrix."""
        with self.assertRaises(CondlabShapeError):
            linalg.as_matrix(np.ones(3))


class SvdTests(unittest.TestCase):
    """Unit tests for the Jacobi singular value decomposition."""

    def assert_valid_factors(self, a, factors):
        r = min(a.shape)
        self.assertEqual(factors.u.shape, (a.shape[0], r))
        self.assertEqual(factors.v.shape, (a.shape[1], r))
        np.testing.assert_allclose(factors.u.T @ factors.u, np.eye(r), atol=1e-10)
        np.testing.assert_allclose(factors.v.T @ factors.v, np.eye(r), atol=1e-10)
        self.assertTrue(np.all(np.diff(factors.sigma) <= 0.0))
        error = np.linalg.norm(linalg.reconstruct(factors) - a) / max(np.linalg.norm(a), 1e-300)
        self.assertLessEqual(error, 1e-8)

    def test_diagonal(self):
        """Test that a diagonal matrix yields its sorted diagonal."""
        factors = linalg.svd(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(factors.sigma, [3.0, 2.0, 1.0], atol=1e-14)

    def test_rank_one(self):
        """Test the singular values of an outer product."""
        sigma = linalg.singular_values(np.outer([1.0, 2.0, 2.0], [3.0, 4.0]))
        np.testing.assert_allclose(sigma, [15.0, 0.0], atol=1e-12)

    def test_zero_matrix(self):
        """Test that the zero matrix decomposes into orthonormal factors."""
        a = np.zeros((4, 3))
        factors = linalg.svd(a)
        np.testing.assert_array_equal(factors.sigma, np.zeros(3))
        self.assert_valid_factors(a, factors)

    def test_eigenvalue_oracle(self):
        """Test squared singular values against the eigenvalues of the Gram matrix."""
        a = linalg.random_gaussian(8, 5, RngStream(seed=3))
        np.testing.assert_allclose(
            linalg.singular_values(a), eigen_singular_values(a), rtol=1e-8,
        )

    def test_wide_matrix(self):
        """Test that wide matrices are decomposed through their transpose."""
        a = linalg.random_gaussian(5, 9, RngStream(seed=4))
        self.assert_valid_factors(a, linalg.svd(a))

    def test_rank_deficient_factors(self):
        """Test that left singular vectors of zero singular values are completed."""
        generator = RngStream(seed=5).generator()
        a = generator.standard_normal((7, 2)) @ generator.standard_normal((2, 4))
        factors = linalg.svd(a)
        self.assert_valid_factors(a, factors)
        padded = np.hstack([generator.standard_normal((7, 2)), np.zeros((7, 2))])
        self.assertEqual(linalg.numerical_rank(padded), 2)

    def test_seeded_cases(self):
        """Test reconstruction and the eigenvalue oracle over many shapes."""
        sizes = [(1, 1), (3, 1), (1, 4), (16, 8), (32, 24), (40, 7), (9, 30), (128, 64)]
        for index, (rows, cols) in enumerate(sizes):
            a = linalg.random_gaussian(rows, cols, RngStream(seed=7, stream_id=index))
            factors = linalg.svd(a)
            self.assert_valid_factors(a, factors)
            np.testing.assert_allclose(factors.sigma, eigen_singular_values(a), rtol=1e-8)

    def test_idempotent_on_sigma(self):
        """Test that decomposing a reconstruction returns the same singular values."""
        a = linalg.random_gaussian(12, 6, RngStream(seed=8))
        factors = linalg.svd(a)
        again = linalg.svd(linalg.reconstruct(factors))
        np.testing.assert_allclose(again.sigma, factors.sigma, rtol=1e-8)

    def test_graded_singular_values(self):
        """Test relative accuracy of small singular values."""
        generator = RngStream(seed=9).generator()
        q1, _ = np.linalg.qr(generator.standard_normal((10, 6)))
        q2, _ = np.linalg.qr(generator.standard_normal((6, 6)))
        expected = np.logspace(0, -6, 6)
        a = (q1 * expected) @ q2.T
        np.testing.assert_allclose(linalg.singular_values(a), expected, rtol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(
        rows=st.integers(min_value=1, max_value=12),
        cols=st.integers(min_value=1, max_value=12),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_random_shapes(self, rows, cols, seed):
        """Test the factor properties on arbitrary shapes."""
        a = linalg.random_gaussian(rows, cols, RngStream(seed=seed))
        self.assert_valid_factors(a, linalg.svd(a))


class ConditionNumberTests(unittest.TestCase):
    """Unit tests for the condition number."""

    def test_identity(self):
        """Test that the identity is perfectly conditioned."""
        self.assertAlmostEqual(linalg.condition_number(np.eye(5)), 1.0, places=14)
        self.assertAlmostEqual(linalg.log_condition_number(np.eye(5)), 0.0, places=14)

    def test_diagonal(self):
        """Test the ratio of extreme diagonal entries."""
        self.assertAlmostEqual(linalg.condition_number(np.diag([10.0, 2.0, 0.5])), 20.0, places=10)

    def test_eigenvalue_oracle(self):
        """Test against the Gram matrix eigenvalue oracle."""
        a = linalg.random_gaussian(16, 8, RngStream(seed=11))
        sigma = eigen_singular_values(a)
        self.assertAlmostEqual(
            linalg.condition_number(a) / (sigma[0] / sigma[-1]), 1.0, delta=1e-8,
        )

    def test_scale_invariance(self):
        """Test that scaling a matrix keeps its condition number."""
        a = linalg.random_gaussian(9, 4, RngStream(seed=12))
        kappa = linalg.condition_number(a)
        for c in (-3.0, 1e-4, 250.0):
            self.assertAlmostEqual(linalg.condition_number(c * a) / kappa, 1.0, delta=1e-10)

    def test_orthogonal_invariance(self):
        """Test that orthogonal transforms keep the condition number."""
        generator = RngStream(seed=13).generator()
        a = generator.standard_normal((6, 6))
        q, _ = np.linalg.qr(generator.standard_normal((6, 6)))
        self.assertAlmostEqual(
            linalg.condition_number(q @ a) / linalg.condition_number(a), 1.0, delta=1e-9,
        )

    def test_rank_deficient(self):
        """Test that rank-deficient input reports the rank tolerance."""
        a = np.outer([1.0, 2.0, 3.0], [1.0, 1.0])
        with self.assertRaises(CondlabRankDeficientError) as context:
            linalg.condition_number(a)
        self.assertGreater(context.exception.tolerance, 0.0)
        self.assertIn("effectively infinite", str(context.exception))
        self.assertEqual(linalg.log_condition_number(a, strict=False), math.inf)

    def test_zero_matrix(self):
        """Test that the zero matrix is rank deficient."""
        with self.assertRaises(CondlabRankDeficientError):
            linalg.condition_number(np.zeros((3, 3)))
        self.assertEqual(linalg.numerical_rank(np.zeros((3, 3))), 0)


class RandomTests(unittest.TestCase):
    """Unit tests for seeded random matrices."""

    def test_reproducible(self):
        """Test that a stream always yields the same matrix."""
        stream = RngStream(seed=42, stream_id=3)
        np.testing.assert_array_equal(
            linalg.random_gaussian(4, 3, stream), linalg.random_gaussian(4, 3, stream),
        )

    def test_streams_differ(self):
        """Test that distinct stream ids yield distinct draws."""
        a = linalg.random_gaussian(4, 3, RngStream(seed=42, stream_id=0))
        b = linalg.random_gaussian(4, 3, RngStream(seed=42, stream_id=1))
        self.assertFalse(np.allclose(a, b))

    def test_invalid_shape(self):
        """Test that empty dimensions are rejected."""
        with self.assertRaises(CondlabShapeError):
            linalg.random_gaussian(0, 3, RngStream(seed=1))


if __name__ == "__main__":
    unittest.main()
