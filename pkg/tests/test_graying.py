# -*- encoding: utf-8 -*-
"""Tests for token graying."""

import math
import os
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import fft

from condlab import graying, linalg
from condlab.schema import (
    CondlabGrayingError,
    CondlabShapeError,
    GrayingConfig,
    GrayingMethod,
    RngStream,
)

SLOW = os.environ.get("CONDLAB_SLOW_TESTS", "") not in ("", "0")


def principal_angle_sines(a, b):
    """Sines of the principal angles between the column spaces of a and b."""
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.sqrt(np.maximum(1.0 - np.minimum(cosines, 1.0) ** 2, 0.0))


class SvdGrayingTests(unittest.TestCase):
    """Unit tests for SVD token graying."""

    def test_condition_law(self):
        """Test that graying raises the condition number to the power epsilon."""
        for index, epsilon in enumerate((0.5, 0.7, 0.95, 1.0)):
            for trial in range(25):
                x = linalg.random_gaussian(16, 8, RngStream(seed=index, stream_id=trial))
                grayed = graying.svd_token_gray(x, epsilon)
                self.assertAlmostEqual(
                    linalg.log_condition_number(grayed)
                    / (epsilon * linalg.log_condition_number(x)),
                    1.0,
                    delta=1e-6,
                )

    def test_square_example(self):
        """Test the condition law on a square matrix."""
        x = linalg.random_gaussian(8, 8, RngStream(seed=21))
        grayed = graying.svd_token_gray(x, 0.7)
        self.assertAlmostEqual(
            linalg.log_condition_number(grayed) / linalg.log_condition_number(x),
            0.7,
            delta=0.7e-6,
        )

    def test_unit_spectral_norm(self):
        """Test that the largest singular value of the result is one."""
        x = 5.0 * linalg.random_gaussian(10, 6, RngStream(seed=2))
        self.assertAlmostEqual(linalg.singular_values(graying.svd_token_gray(x, 0.6))[0], 1.0, places=12)

    def test_rescale(self):
        """Test that rescaling restores the largest singular value."""
        x = linalg.random_gaussian(10, 6, RngStream(seed=3))
        grayed = graying.svd_token_gray(x, 0.6, rescale=True)
        self.assertAlmostEqual(
            linalg.singular_values(grayed)[0] / linalg.singular_values(x)[0], 1.0, places=12,
        )

    def test_identity_matrix(self):
        """Test that the identity stays the identity."""
        np.testing.assert_allclose(graying.svd_token_gray(np.eye(4), 0.5), np.eye(4), atol=1e-12)

    def test_diagonal(self):
        """Test graying of a diagonal matrix."""
        grayed = graying.svd_token_gray(np.diag([4.0, 1.0]), 0.5)
        np.testing.assert_allclose(grayed, np.diag([1.0, 0.5]), atol=1e-12)

    def test_preserves_singular_vectors(self):
        """Test that the singular subspaces are kept."""
        x = linalg.random_gaussian(12, 5, RngStream(seed=4))
        before = linalg.svd(x)
        after = linalg.svd(graying.svd_token_gray(x, 0.4))
        for k in range(1, 5):
            self.assertLess(principal_angle_sines(before.u[:, :k], after.u[:, :k]).max(), 1e-6)
            self.assertLess(principal_angle_sines(before.v[:, :k], after.v[:, :k]).max(), 1e-6)

    def test_monotone_in_epsilon(self):
        """Test that smaller epsilon yields a better conditioned result."""
        x = linalg.random_gaussian(16, 8, RngStream(seed=5))
        values = [
            linalg.log_condition_number(graying.svd_token_gray(x, epsilon))
            for epsilon in (1.0, 0.9, 0.7, 0.5, 0.1)
        ]
        self.assertTrue(all(a > b for a, b in zip(values, values[1:])))

    def test_zero_matrix(self):
        """Test that an all-zero matrix is returned unchanged."""
        np.testing.assert_array_equal(graying.svd_token_gray(np.zeros((3, 2)), 0.5), np.zeros((3, 2)))

    def test_rank_deficient(self):
        """Test that zero singular values stay zero."""
        x = np.outer([1.0, 2.0, 3.0], [1.0, -1.0])
        grayed = graying.svd_token_gray(x, 0.5)
        self.assertEqual(linalg.numerical_rank(grayed), 1)

    def test_invalid_epsilon(self):
        """Test that epsilon outside (0, 1] is rejected."""
        for epsilon in (0.0, -0.5, 1.5):
            with self.assertRaises(CondlabGrayingError):
                graying.svd_token_gray(np.eye(2), epsilon)

    @settings(max_examples=25, deadline=None)
    @given(
        epsilon=st.floats(min_value=0.05, max_value=1.0),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_condition_law_property(self, epsilon, seed):
        """Test the condition law for arbitrary epsilon."""
        x = linalg.random_gaussian(9, 6, RngStream(seed=seed))
        expected = epsilon * linalg.log_condition_number(x)
        actual = linalg.log_condition_number(graying.svd_token_gray(x, epsilon))
        self.assertLessEqual(abs(actual - expected), 1e-6 * max(abs(expected), 1e-3))


class DctTests(unittest.TestCase):
    """Unit tests for the DCT basis and transforms."""

    def test_basis_orthogonality(self):
        """Test that the basis is orthogonal for several sizes."""
        for n in (1, 2, 4, 8, 16, 64, 196):
            basis = graying.build_dct_basis(n)
            self.assertLess(np.abs(basis.matrix.T @ basis.matrix - np.eye(n)).max(), 1e-12)
            self.assertLess(np.abs(basis.matrix @ basis.matrix.T - np.eye(n)).max(), 1e-12)

    def test_basis_first_column(self):
        """Test that the first basis vector is constant."""
        basis = graying.build_dct_basis(4)
        np.testing.assert_allclose(basis.matrix[:, 0], np.full(4, 0.5), atol=1e-15)
        np.testing.assert_allclose(basis.alpha, [0.5, math.sqrt(0.5), math.sqrt(0.5), math.sqrt(0.5)])

    def test_invalid_size(self):
        """Test that an empty basis is rejected."""
        with self.assertRaises(CondlabShapeError):
            graying.build_dct_basis(0)

    def test_matches_scipy(self):
        """Test the transform against the orthonormal DCT-II of scipy."""
        x = linalg.random_gaussian(7, 12, RngStream(seed=6))
        np.testing.assert_allclose(graying.dct2(x), fft.dctn(x, type=2, norm="ortho"), atol=1e-12)

    def test_constant_matrix(self):
        """Test that a constant matrix has a single coefficient."""
        coefficients = graying.dct2(np.full((4, 6), 2.0))
        self.assertAlmostEqual(coefficients[0, 0], 2.0 * math.sqrt(24.0), places=12)
        rest = coefficients.copy()
        rest[0, 0] = 0.0
        self.assertLess(np.abs(rest).max(), 1e-12)

    def test_round_trip(self):
        """Test that the inverse transform recovers the input."""
        x = linalg.random_gaussian(32, 32, RngStream(seed=7))
        self.assertLess(np.abs(graying.idct2(graying.dct2(x)) - x).max(), 1e-12)

    def test_preserves_norm(self):
        """Test that the transform keeps the Frobenius norm."""
        x = linalg.random_gaussian(16, 9, RngStream(seed=8))
        self.assertAlmostEqual(
            np.linalg.norm(graying.dct2(x)) / np.linalg.norm(x), 1.0, delta=1e-12,
        )


class DctGrayingTests(unittest.TestCase):
    """Unit tests for DCT token graying."""

    def test_identity_at_one(self):
        """Test that epsilon one leaves the input unchanged."""
        x = linalg.random_gaussian(8, 6, RngStream(seed=9))
        self.assertLess(np.abs(graying.dct_token_gray(x, 1.0) - x).max(), 1e-12)

    def test_constant_matrix(self):
        """Test that a constant matrix is unchanged for any epsilon."""
        x = np.full((5, 3), -1.5)
        self.assertLess(np.abs(graying.dct_token_gray(x, 0.3) - x).max(), 1e-12)

    def test_zero_matrix(self):
        """Test that an all-zero matrix is returned unchanged."""
        np.testing.assert_array_equal(graying.dct_token_gray(np.zeros((2, 2)), 0.5), np.zeros((2, 2)))

    def test_reduces_condition_number(self):
        """Test that DCT graying usually lowers the condition number."""
        trials = 1000 if SLOW else 100
        result = graying.dct_graying_trials(32, 0.9, trials, RngStream(seed=10))
        self.assertGreaterEqual(result["fraction_reduced"], 0.9)
        self.assertGreater(result["median_log_reduction"], 0.0)
        self.assertEqual(result["trials"], trials)

    def test_no_trials(self):
        """Test that zero trials give undefined statistics."""
        result = graying.dct_graying_trials(8, 0.9, 0, RngStream(seed=10))
        self.assertTrue(math.isnan(result["fraction_reduced"]))


class BatchTests(unittest.TestCase):
    """Unit tests for batched graying and patch extraction."""

    def test_gray_dispatch(self):
        """Test that the configured method is applied."""
        x = linalg.random_gaussian(6, 4, RngStream(seed=11))
        np.testing.assert_array_equal(graying.gray(x, GrayingConfig()), x)
        np.testing.assert_allclose(
            graying.gray(x, GrayingConfig(method=GrayingMethod.SVD, epsilon=0.5)),
            graying.svd_token_gray(x, 0.5),
        )
        np.testing.assert_allclose(
            graying.gray(x, GrayingConfig(method=GrayingMethod.DCT, epsilon=0.5)),
            graying.dct_token_gray(x, 0.5),
        )

    def test_batch_is_per_sample(self):
        """Test that batched graying equals per-sample graying in order."""
        config = GrayingConfig(method=GrayingMethod.SVD, epsilon=0.7)
        batch = [linalg.random_gaussian(6, 4, RngStream(seed=12, stream_id=i)) for i in range(5)]
        grayed = graying.gray_batch(batch, config, max_threads=3)
        self.assertEqual(len(grayed), 5)
        for sample, result in zip(batch, grayed):
            np.testing.assert_allclose(result, graying.svd_token_gray(sample, 0.7))

    def test_empty_batch(self):
        """Test that an empty batch yields an empty list."""
        self.assertEqual(graying.gray_batch([], GrayingConfig(method=GrayingMethod.DCT)), [])

    def test_batch_shape_mismatch(self):
        """Test that a sample of another shape is reported with its index."""
        batch = [np.ones((3, 2)), np.ones((3, 2)), np.ones((2, 3))]
        with self.assertRaises(CondlabGrayingError) as context:
            graying.gray_batch(batch, GrayingConfig(method=GrayingMethod.SVD))
        self.assertEqual(context.exception.index, 2)
        self.assertIn("Sample 2", str(context.exception))

    def test_batch_failing_sample(self):
        """Test that a sample with NaN entries is reported with its index."""
        bad = np.ones((3, 2))
        bad[1, 1] = np.nan
        with self.assertRaises(CondlabGrayingError) as context:
            graying.gray_batch([np.eye(3, 2), bad], GrayingConfig(method=GrayingMethod.SVD))
        self.assertEqual(context.exception.index, 1)

    def test_gray_tokens_none(self):
        """Test that no graying returns a float copy of the tokens."""
        tokens = np.arange(24, dtype=np.int64).reshape(2, 3, 4)
        result = graying.gray_tokens(tokens, GrayingConfig())
        self.assertEqual(result.dtype, np.float64)
        np.testing.assert_array_equal(result, tokens)

    def test_patchify_layout(self):
        """Test patch order and flattening of a single image."""
        image = np.arange(4 * 4 * 2, dtype=np.float64).reshape(4, 4, 2)
        tokens = graying.patchify(image, 2)
        self.assertEqual(tokens.shape, (4, 8))
        # first patch, channel 0 then channel 1
        np.testing.assert_array_equal(tokens[0, :4], [0.0, 2.0, 8.0, 10.0])
        np.testing.assert_array_equal(tokens[0, 4:], [1.0, 3.0, 9.0, 11.0])
        np.testing.assert_array_equal(tokens[1, :4], [4.0, 6.0, 12.0, 14.0])

    def test_unpatchify_inverts(self):
        """Test that unpatchify restores a batch of images."""
        images = RngStream(seed=13).generator().standard_normal((3, 8, 12, 3))
        tokens = graying.patchify(images, 4)
        self.assertEqual(tokens.shape, (3, 6, 48))
        np.testing.assert_array_equal(graying.unpatchify(tokens, 4, 8, 12, 3), images)

    def test_patchify_indivisible(self):
        """Test that the image size must be divisible by the patch size."""
        with self.assertRaises(CondlabShapeError):
            graying.patchify(np.zeros((5, 4, 1)), 2)


if __name__ == "__main__":
    unittest.main()
