# -*- encoding: utf-8 -*-
"""Token graying.

Token graying lowers the condition number of the input tokens before they are
embedded. SVD graying normalizes the singular values to (0, 1] and raises them
to the power epsilon. DCT graying does the same to the magnitudes of the 2-D
DCT coefficients and rescales by the largest one, which is a cheap stand-in
for the SVD when the dominant singular vectors are close to cosine modes.

Graying is applied per image to the token matrix of shape
(patch count) x (flattened patch dimension), before patch embedding.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from condlab import linalg
from condlab.schema.core import DctBasis, GrayingConfig, GrayingMethod, RngStream
from condlab.schema.exception import (
    CondlabError,
    CondlabGrayingError,
    CondlabShapeError,
)
from condlab.utils import run_batched

logger = logging.getLogger("condlab")


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon <= 1.0:
        raise CondlabGrayingError(f"epsilon must lie in (0, 1], got {epsilon}")


def svd_token_gray(x, epsilon: float, rescale: bool = False) -> np.ndarray:
    """Condition a token matrix through its singular values.

    Computes `U (S / s_max)**epsilon V^T`. The largest singular value of the
    result is 1, so `kappa(result) == kappa(x)**epsilon`. Singular values that
    are zero stay zero.

    Args:
        x (array_like): Token matrix.
        epsilon (float): Amplification coefficient in (0, 1].
        rescale (bool): Multiply the result by the largest singular value of
            `x`, keeping the dominant component unchanged.

    Returns:
        np.ndarray: The grayed token matrix.
    """
    _check_epsilon(epsilon)
    matrix = linalg.as_matrix(x, "token matrix")
    factors = linalg.svd(matrix)
    sigma_max = factors.sigma_max
    if sigma_max == 0.0:
        logger.warning("Token matrix is all zero; returning it unchanged.")
        return matrix.copy()
    tolerance = linalg.rank_tolerance(factors.sigma, matrix.shape)
    sigma = factors.sigma.copy()
    if sigma[-1] <= tolerance:
        logger.warning(
            "Rank-deficient %dx%d token matrix; %d singular values map to zero.",
            matrix.shape[0],
            matrix.shape[1],
            int(np.sum(sigma <= tolerance)),
        )
        sigma[sigma <= tolerance] = 0.0
    amplified = np.power(sigma / sigma_max, epsilon)
    grayed = (factors.u * amplified) @ factors.v.T
    return grayed * sigma_max if rescale else grayed


@lru_cache(maxsize=64)
def _dct_matrix(n: int) -> np.ndarray:
    i = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    alpha = np.where(k == 0, math.sqrt(1.0 / n), math.sqrt(2.0 / n))
    matrix = alpha * np.cos(math.pi * (2 * i + 1) * k / (2 * n))
    matrix.setflags(write=False)
    return matrix


def build_dct_basis(n: int) -> DctBasis:
    """Build the orthonormal DCT-II basis of size n.

    Entry `[i, k]` is `alpha_k cos(pi (2i + 1) k / 2n)` with
    `alpha_0 = sqrt(1/n)` and `alpha_k = sqrt(2/n)` otherwise.
    """
    if n < 1:
        raise CondlabShapeError("DCT basis size must be positive", ((n,),))
    alpha = np.full(n, math.sqrt(2.0 / n))
    alpha[0] = math.sqrt(1.0 / n)
    return DctBasis(size=n, matrix=np.array(_dct_matrix(n)), alpha=alpha)


def dct2(x) -> np.ndarray:
    """Two-dimensional orthonormal DCT-II of a matrix."""
    matrix = linalg.as_matrix(x)
    left = _dct_matrix(matrix.shape[0])
    right = _dct_matrix(matrix.shape[1])
    return left.T @ matrix @ right


def idct2(xhat) -> np.ndarray:
    """Inverse of `dct2`."""
    coefficients = linalg.as_matrix(xhat)
    left = _dct_matrix(coefficients.shape[0])
    right = _dct_matrix(coefficients.shape[1])
    return left @ coefficients @ right.T


def dct_token_gray(x, epsilon: float) -> np.ndarray:
    """Condition a token matrix through its DCT coefficients.

    The coefficient magnitudes are normalized by the largest magnitude `m`,
    raised to the power `epsilon` and scaled back by `m`, keeping every sign.
    An all-zero input is returned unchanged.
    """
    _check_epsilon(epsilon)
    coefficients = dct2(x)
    peak = float(np.max(np.abs(coefficients)))
    if peak == 0.0:
        return linalg.as_matrix(x).copy()
    amplified = np.power(np.abs(coefficients) / peak, epsilon) * np.sign(coefficients) * peak
    return idct2(amplified)


def gray(x, config: GrayingConfig) -> np.ndarray:
    """Apply the configured graying method to one token matrix."""
    if config.method == GrayingMethod.SVD:
        return svd_token_gray(x, config.epsilon, rescale=config.rescale)
    if config.method == GrayingMethod.DCT:
        return dct_token_gray(x, config.epsilon)
    return np.array(linalg.as_matrix(x, "token matrix"))


def gray_batch(
    batch: Sequence,
    config: GrayingConfig,
    max_threads: Optional[int] = None,
) -> List[np.ndarray]:
    """Apply token graying to every matrix of a batch independently.

    Samples may be processed concurrently; the output is ordered like the input.

    Raises:
        CondlabGrayingError: If the samples do not share one shape, or a sample
            fails. The error carries the index of the offending sample.
    """
    if len(batch) == 0:
        return []
    reference = np.shape(batch[0])
    for index, sample in enumerate(batch):
        if np.shape(sample) != reference:
            raise CondlabGrayingError(
                f"shape {np.shape(sample)} differs from {reference}",
                index=index,
            )

    def gray_sample(index: int, sample) -> np.ndarray:
        try:
            return gray(sample, config)
        except CondlabGrayingError as e:
            raise CondlabGrayingError(e.message, index=index) from None
        except CondlabError as e:
            raise CondlabGrayingError(str(e), index=index) from None

    return run_batched(gray_sample, batch, max_threads=max_threads, description="samples")


def gray_tokens(tokens: np.ndarray, config: GrayingConfig) -> np.ndarray:
    """Gray a stack of token matrices of shape (N, n, d)."""
    if config.method == GrayingMethod.NONE:
        return np.array(tokens, dtype=np.float64)
    return np.stack(gray_batch(list(tokens), config))


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Cut images into non-overlapping patches and flatten each patch.

    Args:
        images (np.ndarray): Images of shape (..., H, W, C).
        patch_size (int): Side length p of the square patches.

    Raises:
        CondlabShapeError: If H or W is not divisible by the patch size.

    Returns:
        np.ndarray: Tokens of shape (..., (H/p)(W/p), p*p*C). Patches are
            ordered row by row and flattened channel-major.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim < 3:  # noqa: PLR2004
        raise CondlabShapeError("images must have shape (..., H, W, C)", (images.shape,))
    *lead, height, width, channels = images.shape
    if height % patch_size or width % patch_size:
        raise CondlabShapeError(
            f"image size {height}x{width} is not divisible by patch size {patch_size}",
            (images.shape,),
        )
    rows, cols = height // patch_size, width // patch_size
    patches = images.reshape(*lead, rows, patch_size, cols, patch_size, channels)
    lead_axes = tuple(range(len(lead)))
    base = len(lead)
    patches = patches.transpose(
        *lead_axes, base, base + 2, base + 4, base + 1, base + 3,
    )
    return patches.reshape(*lead, rows * cols, channels * patch_size * patch_size)


def unpatchify(
    tokens: np.ndarray,
    patch_size: int,
    height: int,
    width: int,
    channels: int,
) -> np.ndarray:
    """Inverse of `patchify`."""
    tokens = np.asarray(tokens, dtype=np.float64)
    *lead, _, _ = tokens.shape
    rows, cols = height // patch_size, width // patch_size
    patches = tokens.reshape(*lead, rows, cols, channels, patch_size, patch_size)
    base = len(lead)
    patches = patches.transpose(
        *range(base), base, base + 3, base + 1, base + 4, base + 2,
    )
    return patches.reshape(*lead, height, width, channels)


def dct_graying_trials(
    size: int,
    epsilon: float,
    trials: int,
    stream: RngStream,
) -> dict:
    """Measure how often DCT graying lowers the condition number of Gaussian matrices.

    Returns:
        dict: Fraction of trials with a lower condition number after graying,
            the median natural-log reduction and the trial settings.
    """
    reductions = []
    for trial in range(trials):
        x = linalg.gaussian(stream.generator(trial), size, size)
        before = linalg.log_condition_number(x, strict=False)
        after = linalg.log_condition_number(dct_token_gray(x, epsilon), strict=False)
        reductions.append(before - after)
    reductions = np.asarray(reductions)
    return {
        "size": size,
        "epsilon": epsilon,
        "trials": trials,
        "seed": stream.seed,
        "fraction_reduced": float(np.mean(reductions > 0)) if trials else math.nan,
        "median_log_reduction": float(np.median(reductions)) if trials else math.nan,
    }
