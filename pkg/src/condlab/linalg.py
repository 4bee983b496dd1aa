# -*- encoding: utf-8 -*-
"""Dense linear algebra used throughout condlab.

Matrices are two-dimensional float64 `numpy.ndarray` objects with finite
entries. The singular value decomposition is a one-sided Jacobi method: the
columns of the (tall) input are orthogonalized by plane rotations in cyclic
sweeps until every pair is orthogonal to a relative tolerance. Rotations of
disjoint column pairs commute, so every sweep is scheduled as a round-robin
tournament and each round is applied to all of its pairs at once.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from condlab.config import get_settings
from condlab.schema.core import RngStream, SvdFactors
from condlab.schema.exception import (
    CondlabNonFiniteError,
    CondlabRankDeficientError,
    CondlabShapeError,
)

logger = logging.getLogger("condlab")

EPS = float(np.finfo(np.float64).eps)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert the input to a finite float64 matrix.

    Args:
        a (array_like): The input.
        name (str): Name used in error messages.

    Raises:
        CondlabShapeError: If the input is not two-dimensional or empty.
        CondlabNonFiniteError: If any entry is NaN or infinite.

    Returns:
        np.ndarray: The input as a float64 matrix (not copied if already one).
    """
    matrix = np.asarray(a, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:  # noqa: PLR2004
        raise CondlabShapeError(f"{name} must be a non-empty 2-D matrix", (matrix.shape,))
    if not np.all(np.isfinite(matrix)):
        raise CondlabNonFiniteError(f"{name} contains NaN or infinite entries")
    return matrix


def matmul(a, b) -> np.ndarray:
    """Multiply two matrices in float64.

    Raises:
        CondlabShapeError: If the inner dimensions do not agree.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise CondlabShapeError(
            "inner dimensions of matrix product do not agree",
            (a.shape, b.shape),
        )
    return a @ b


@lru_cache(maxsize=None)
def _round_robin(m: int) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
    """Schedule all column pairs of an m-column matrix into rounds of disjoint pairs."""
    size = m + (m % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        p = np.array(players[: size // 2])
        q = np.array(players[size // 2 :][::-1])
        keep = (p < m) & (q < m)
        lo = np.minimum(p[keep], q[keep])
        hi = np.maximum(p[keep], q[keep])
        rounds.append((lo, hi))
        players = [players[0], players[-1], *players[1:-1]]
    return tuple(rounds)


def _orthogonalize_columns(
    work: np.ndarray,
    v: Optional[np.ndarray],
    tolerance: float,
    max_sweeps: int,
) -> int:
    """Rotate the columns of `work` (in place) until they are mutually orthogonal.

    Rotations are mirrored on `v` if given. Returns the number of sweeps used.
    """
    rounds = _round_robin(work.shape[1])
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            ap = work[:, p]
            aq = work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tolerance * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            if not active.all():
                p, q = p[active], q[active]
                ap, aq = ap[:, active], aq[:, active]
                alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(
                zeta == 0.0,
                1.0,
                np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta)),
            )
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
            if v is not None:
                vp = v[:, p]
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            return sweep
    logger.warning(
        "Jacobi SVD did not converge within %d sweeps for a %dx%d matrix.",
        max_sweeps,
        work.shape[0],
        work.shape[1],
    )
    return max_sweeps


def _complete_basis(basis: np.ndarray, missing: int) -> np.ndarray:
    """Return `missing` orthonormal columns orthogonal to the columns of `basis`."""
    n, k = basis.shape
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(n)]))
    return q[:, k : k + missing]


def _tall_svd(
    a: np.ndarray,
    compute_uv: bool,
    tolerance: float,
    max_sweeps: int,
) -> Tuple[Optional[np.ndarray], np.ndarray, Optional[np.ndarray]]:
    work = a.copy()
    v = np.eye(a.shape[1]) if compute_uv else None
    _orthogonalize_columns(work, v, tolerance, max_sweeps)
    sigma = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    if not compute_uv:
        return None, sigma, None
    work = work[:, order]
    v = v[:, order]
    cutoff = rank_tolerance(sigma, a.shape)
    good = sigma > cutoff
    u = np.zeros_like(work)
    u[:, good] = work[:, good] / sigma[good]
    missing = int((~good).sum())
    if missing:
        u[:, ~good] = _complete_basis(u[:, good], missing)
    return u, sigma, v


def _decompose(a, compute_uv: bool, tolerance, max_sweeps):
    matrix = as_matrix(a)
    config = get_settings()
    tolerance = config.svd_tolerance if tolerance is None else tolerance
    max_sweeps = config.svd_max_sweeps if max_sweeps is None else max_sweeps
    if matrix.shape[0] >= matrix.shape[1]:
        return _tall_svd(matrix, compute_uv, tolerance, max_sweeps)
    v, sigma, u = _tall_svd(matrix.T, compute_uv, tolerance, max_sweeps)
    return u, sigma, v


def svd(
    a,
    tolerance: Optional[float] = None,
    max_sweeps: Optional[int] = None,
) -> SvdFactors:
    """Compute the thin singular value decomposition of a matrix.

    Args:
        a (array_like): An n x d matrix with finite entries.
        tolerance (float, optional): Relative orthogonality tolerance of the
            Jacobi rotations. Defaults to the `svd_tolerance` configuration value.
        max_sweeps (int, optional): Maximum number of Jacobi sweeps. Defaults to
            the `svd_max_sweeps` configuration value.

    Raises:
        CondlabNonFiniteError: If the input contains NaN or infinite entries.

    Returns:
        SvdFactors: `u` (n x r), descending `sigma` (r) and `v` (d x r) with
            r = min(n, d). Left singular vectors belonging to numerically zero
            singular values are completed to an orthonormal set.
    """
    u, sigma, v = _decompose(a, True, tolerance, max_sweeps)
    return SvdFactors(u=u, sigma=sigma, v=v)


def singular_values(
    a,
    tolerance: Optional[float] = None,
    max_sweeps: Optional[int] = None,
) -> np.ndarray:
    """Compute the descending singular values without the singular vectors."""
    return _decompose(a, False, tolerance, max_sweeps)[1]


def reconstruct(factors: SvdFactors) -> np.ndarray:
    """Multiply the factors back together: `u @ diag(sigma) @ v.T`."""
    return (factors.u * factors.sigma) @ factors.v.T


def rank_tolerance(sigma: Sequence[float], shape: Tuple[int, int]) -> float:
    """Threshold below which a singular value counts as numerically zero.

    Uses the usual convention `max(n, d) * eps * sigma_max`.
    """
    sigma_max = float(np.max(sigma)) if len(sigma) else 0.0
    return max(shape) * EPS * sigma_max


def numerical_rank(a) -> int:
    """Number of singular values above the rank tolerance."""
    matrix = as_matrix(a)
    sigma = singular_values(matrix)
    if sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > rank_tolerance(sigma, matrix.shape)))


def condition_from_singular_values(
    sigma: np.ndarray,
    shape: Tuple[int, int],
    strict: bool = True,
) -> float:
    """Condition number from an already computed descending singular value vector.

    Raises:
        CondlabRankDeficientError: If `strict` and the smallest singular value
            is below the rank tolerance. Without `strict`, infinity is returned.
    """
    sigma_max = float(sigma[0])
    sigma_min = float(sigma[-1])
    tolerance = rank_tolerance(sigma, shape)
    if sigma_max == 0.0 or sigma_min <= tolerance:
        if strict:
            raise CondlabRankDeficientError(
                f"{shape[0]}x{shape[1]} matrix is rank deficient",
                tolerance=tolerance,
                sigma_min=sigma_min,
                sigma_max=sigma_max,
            )
        return math.inf
    return sigma_max / sigma_min


def condition_number(a) -> float:
    """Compute the spectral condition number sigma_max / sigma_min.

    Raises:
        CondlabRankDeficientError: If the matrix is numerically rank deficient.
            The error carries the rank tolerance that was used.
    """
    matrix = as_matrix(a)
    return condition_from_singular_values(singular_values(matrix), matrix.shape)


def log_condition_number(a, strict: bool = True) -> float:
    """Natural logarithm of the condition number.

    Args:
        a (array_like): The matrix.
        strict (bool): If False, rank-deficient input yields `inf` instead of
            raising.

    Returns:
        float: ln(sigma_max / sigma_min).
    """
    matrix = as_matrix(a)
    kappa = condition_from_singular_values(
        singular_values(matrix),
        matrix.shape,
        strict=strict,
    )
    return math.log(kappa)


def gaussian(
    generator: np.random.Generator,
    rows: int,
    cols: int,
    std: float = 1.0,
) -> np.ndarray:
    """Draw a rows x cols matrix of i.i.d. zero-mean normal entries from a generator."""
    if rows < 1 or cols < 1:
        raise CondlabShapeError("matrix dimensions must be positive", ((rows, cols),))
    return std * generator.standard_normal((rows, cols))


def random_gaussian(rows: int, cols: int, stream: RngStream) -> np.ndarray:
    """Draw a matrix of i.i.d. standard normal entries.

    The same `stream` always yields the same matrix.
    """
    return gaussian(stream.generator(), rows, cols)
