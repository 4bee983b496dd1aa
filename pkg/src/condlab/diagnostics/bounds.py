# -*- encoding: utf-8 -*-
"""Randomized verification of the condition number bounds.

Every suite draws its trials from `stream.generator(trial)`, so trial `i` is
the same no matter how many threads evaluate the suite or in which order.
Token matrices X are n x d with i.i.d. normal entries of std 1/sqrt(d), weight
matrices use std 1/sqrt(fan_in).

The single-trial functions accept explicit matrices, which is how constructed
cases (orthogonal factors, identity kernels, ...) are checked.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from condlab import linalg
from condlab.schema.core import BoundTrial, BoundTrialStats, Padding, RngStream
from condlab.schema.exception import CondlabRankDeficientError, CondlabShapeError
from condlab.utils import run_batched
from condlab.vitcore.convmixer import depthwise_conv_matrix

logger = logging.getLogger("condlab")

# relative slack for bounds that hold exactly in exact arithmetic
RELATIVE_SLACK = 1e-9
MAX_REDRAWS = 100

PROP2_THRESHOLDS = {"min_fraction_satisfied": 0.95, "max_median_log_ratio": -1.0}
EXACT_THRESHOLDS = {"min_fraction_satisfied": 1.0}

TrialFunction = Callable[[np.random.Generator, int], BoundTrial]


def _spectrum(a: np.ndarray) -> Tuple[float, float, float]:
    """Largest and smallest singular value and condition number (inf if singular)."""
    matrix = linalg.as_matrix(a)
    sigma = linalg.singular_values(matrix)
    kappa = linalg.condition_from_singular_values(sigma, matrix.shape, strict=False)
    return float(sigma[0]), float(sigma[-1]), kappa


def _token_spectrum(x: np.ndarray) -> Tuple[float, float, float]:
    sigma_max, sigma_min, kappa = _spectrum(x)
    if math.isinf(kappa):
        raise CondlabRankDeficientError(
            "token matrix is rank deficient",
            tolerance=linalg.rank_tolerance([sigma_max], x.shape),
            sigma_min=sigma_min,
            sigma_max=sigma_max,
        )
    return sigma_max, sigma_min, kappa


def _check_dims(n: int, d: int) -> None:
    if d < 1 or n < d:
        raise CondlabShapeError(f"bound suites need n >= d >= 1, got n={n}, d={d}")


def _within(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1.0 + RELATIVE_SLACK)


def prop1_trial(
    x: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    index: int = 0,
) -> BoundTrial:
    """Check `kappa(X W_Q W_K^T X^T X W_V) <= C * kappa(X)^3` for one draw.

    C is the measured product of the condition numbers of the three weights.

    Raises:
        CondlabRankDeficientError: If X is rank deficient.
    """
    sigma_max, sigma_min, _ = _token_spectrum(x)
    product = x @ w_q @ w_k.T @ x.T @ x @ w_v
    lhs = _spectrum(product)[2]
    c_q, c_k, c_v = (_spectrum(w)[2] for w in (w_q, w_k, w_v))
    c = c_q * c_k * c_v
    rhs = c * (sigma_max / sigma_min) ** 3
    return BoundTrial(
        index=index,
        lhs=lhs,
        rhs=rhs,
        sigma_max=sigma_max,
        sigma_min=sigma_min,
        satisfied=_within(lhs, rhs),
        c_values={"q": c_q, "k": c_k, "v": c_v, "product": c},
        flagged=math.isinf(lhs),
    )


def prop2_trial(
    x: np.ndarray,
    m: np.ndarray,
    index: int = 0,
    c: Optional[float] = None,
) -> BoundTrial:
    """Compare `kappa(X M + X)` (lhs) with `kappa(X M)` (rhs) for one draw.

    A trial is satisfied if the skip connection lowers the condition number.
    Singular X M is flagged; it counts as satisfied but is excluded from the
    ratio statistics. With the weight condition product `c`, the bound values
    `C s_max^3 / s_min^3` and `(C s_max^3 + s_max) / (s_min^3 + s_min)` are
    recorded as extras.

    Raises:
        CondlabRankDeficientError: If X is rank deficient.
    """
    sigma_max, sigma_min, _ = _token_spectrum(x)
    xm = x @ m
    lhs = _spectrum(xm + x)[2]
    rhs = _spectrum(xm)[2]
    extras: Dict[str, float] = {}
    c_values: Dict[str, float] = {}
    if c is not None:
        c_values["product"] = c
        extras["bound_xm"] = c * sigma_max**3 / sigma_min**3
        extras["bound_xm_skip"] = (c * sigma_max**3 + sigma_max) / (sigma_min**3 + sigma_min)
    return BoundTrial(
        index=index,
        lhs=lhs,
        rhs=rhs,
        sigma_max=sigma_max,
        sigma_min=sigma_min,
        satisfied=lhs < rhs,
        c_values=c_values,
        extras=extras,
        flagged=math.isinf(rhs) or math.isinf(lhs),
    )


def ffn_trial(
    x: np.ndarray,
    w_up: np.ndarray,
    w_down: np.ndarray,
    index: int = 0,
) -> BoundTrial:
    """Check `kappa(X W_up W_down) <= kappa(W_up W_down) * kappa(X)` for one draw.

    The factored value `kappa(W_up) * kappa(W_down) * kappa(X)` is recorded as
    the `factored` extra.

    Raises:
        CondlabRankDeficientError: If X is rank deficient.
    """
    sigma_max, sigma_min, kappa_x = _token_spectrum(x)
    composed = w_up @ w_down
    lhs = _spectrum(x @ composed)[2]
    c_composed = _spectrum(composed)[2]
    c_up = _spectrum(w_up)[2]
    c_down = _spectrum(w_down)[2]
    rhs = c_composed * kappa_x
    return BoundTrial(
        index=index,
        lhs=lhs,
        rhs=rhs,
        sigma_max=sigma_max,
        sigma_min=sigma_min,
        satisfied=_within(lhs, rhs),
        c_values={"up": c_up, "down": c_down, "composed": c_composed, "product": c_composed},
        extras={"factored": c_up * c_down * kappa_x},
        flagged=math.isinf(lhs),
    )


def convmixer_trial(
    kernel: np.ndarray,
    x: np.ndarray,
    size: int,
    padding: Padding = Padding.CIRCULAR,
    index: int = 0,
) -> BoundTrial:
    """Check `kappa(W_CD X) <= kappa(W_CD) * kappa(X)` for one kernel.

    Args:
        kernel (np.ndarray): Spatial k x k kernel shared by all channels.
        x (np.ndarray): Feature matrix of shape (size*size, channels).
        size (int): Side length of the feature grid.
        padding (Padding): Padding of the unrolled convolution.
        index (int): Trial index.

    Raises:
        CondlabRankDeficientError: If X is rank deficient.
    """
    sigma_max, sigma_min, kappa_x = _token_spectrum(x)
    w_cd = depthwise_conv_matrix(kernel, size, padding)
    if w_cd.shape[1] != x.shape[0]:
        raise CondlabShapeError("feature matrix does not match the grid", (w_cd.shape, x.shape))
    c_cd = _spectrum(w_cd)[2]
    lhs = _spectrum(w_cd @ x)[2]
    rhs = c_cd * kappa_x
    return BoundTrial(
        index=index,
        lhs=lhs,
        rhs=rhs,
        sigma_max=sigma_max,
        sigma_min=sigma_min,
        satisfied=_within(lhs, rhs) or math.isinf(rhs),
        c_values={"cd": c_cd, "product": c_cd},
        flagged=math.isinf(rhs),
    )


def _run_suite(
    label: str,
    n: int,
    d: int,
    trials: int,
    stream: RngStream,
    trial_function: TrialFunction,
    thresholds: Dict[str, float],
    max_threads: Optional[int] = None,
) -> BoundTrialStats:
    def run_trial(index: int, _item) -> Tuple[BoundTrial, int]:
        generator = stream.generator(index)
        for redraws in range(MAX_REDRAWS):
            try:
                return trial_function(generator, index), redraws
            except CondlabRankDeficientError:
                continue
        raise CondlabRankDeficientError(
            f"trial {index} drew {MAX_REDRAWS} rank-deficient token matrices",
            tolerance=0.0,
        )

    logger.info("Running %d %s trials (n=%d, d=%d, seed=%d)", trials, label, n, d, stream.seed)
    results = run_batched(
        run_trial,
        list(range(trials)),
        max_threads=max_threads,
        description=f"{label} trials",
    )
    stats = BoundTrialStats.from_trials(
        label=label,
        n=n,
        d=d,
        seed=stream.seed,
        trials=[trial for trial, _ in results],
        redraws=sum(redraws for _, redraws in results),
        thresholds=thresholds,
    )
    logger.info(
        "%s: %.1f%% satisfied, median ln ratio %.3f",
        label,
        100.0 * stats.fraction_satisfied,
        stats.median_log_ratio,
    )
    return stats


def _tokens(generator: np.random.Generator, n: int, d: int) -> np.ndarray:
    return linalg.gaussian(generator, n, d, 1.0 / math.sqrt(d))


def _weight(generator: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return linalg.gaussian(generator, rows, cols, 1.0 / math.sqrt(rows))


def verify_prop1(
    n: int,
    d: int,
    trials: int,
    stream: RngStream,
    max_threads: Optional[int] = None,
) -> BoundTrialStats:
    """Verify the condition bound of linear self-attention without skip connection.

    Args:
        n (int): Number of tokens.
        d (int): Token dimension, at most `n`.
        trials (int): Number of random draws.
        stream (RngStream): Random stream of the suite.
        max_threads (int, optional): Worker threads for the trials.

    Returns:
        BoundTrialStats: Per-trial measurements, including the measured weight
            condition product C of every trial.
    """
    _check_dims(n, d)

    def trial(generator: np.random.Generator, index: int) -> BoundTrial:
        x = _tokens(generator, n, d)
        w_q, w_k, w_v = (_weight(generator, d, d) for _ in range(3))
        return prop1_trial(x, w_q, w_k, w_v, index=index)

    return _run_suite("prop1", n, d, trials, stream, trial, EXACT_THRESHOLDS, max_threads)


def verify_prop2(
    n: int,
    d: int,
    trials: int,
    stream: RngStream,
    psd_mode: bool = True,
    max_threads: Optional[int] = None,
) -> BoundTrialStats:
    """Compare the conditioning of self-attention outputs with and without skip.

    With `psd_mode`, M is a random positive semi-definite matrix `B^T B`
    rescaled to the spectral norm of the attention product
    `W_Q W_K^T X^T X W_V`; otherwise the raw attention product is used.
    """
    _check_dims(n, d)

    def trial(generator: np.random.Generator, index: int) -> BoundTrial:
        x = _tokens(generator, n, d)
        w_q, w_k, w_v = (_weight(generator, d, d) for _ in range(3))
        m = w_q @ w_k.T @ x.T @ x @ w_v
        c = math.prod(_spectrum(w)[2] for w in (w_q, w_k, w_v))
        if psd_mode:
            b = _weight(generator, d, d)
            psd = b.T @ b
            m = psd * (_spectrum(m)[0] / _spectrum(psd)[0])
        return prop2_trial(x, m, index=index, c=c)

    label = "prop2_psd" if psd_mode else "prop2_raw"
    return _run_suite(label, n, d, trials, stream, trial, PROP2_THRESHOLDS, max_threads)


def verify_ffn_bound(
    n: int,
    d: int,
    trials: int,
    stream: RngStream,
    hidden: Optional[int] = None,
    max_threads: Optional[int] = None,
) -> BoundTrialStats:
    """Verify the condition bound of a linear-activation feedforward network."""
    _check_dims(n, d)
    hidden = hidden or 4 * d

    def trial(generator: np.random.Generator, index: int) -> BoundTrial:
        x = _tokens(generator, n, d)
        return ffn_trial(
            x,
            _weight(generator, d, hidden),
            _weight(generator, hidden, d),
            index=index,
        )

    return _run_suite("ffn", n, d, trials, stream, trial, EXACT_THRESHOLDS, max_threads)


def verify_convmixer_bound(
    channels: int,
    size: int,
    trials: int,
    stream: RngStream,
    kernel_size: int = 3,
    padding: Padding = Padding.CIRCULAR,
    max_threads: Optional[int] = None,
) -> BoundTrialStats:
    """Verify the condition bound of the ConvMixer depthwise convolution.

    Every trial draws one k x k kernel and a (size*size) x channels feature
    matrix.
    """
    _check_dims(size * size, channels)

    def trial(generator: np.random.Generator, index: int) -> BoundTrial:
        kernel = linalg.gaussian(generator, kernel_size, kernel_size, 1.0 / kernel_size)
        x = _tokens(generator, size * size, channels)
        return convmixer_trial(kernel, x, size, padding=padding, index=index)

    return _run_suite(
        "convmixer",
        size * size,
        channels,
        trials,
        stream,
        trial,
        EXACT_THRESHOLDS,
        max_threads,
    )


def magnitude_check(n: int, d: int, trials: int, stream: RngStream) -> Dict[str, float]:
    """Fractions of random token matrices with sigma_max > 1 and sigma_min < 1."""
    _check_dims(n, d)
    above, below = 0, 0
    for trial in range(trials):
        sigma = linalg.singular_values(_tokens(stream.generator(trial), n, d))
        above += int(sigma[0] > 1.0)
        below += int(sigma[-1] < 1.0)
    return {
        "n": n,
        "d": d,
        "trials": trials,
        "seed": stream.seed,
        "fraction_sigma_max_above_one": above / trials if trials else math.nan,
        "fraction_sigma_min_below_one": below / trials if trials else math.nan,
    }
