# -*- encoding: utf-8 -*-
"""Runtime of SVD graying against DCT graying."""

from __future__ import annotations

import logging
import time
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from condlab import linalg
from condlab.graying import dct_token_gray, svd_token_gray
from condlab.schema.core import RngStream

logger = logging.getLogger("condlab")


def _best_time(func: Callable[[], object], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def graying_cost_trend(
    sizes: Sequence[int] = (32, 64, 128, 256),
    repeats: int = 3,
    epsilon: float = 0.9,
    stream: Optional[RngStream] = None,
) -> Dict[str, object]:
    """Time both graying methods on square Gaussian matrices of growing size.

    The growth exponents are the slopes of a least-squares line through
    (ln size, ln seconds).

    Returns:
        dict: One row per size with both timings and their ratio, the fitted
            exponents and the speedup of DCT graying at the largest size.
    """
    stream = stream or RngStream(seed=0)
    rows = []
    for size in sizes:
        x = linalg.gaussian(stream.generator(size), size, size)
        svd_seconds = _best_time(lambda: svd_token_gray(x, epsilon), repeats)
        dct_seconds = _best_time(lambda: dct_token_gray(x, epsilon), repeats)
        rows.append(
            {
                "size": size,
                "svd_seconds": svd_seconds,
                "dct_seconds": dct_seconds,
                "speedup": svd_seconds / dct_seconds if dct_seconds > 0 else float("inf"),
            },
        )
        logger.info("size %d: svd %.4fs, dct %.4fs", size, svd_seconds, dct_seconds)
    result: Dict[str, object] = {"epsilon": epsilon, "repeats": repeats, "rows": rows}
    if len(rows) >= 2:  # noqa: PLR2004
        log_sizes = np.log([row["size"] for row in rows])
        for method in ("svd", "dct"):
            seconds = np.maximum([row[f"{method}_seconds"] for row in rows], 1e-9)
            result[f"{method}_exponent"] = float(np.polyfit(log_sizes, np.log(seconds), 1)[0])
    if rows:
        result["speedup_at_max"] = rows[-1]["speedup"]
    return result
