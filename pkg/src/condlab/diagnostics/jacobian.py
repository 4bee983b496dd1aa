# -*- encoding: utf-8 -*-
"""Jacobian spectra of self-attention blocks.

The condition of the block Jacobian serves as a proxy for how well gradients
propagate through the block. Jacobians are assembled exactly with the
reverse-mode engine, one backward pass per output entry.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from condlab import graying, linalg
from condlab.autodiff import jacobian
from condlab.schema.core import (
    AttentionParams,
    BlockConfig,
    GrayingConfig,
    GrayingMethod,
    ModelParams,
    NormParams,
    RngStream,
)
from condlab.schema.exception import CondlabModelError
from condlab.vitcore.attention import sab_forward
from condlab.vitcore.init import random_attention_params

logger = logging.getLogger("condlab")


def block_jacobian_spectrum(
    attention: AttentionParams,
    block: BlockConfig,
    x: np.ndarray,
    norm: Optional[NormParams] = None,
    max_entries: Optional[int] = None,
) -> np.ndarray:
    """Singular values (descending) of the Jacobian of one attention block at `x`."""
    x = linalg.as_matrix(x, "token matrix")
    matrix = jacobian(
        lambda v: sab_forward(v, attention, block, norm),
        x,
        max_entries=max_entries,
    )
    return linalg.singular_values(matrix)


def sab_jacobian_spectrum(
    model: ModelParams,
    layer_index: int,
    x: np.ndarray,
    max_entries: Optional[int] = None,
) -> np.ndarray:
    """Singular value spectrum of the attention block Jacobian of a model layer.

    Args:
        model (ModelParams): The model.
        layer_index (int): Index of the encoder layer.
        x (np.ndarray): Token matrix of shape (n, d) entering the layer.
        max_entries (int, optional): Jacobian entry budget.

    Raises:
        CondlabModelError: If the layer does not exist.
        CondlabBudgetError: If the Jacobian exceeds the budget.

    Returns:
        np.ndarray: Descending singular values of the (n*d) x (n*d) Jacobian.
    """
    if not 0 <= layer_index < len(model.layers):
        raise CondlabModelError(f"model has {len(model.layers)} layers", layer=layer_index)
    layer = model.layers[layer_index]
    return block_jacobian_spectrum(layer.attention, layer.block, x, layer.norm1, max_entries)


def spectrum_log_condition(sigma: np.ndarray, size: int) -> float:
    """ln(sigma_max / sigma_min) of a square Jacobian spectrum; inf if singular."""
    kappa = linalg.condition_from_singular_values(sigma, (size, size), strict=False)
    return math.log(kappa)


def jacobian_skip_comparison(
    n: int,
    d: int,
    seeds: Sequence[int],
    heads: int = 1,
    prenorm: bool = False,
) -> Dict[str, object]:
    """Compare block Jacobian conditioning with and without skip over several seeds.

    Every seed draws Gaussian attention weights (std 1/sqrt(d)) and standard
    normal tokens. With `prenorm`, the block without skip inherits the
    singular Jacobian of the layer normalization (every row is centered), so
    its condition number is infinite.

    Returns:
        dict: Per-seed rows and the fraction of seeds where the skip connection
            gives the smaller Jacobian condition number.
    """
    rows: List[Dict[str, float]] = []
    for seed in seeds:
        stream = RngStream(seed=seed)
        generator = stream.generator()
        attention = random_attention_params(generator, d, heads=heads)
        x = linalg.gaussian(generator, n, d)
        values = {}
        for skip in (True, False):
            block = BlockConfig(skip_sab=skip, prenorm=prenorm)
            sigma = block_jacobian_spectrum(attention, block, x)
            values["skip" if skip else "no_skip"] = spectrum_log_condition(sigma, n * d)
        rows.append({"seed": seed, **values})
    better = [row["skip"] < row["no_skip"] for row in rows]
    return {
        "n": n,
        "d": d,
        "prenorm": prenorm,
        "rows": rows,
        "fraction_skip_better": float(np.mean(better)) if rows else math.nan,
        "median_skip": float(np.median([row["skip"] for row in rows])) if rows else math.nan,
        "median_no_skip": float(np.median([row["no_skip"] for row in rows])) if rows else math.nan,
    }


def jacobian_graying_comparison(
    n: int,
    d: int,
    seeds: Sequence[int],
    epsilons: Sequence[float] = (0.6,),
    methods: Sequence[GrayingMethod] = (GrayingMethod.SVD, GrayingMethod.DCT),
    heads: int = 1,
) -> Dict[str, object]:
    """Jacobian conditioning of an attention block on raw versus grayed tokens.

    The block has its skip connection and no normalization. For every seed
    the same weights are evaluated on the raw tokens and on their grayed
    versions.

    Returns:
        dict: Per-seed rows with one ln condition number per arm and the
            median of every arm.
    """
    block = BlockConfig(skip_sab=True, prenorm=False)
    arms = ["raw"] + [f"{GrayingMethod(m).value}_{eps:g}" for m in methods for eps in epsilons]
    rows: List[Dict[str, float]] = []
    for seed in seeds:
        generator = RngStream(seed=seed).generator()
        attention = random_attention_params(generator, d, heads=heads)
        x = linalg.gaussian(generator, n, d)
        row: Dict[str, float] = {"seed": seed}
        row["raw"] = spectrum_log_condition(block_jacobian_spectrum(attention, block, x), n * d)
        for method in methods:
            for eps in epsilons:
                grayed = graying.gray(x, GrayingConfig(method=method, epsilon=eps))
                sigma = block_jacobian_spectrum(attention, block, grayed)
                row[f"{GrayingMethod(method).value}_{eps:g}"] = spectrum_log_condition(sigma, n * d)
        rows.append(row)
    medians = {
        arm: float(np.median([row[arm] for row in rows])) if rows else math.nan
        for arm in arms
    }
    return {"n": n, "d": d, "arms": arms, "rows": rows, "medians": medians}
