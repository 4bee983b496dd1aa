# -*- encoding: utf-8 -*-
"""Layer-wise condition profiles of vision transformers.

For every encoder layer, the natural-log condition numbers of the attention
output with and without skip, the feedforward output with and without skip,
and of the tokens entering and leaving the attention block are measured per
sample and averaged over the evaluation batch.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from condlab import graying, linalg
from condlab.schema.core import (
    AttentionKind,
    ConditionReport,
    EmbeddingTap,
    GrayingConfig,
    LayerConditionRecord,
    ModelParams,
    RngStream,
)
from condlab.schema.exception import CondlabShapeError
from condlab.schema.experiment import ModelSpec
from condlab.utils import run_batched
from condlab.vitcore.init import init_vit
from condlab.vitcore.vit import vit_forward_tokens

logger = logging.getLogger("condlab")

# tap name of each record field
RECORD_TAPS = {
    "sa_no_skip": "sa",
    "sa_skip": "sa_skip",
    "mlp_no_skip": "mlp",
    "mlp_skip": "mlp_skip",
    "token_in": "token_in",
    "token_out": "sab_out",
}


def _rms_normalize(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x * x, axis=-1, keepdims=True))
    return x / np.where(rms > 0.0, rms, 1.0)


def embedding_log_condition(x: np.ndarray, tap: EmbeddingTap = EmbeddingTap.TRANSFORM) -> float:
    """Natural-log condition number of an embedding; rank deficiency gives inf."""
    if tap == EmbeddingTap.NORMALIZED:
        x = _rms_normalize(x)
    return linalg.log_condition_number(x, strict=False)


def profile_tokens(
    batch: np.ndarray,
    patch_size: int,
    graying_config: Optional[GrayingConfig] = None,
) -> np.ndarray:
    """Turn an evaluation batch into token matrices of shape (B, n, p*p*C).

    Image batches of shape (B, H, W, C) are patchified and grayed; token
    batches of shape (B, n, p*p*C) are taken as they are.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 4:  # noqa: PLR2004
        tokens = graying.patchify(batch, patch_size)
        if graying_config is not None:
            tokens = graying.gray_tokens(tokens, graying_config)
        return tokens
    if batch.ndim != 3:  # noqa: PLR2004
        raise CondlabShapeError("evaluation batch must be images or token matrices", (batch.shape,))
    return batch


def layer_condition_profile(
    model: ModelParams,
    batch: np.ndarray,
    tap: EmbeddingTap = EmbeddingTap.TRANSFORM,
    graying_config: Optional[GrayingConfig] = None,
    max_threads: Optional[int] = None,
) -> ConditionReport:
    """Measure the per-layer condition profile of a model.

    Every sample is passed through the model on its own, so the result does
    not depend on how the batch is ordered or split.

    Args:
        model (ModelParams): The model.
        batch (np.ndarray): Images (B, H, W, C) or tokens (B, n, p*p*C).
        tap (EmbeddingTap): Where the embeddings are measured.
        graying_config (GrayingConfig, optional): Graying applied to image batches.
        max_threads (int, optional): Worker threads over the samples.

    Returns:
        ConditionReport: Batch-mean natural-log condition numbers per layer.
            Rank-deficient embeddings contribute `inf`.
    """
    tokens = profile_tokens(batch, model.patch_size, graying_config)
    if tokens.shape[0] < 1:
        raise CondlabShapeError("evaluation batch is empty", (tokens.shape,))

    def profile_sample(_index: int, sample: np.ndarray) -> np.ndarray:
        _, layer_taps = vit_forward_tokens(sample, model, with_taps=True)
        return np.array(
            [
                [embedding_log_condition(taps[name], tap) for name in RECORD_TAPS.values()]
                for taps in layer_taps
            ],
        ).reshape(len(layer_taps), len(RECORD_TAPS))

    values = run_batched(
        profile_sample,
        list(tokens),
        max_threads=max_threads,
        description="profile samples",
    )
    with np.errstate(invalid="ignore"):
        means = np.mean(np.stack(values), axis=0)
    records = [
        LayerConditionRecord(
            layer=index,
            **{field: float(means[index, column]) for column, field in enumerate(RECORD_TAPS)},
        )
        for index in range(len(model.layers))
    ]
    return ConditionReport(tap=tap, samples=int(tokens.shape[0]), records=records)


def random_token_batch(
    spec: ModelSpec,
    image_shape: Tuple[int, int, int],
    samples: int,
    stream: RngStream,
) -> np.ndarray:
    """Standard normal token matrices matching the patch layout of a model spec."""
    height, width, channels = image_shape
    n = (height // spec.patch_size) * (width // spec.patch_size)
    generator = stream.generator()
    return generator.standard_normal((samples, n, spec.patch_size**2 * channels))


def condition_contrast(
    spec: ModelSpec,
    image_shape: Tuple[int, int, int],
    seeds: Sequence[int],
    samples: int = 4,
    tap: EmbeddingTap = EmbeddingTap.TRANSFORM,
) -> Dict[str, object]:
    """Compare attention outputs with and without skip on randomly initialized models.

    For every seed a model is initialized and profiled on random tokens. The
    gap is the final-layer mean ln condition number without skip minus the one
    with skip.

    Returns:
        dict: Per-seed gaps and the fraction of seeds with a positive gap.
    """
    if spec.layers < 1:
        raise CondlabShapeError("condition contrast needs at least one layer")
    gaps: List[float] = []
    for seed in seeds:
        stream = RngStream(seed=seed)
        model = init_vit(spec, image_shape, 10, stream.fork(0))
        batch = random_token_batch(spec, image_shape, samples, stream.fork(1))
        report = layer_condition_profile(model, batch, tap=tap, max_threads=1)
        final = report.records[-1]
        gaps.append(final.sa_no_skip - final.sa_skip)
    gaps_array = np.asarray(gaps)
    return {
        "seeds": list(seeds),
        "gaps": gaps,
        "fraction_positive": float(np.mean(gaps_array > 0)) if gaps else float("nan"),
        "median_gap": float(np.median(gaps_array)) if gaps else float("nan"),
    }


def attention_kind_profile(
    spec: ModelSpec,
    image_shape: Tuple[int, int, int],
    stream: RngStream,
    samples: int = 8,
    tap: EmbeddingTap = EmbeddingTap.TRANSFORM,
) -> Dict[str, ConditionReport]:
    """Profile the same randomly initialized model with both attention kinds.

    Both models share their weights and evaluation batch, only the attention
    normalization differs.
    """
    batch = random_token_batch(spec, image_shape, samples, stream.fork(1))
    reports = {}
    for kind in AttentionKind:
        model = init_vit(spec.model_copy(update={"attention": kind}), image_shape, 10, stream.fork(0))
        reports[kind.value] = layer_condition_profile(model, batch, tap=tap)
        logger.info(
            "%s attention: mean ln kappa without skip %.3f, with skip %.3f",
            kind.value,
            reports[kind.value].mean("sa_no_skip"),
            reports[kind.value].mean("sa_skip"),
        )
    return reports
