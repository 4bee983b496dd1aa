# -*- encoding: utf-8 -*-
"""Seeded parameter initialization.

Linear weights, class token and positional embeddings are drawn from a normal
distribution truncated at two standard deviations (std 0.02 by default),
biases start at zero and normalization layers at the identity. Convolution
weights use a truncated normal with std 1/sqrt(fan_in).

Parameters are drawn in a fixed order from a single generator of the given
stream, so two models built from the same seed and dimensions are identical no
matter which skip connections they later use.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from condlab.linalg import gaussian
from condlab.schema.core import (
    AttentionParams,
    BatchNormParams,
    BlockConfig,
    ConvMixerModelParams,
    ConvMixerParams,
    FfnParams,
    LayerParams,
    ModelParams,
    NormParams,
    RngStream,
)
from condlab.schema.exception import CondlabConfigError
from condlab.schema.experiment import ModelSpec

TRUNCATION = 2.0


def truncated_normal(
    generator: np.random.Generator,
    shape: Tuple[int, ...],
    std: float,
) -> np.ndarray:
    """Draw normal samples, redrawing those beyond two standard deviations."""
    values = generator.standard_normal(shape)
    outside = np.abs(values) > TRUNCATION
    while np.any(outside):
        values[outside] = generator.standard_normal(int(outside.sum()))
        outside = np.abs(values) > TRUNCATION
    return values * std


def _norm(dim: int) -> NormParams:
    return NormParams(gamma=np.ones(dim), beta=np.zeros(dim))


def _batchnorm(channels: int) -> BatchNormParams:
    return BatchNormParams(
        gamma=np.ones(channels),
        beta=np.zeros(channels),
        running_mean=np.zeros(channels),
        running_var=np.ones(channels),
    )


def _grid(image_shape: Tuple[int, int, int], patch_size: int) -> Tuple[int, int]:
    height, width, _ = image_shape
    if height % patch_size or width % patch_size:
        raise CondlabConfigError(
            f"image size {height}x{width} is not divisible by patch size {patch_size}",
        )
    return height // patch_size, width // patch_size


def random_attention_params(
    generator: np.random.Generator,
    dim: int,
    heads: int = 1,
    std: Optional[float] = None,
    **kwargs,
) -> AttentionParams:
    """Attention weights with i.i.d. Gaussian entries (std 1/sqrt(d) by default)."""
    std = 1.0 / math.sqrt(dim) if std is None else std
    return AttentionParams(
        w_q=gaussian(generator, dim, dim, std),
        w_k=gaussian(generator, dim, dim, std),
        w_v=gaussian(generator, dim, dim, std),
        heads=heads,
        **kwargs,
    )


def init_vit(
    spec: ModelSpec,
    image_shape: Tuple[int, int, int],
    classes: int,
    stream: RngStream,
    block: Optional[BlockConfig] = None,
) -> ModelParams:
    """Initialize a vision transformer.

    Args:
        spec (ModelSpec): Model hyperparameters.
        image_shape (Tuple[int, int, int]): Input image shape (H, W, C).
        classes (int): Number of output classes.
        stream (RngStream): Random stream the weights are drawn from.
        block (BlockConfig, optional): Block configuration of every layer.
            It does not influence the drawn weights.

    Raises:
        CondlabConfigError: If the image size is not divisible by the patch size.

    Returns:
        ModelParams: The initialized parameters.
    """
    rows, cols = _grid(image_shape, spec.patch_size)
    channels = image_shape[2]
    tokens = rows * cols + (1 if spec.class_token else 0)
    dim, hidden, std = spec.dim, spec.dim * spec.mlp_ratio, spec.init_std
    generator = stream.generator()
    patch_weight = truncated_normal(generator, (spec.patch_size**2 * channels, dim), std)
    class_token = truncated_normal(generator, (1, dim), std)
    pos_embedding = truncated_normal(generator, (tokens, dim), std)
    layers = []
    for _ in range(spec.layers):
        attention = AttentionParams(
            w_q=truncated_normal(generator, (dim, dim), std),
            w_k=truncated_normal(generator, (dim, dim), std),
            w_v=truncated_normal(generator, (dim, dim), std),
            heads=spec.heads,
            kind=spec.attention,
            scale=spec.linear_scale,
        )
        ffn = FfnParams(
            w_up=truncated_normal(generator, (dim, hidden), std),
            w_down=truncated_normal(generator, (hidden, dim), std),
            activation=spec.activation,
        )
        layers.append(
            LayerParams(
                attention=attention,
                ffn=ffn,
                block=block or BlockConfig(),
                norm1=_norm(dim),
                norm2=_norm(dim),
            ),
        )
    head_weight = truncated_normal(generator, (dim, classes), std)
    return ModelParams(
        patch_size=spec.patch_size,
        channels=channels,
        layers=layers,
        patch_weight=patch_weight,
        patch_bias=np.zeros(dim),
        class_token=class_token if spec.class_token else None,
        pos_embedding=pos_embedding if spec.positional else None,
        norm=_norm(dim),
        head_weight=head_weight,
        head_bias=np.zeros(classes),
    )


def init_convmixer(
    spec: ModelSpec,
    image_shape: Tuple[int, int, int],
    classes: int,
    stream: RngStream,
    skip: bool = True,
) -> ConvMixerModelParams:
    """Initialize a ConvMixer classifier with `spec.layers` blocks of `spec.dim` channels.

    The skip flag does not influence the drawn weights.
    """
    grid = _grid(image_shape, spec.patch_size)
    channels = image_shape[2]
    dim, size = spec.dim, spec.kernel_size
    patch_inputs = spec.patch_size**2 * channels
    generator = stream.generator()
    patch_weight = truncated_normal(generator, (patch_inputs, dim), 1.0 / math.sqrt(patch_inputs))
    blocks = []
    for _ in range(spec.layers):
        blocks.append(
            ConvMixerParams(
                dw_kernel=truncated_normal(generator, (dim, size, size), 1.0 / size),
                dw_bias=np.zeros(dim),
                pw_weight=truncated_normal(generator, (dim, dim), 1.0 / math.sqrt(dim)),
                pw_bias=np.zeros(dim),
                bn1=_batchnorm(dim),
                bn2=_batchnorm(dim),
                activation=spec.activation,
                padding=spec.padding,
            ),
        )
    head_weight = truncated_normal(generator, (dim, classes), spec.init_std)
    return ConvMixerModelParams(
        patch_size=spec.patch_size,
        channels=channels,
        grid=grid,
        skip=skip,
        blocks=blocks,
        patch_weight=patch_weight,
        patch_bias=np.zeros(dim),
        bn0=_batchnorm(dim),
        head_weight=head_weight,
        head_bias=np.zeros(classes),
    )
