# -*- encoding: utf-8 -*-
"""ConvMixer forward pass.

A ConvMixer embeds patches with a strided linear projection, then applies
blocks of the form

    X' = BN(act(DepthwiseConv(X))) + X
    X_next = BN(act(PointwiseConv(X')))

where only the depthwise stage has a (toggleable) skip connection. Features
are laid out as (batch, channels, grid rows, grid cols).
"""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np

from condlab import graying
from condlab.autodiff import ops
from condlab.autodiff.tape import Var
from condlab.schema.core import (
    BatchNormParams,
    ConvMixerModelParams,
    ConvMixerParams,
    GrayingConfig,
    Padding,
)
from condlab.schema.exception import CondlabShapeError
from condlab.vitcore.attention import activate, array_function

logger = logging.getLogger("condlab")

# batch statistics collected during a training forward pass, keyed by batch norm prefix
BatchStats = Dict[str, Dict[str, np.ndarray]]


def _batchnorm(
    x: Var,
    bn: Optional[BatchNormParams],
    training: bool,
    stats: Optional[BatchStats],
    prefix: str,
) -> Var:
    if bn is None:
        return x
    if not training:
        return ops.batchnorm(
            x,
            bn.gamma,
            bn.beta,
            eps=bn.eps,
            running_mean=bn.running_mean,
            running_var=bn.running_var,
        )
    if stats is not None:
        count = x.shape[0] * x.shape[2] * x.shape[3]
        stats[prefix] = {
            "mean": np.mean(x.value, axis=(0, 2, 3)),
            # unbiased, like the running estimate of common frameworks
            "var": np.var(x.value, axis=(0, 2, 3)) * count / max(count - 1, 1),
        }
    return ops.batchnorm(x, bn.gamma, bn.beta, eps=bn.eps)


@array_function
def convmixer_depthwise(
    x: Var,
    p: ConvMixerParams,
    skip: bool = True,
    training: bool = False,
    stats: Optional[BatchStats] = None,
    prefix: str = "block",
) -> Var:
    """Depthwise stage of a block: `BN(act(DepthwiseConv(x))) (+ x)`."""
    h = ops.depthwise_conv2d(x, p.dw_kernel, p.dw_bias, padding=p.padding)
    h = _batchnorm(activate(h, p.activation), p.bn1, training, stats, f"{prefix}.bn1")
    return h + x if skip else h


@array_function
def convmixer_block(
    x: Var,
    p: ConvMixerParams,
    skip: bool = True,
    training: bool = False,
    stats: Optional[BatchStats] = None,
    prefix: str = "block",
) -> Var:
    """Apply one ConvMixer block to features of shape (B, C, H, W).

    Args:
        x (Var): Input features.
        p (ConvMixerParams): Block parameters.
        skip (bool): Whether the depthwise stage adds its input.
        training (bool): Use batch statistics in the batch normalizations.
        stats (BatchStats, optional): Receives the batch statistics of every
            batch normalization when training, keyed by `prefix`.
        prefix (str): Name prefix of the block's batch normalizations.

    Raises:
        CondlabShapeError: If the channel count does not match the block.

    Returns:
        Var: Output features of the same shape.
    """
    if x.ndim != 4 or x.shape[1] != p.channels:  # noqa: PLR2004
        raise CondlabShapeError(
            f"features must have shape (B, {p.channels}, H, W)",
            (x.shape, tuple(p.dw_kernel.shape)),
        )
    h = convmixer_depthwise(x, p, skip, training, stats, prefix)
    out = activate(ops.pointwise_conv2d(h, p.pw_weight, p.pw_bias), p.activation)
    return _batchnorm(out, p.bn2, training, stats, f"{prefix}.bn2")


@array_function
def convmixer_forward_tokens(
    tokens: Var,
    model: ConvMixerModelParams,
    training: bool = False,
    stats: Optional[BatchStats] = None,
) -> Var:
    """Forward pass on patchified tokens of shape (B, n, p*p*C).

    Returns:
        Var: Logits of shape (B, classes).
    """
    rows, cols = model.grid
    if tokens.ndim != 3 or tokens.shape[1] != rows * cols:  # noqa: PLR2004
        raise CondlabShapeError(
            f"tokens must have shape (B, {rows * cols}, features)",
            (tokens.shape,),
        )
    batch = tokens.shape[0]
    z = tokens @ model.patch_weight + model.patch_bias
    z = ops.transpose(ops.reshape(z, (batch, rows, cols, model.dim)), (0, 3, 1, 2))
    z = _batchnorm(ops.gelu(z), model.bn0, training, stats, "bn0")
    for index, block in enumerate(model.blocks):
        z = convmixer_block(
            z,
            block,
            skip=model.skip,
            training=training,
            stats=stats,
            prefix=f"blocks.{index}",
        )
    pooled = ops.mean(z, axis=(2, 3))
    return pooled @ model.head_weight + model.head_bias


def convmixer_forward(
    images,
    model: ConvMixerModelParams,
    graying_config: Optional[GrayingConfig] = None,
):
    """Classify a batch of images of shape (B, H, W, C) in evaluation mode."""
    tokens = graying.patchify(images, model.patch_size)
    if graying_config is not None:
        tokens = graying.gray_tokens(tokens, graying_config)
    return convmixer_forward_tokens(tokens, model)


def update_running_stats(
    model: ConvMixerModelParams,
    stats: BatchStats,
) -> ConvMixerModelParams:
    """Fold the batch statistics of a training step into the running statistics."""
    updates = {}
    for prefix, bn in model.batchnorms():
        if prefix not in stats:
            continue
        m = bn.momentum
        updates[f"{prefix}.running_mean"] = (1.0 - m) * bn.running_mean + m * stats[prefix]["mean"]
        updates[f"{prefix}.running_var"] = (1.0 - m) * bn.running_var + m * stats[prefix]["var"]
    return model.with_arrays(updates)


def depthwise_conv_matrix(
    kernel: np.ndarray,
    size: int,
    padding: Padding = Padding.ZEROS,
) -> np.ndarray:
    """Unroll a single-channel k x k convolution on a size x size grid into a matrix.

    Pixels are flattened row-major, so for a feature map `x` of shape
    (size, size) the convolution output is `(W @ x.ravel()).reshape(size, size)`,
    matching `depthwise_conv2d`.

    Returns:
        np.ndarray: The (size*size) x (size*size) operator.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:  # noqa: PLR2004
        raise CondlabShapeError("kernel must be square with odd size", (kernel.shape,))
    radius = kernel.shape[0] // 2
    matrix = np.zeros((size * size, size * size))
    for i in range(size):
        for j in range(size):
            for u in range(kernel.shape[0]):
                for v in range(kernel.shape[1]):
                    r, c = i + u - radius, j + v - radius
                    if padding == Padding.CIRCULAR:
                        r, c = r % size, c % size
                    elif not (0 <= r < size and 0 <= c < size):
                        continue
                    matrix[i * size + j, r * size + c] += kernel[u, v]
    return matrix
