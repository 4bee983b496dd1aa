# -*- encoding: utf-8 -*-
"""Vision transformer forward pass.

Images are cut into patches (`condlab.graying.patchify`), optionally grayed,
linearly embedded, passed through the encoder layers, normalized and
classified from the class token (or the token mean if the model has none).
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from condlab import graying
from condlab.autodiff import ops
from condlab.autodiff.tape import Var
from condlab.schema.core import GrayingConfig, LayerParams, ModelParams
from condlab.schema.exception import CondlabShapeError
from condlab.vitcore.attention import (
    activate,
    array_function,
    ffn_forward,
    normalize,
    sab_forward,
    self_attention,
)

Taps = Dict[str, Var]


@array_function
def embed_tokens(tokens: Var, model: ModelParams) -> Var:
    """Project flattened patches to the model dimension.

    The class token is prepended and positional embeddings are added if the
    model has them.

    Args:
        tokens (Var): Flattened patches of shape (..., n, p*p*C).
        model (ModelParams): The model.

    Returns:
        Var: Embedded tokens of shape (..., n (+1), d).
    """
    expected = model.patch_weight.shape[0]
    if tokens.ndim < 2 or tokens.shape[-1] != expected:  # noqa: PLR2004
        raise CondlabShapeError(
            f"patch tokens must have {expected} features",
            (tokens.shape, tuple(model.patch_weight.shape)),
        )
    z = tokens @ model.patch_weight + model.patch_bias
    if model.class_token is not None:
        lead = z.shape[:-2]
        cls = ops.add(z.tape.constant(np.zeros((*lead, 1, model.dim))), model.class_token)
        z = ops.concat([cls, z], axis=-2)
    if model.pos_embedding is not None:
        if tuple(model.pos_embedding.shape) != z.shape[-2:]:
            raise CondlabShapeError(
                "positional embedding does not match the token count",
                (z.shape, tuple(model.pos_embedding.shape)),
            )
        z = z + model.pos_embedding
    return z


def patch_embed(images, model: ModelParams) -> Union[np.ndarray, Var]:
    """Patchify images of shape (..., H, W, C) and embed the patches.

    Raises:
        CondlabShapeError: If the image size is not divisible by the patch size.
    """
    return embed_tokens(graying.patchify(images, model.patch_size), model)


@array_function
def encoder_layer(
    x: Var,
    layer: LayerParams,
    index: Optional[int] = None,
    with_taps: bool = False,
) -> Union[Var, Tuple[Var, Taps]]:
    """Apply one encoder layer (self-attention block, then feedforward network).

    With `with_taps`, the embeddings around the layer are returned as well,
    independent of the skip configuration: `token_in` (layer input),
    `sa` (attention output without skip), `sa_skip` (with skip), `sab_out`
    (attention block output under the configured skip), `mlp`
    (feedforward output without skip), `mlp_skip` (with skip) and
    `token_out` (layer output under the configured skips).
    """
    block = layer.block
    if not with_taps:
        h = sab_forward(x, layer.attention, block, layer.norm1, layer=index)
        return ffn_forward(h, layer.ffn, block, layer.norm2)

    attn_in = normalize(x, layer.norm1) if block.prenorm else x
    sa = self_attention(attn_in, layer.attention, layer=index)
    sa_skip = sa + x
    mid = sa_skip if block.skip_sab else sa
    ffn_in = normalize(mid, layer.norm2) if block.prenorm else mid
    mlp = activate(ffn_in @ layer.ffn.w_up, layer.ffn.activation) @ layer.ffn.w_down
    mlp_skip = mlp + mid
    out = mlp_skip if block.skip_ffn else mlp
    taps = {
        "token_in": x,
        "sa": sa,
        "sa_skip": sa_skip,
        "sab_out": mid,
        "mlp": mlp,
        "mlp_skip": mlp_skip,
        "token_out": out,
    }
    return out, taps


@array_function
def vit_forward_tokens(
    tokens: Var,
    model: ModelParams,
    with_taps: bool = False,
) -> Union[Var, Tuple[Var, List[Taps]]]:
    """Forward pass on already patchified (and grayed) tokens.

    Args:
        tokens (Var): Flattened patches of shape (..., n, p*p*C).
        model (ModelParams): The model.
        with_taps (bool): Also return the per-layer embeddings, see
            `encoder_layer`.

    Returns:
        Var: Logits of shape (..., classes), and the list of per-layer taps if
            requested.
    """
    x = embed_tokens(tokens, model)
    layer_taps: List[Taps] = []
    for index, layer in enumerate(model.layers):
        if with_taps:
            x, taps = encoder_layer(x, layer, index=index, with_taps=True)
            layer_taps.append(taps)
        else:
            x = encoder_layer(x, layer, index=index)
    x = normalize(x, model.norm)
    if model.class_token is not None:
        pooled = ops.slice_axis(x, 0, 1, axis=-2)
    else:
        pooled = ops.mean(x, axis=-2, keepdims=True)
    logits = pooled @ model.head_weight + model.head_bias
    logits = ops.reshape(logits, (*x.shape[:-2], model.classes))
    if with_taps:
        return logits, layer_taps
    return logits


def vit_forward(
    images,
    model: ModelParams,
    graying_config: Optional[GrayingConfig] = None,
):
    """Classify images of shape (H, W, C) or (B, H, W, C).

    The token matrices are grayed before patch embedding when a graying
    configuration is given. Arrays in, arrays out; the function is
    deterministic given the parameters and the input.
    """
    tokens = graying.patchify(images, model.patch_size)
    if graying_config is not None:
        if tokens.ndim == 2:  # noqa: PLR2004
            tokens = graying.gray(tokens, graying_config)
        else:
            flat = tokens.reshape(-1, *tokens.shape[-2:])
            tokens = graying.gray_tokens(flat, graying_config).reshape(tokens.shape)
    return vit_forward_tokens(tokens, model)
