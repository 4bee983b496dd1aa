# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Forward semantics of the vision transformer and ConvMixer models."""

from .attention import (
    activate,
    array_function,
    ffn_forward,
    normalize,
    sab_forward,
    self_attention,
)
from .convmixer import (
    convmixer_block,
    convmixer_depthwise,
    convmixer_forward,
    convmixer_forward_tokens,
    depthwise_conv_matrix,
    update_running_stats,
)
from .init import init_convmixer, init_vit, random_attention_params, truncated_normal
from .vit import embed_tokens, encoder_layer, patch_embed, vit_forward, vit_forward_tokens
