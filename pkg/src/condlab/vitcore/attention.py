# -*- encoding: utf-8 -*-
"""Self-attention and feedforward blocks of the vision transformer.

All forward functions accept either autodiff variables or plain arrays. Arrays
are evaluated on a throwaway non-recording tape and the result is returned as
an array again, so the same code serves inference, diagnostics and training.
Token matrices have shape (..., n, d); leading axes are batch axes.
"""

from __future__ import annotations

import functools
import logging
import math
from typing import Any, Callable, Optional

import numpy as np

from condlab.autodiff import ops
from condlab.autodiff.tape import Tape, Var
from condlab.schema.core import (
    Activation,
    AttentionKind,
    AttentionParams,
    BlockConfig,
    FfnParams,
    NormParams,
)
from condlab.schema.exception import CondlabModelError, CondlabShapeError

logger = logging.getLogger("condlab")

LAYERNORM_EPS = 1e-6


def _unwrap(result: Any) -> Any:
    if isinstance(result, Var):
        return result.value
    if isinstance(result, tuple):
        return tuple(_unwrap(item) for item in result)
    if isinstance(result, list):
        return [_unwrap(item) for item in result]
    if isinstance(result, dict):
        return {key: _unwrap(value) for key, value in result.items()}
    return result


def array_function(func: Callable) -> Callable:
    """Let a forward function be called with a plain array as first argument.

    If the first argument is already a `Var`, the function is called as is.
    Otherwise the array is placed on a fresh non-recording tape and every
    variable in the result is converted back to its value.
    """

    @functools.wraps(func)
    def wrapper(x, *args, **kwargs):
        if isinstance(x, Var):
            return func(x, *args, **kwargs)
        tape = Tape(record=False)
        return _unwrap(func(tape.constant(x), *args, **kwargs))

    return wrapper


def activate(x: Var, activation: Activation) -> Var:
    """Apply an activation function."""
    if activation == Activation.GELU:
        return ops.gelu(x)
    if activation == Activation.RELU:
        return ops.relu(x)
    return x


def normalize(x: Var, norm: Optional[NormParams] = None) -> Var:
    """Layer normalization over the model dimension.

    Without parameters, the normalization is a plain per-token standardization.
    """
    if norm is None:
        return ops.layernorm(x, eps=LAYERNORM_EPS)
    return ops.layernorm(x, norm.gamma, norm.beta, eps=LAYERNORM_EPS)


def _split_heads(t: Var, heads: int) -> Var:
    *lead, n, d = t.shape
    base = len(lead)
    t = ops.reshape(t, (*lead, n, heads, d // heads))
    return ops.transpose(t, (*range(base), base + 1, base, base + 2))


def _merge_heads(t: Var) -> Var:
    *lead, heads, n, head_dim = t.shape
    base = len(lead)
    t = ops.transpose(t, (*range(base), base + 1, base, base + 2))
    return ops.reshape(t, (*lead, n, heads * head_dim))


@array_function
def self_attention(x: Var, p: AttentionParams, layer: Optional[int] = None) -> Var:
    """Multi-head self-attention without skip connection.

    Softmax attention computes `softmax(Q K^T / sqrt(d_h)) V` per head, scaled
    linear attention computes `(Q K^T V) / k` with the scale `k` of the params.
    The heads are concatenated; there is no output projection.

    Args:
        x (Var): Tokens of shape (..., n, d).
        p (AttentionParams): The attention weights.
        layer (int, optional): Layer index, used in error messages.

    Raises:
        CondlabShapeError: If the token dimension does not match the weights.
        CondlabModelError: If the attention scores contain NaN or infinite values.

    Returns:
        Var: Attention output of shape (..., n, d).
    """
    if x.ndim < 2 or x.shape[-1] != p.dim or x.shape[-2] < 1:  # noqa: PLR2004
        raise CondlabShapeError(
            f"tokens do not match the attention dimension {p.dim}",
            (x.shape, tuple(p.w_q.shape)),
        )
    q = _split_heads(x @ p.w_q, p.heads)
    k = _split_heads(x @ p.w_k, p.heads)
    v = _split_heads(x @ p.w_v, p.heads)
    scores = q @ k.T
    if not np.all(np.isfinite(scores.value)):
        raise CondlabModelError("attention scores contain NaN or infinite values", layer=layer)
    if p.kind == AttentionKind.SOFTMAX:
        weights = ops.row_softmax(scores / math.sqrt(p.head_dim))
        out = weights @ v
    else:
        out = (scores @ v) / p.scale
    return _merge_heads(out)


@array_function
def sab_forward(
    x: Var,
    p: AttentionParams,
    block: BlockConfig,
    norm: Optional[NormParams] = None,
    layer: Optional[int] = None,
) -> Var:
    """Self-attention block: `SA(norm(x)) + x`, or `SA(norm(x))` without skip.

    The normalization is the identity when `block.prenorm` is False.
    """
    h = normalize(x, norm) if block.prenorm else x
    out = self_attention(h, p, layer=layer)
    return out + x if block.skip_sab else out


@array_function
def ffn_forward(
    x: Var,
    p: FfnParams,
    block: BlockConfig,
    norm: Optional[NormParams] = None,
) -> Var:
    """Token-wise feedforward network: `g(norm(x) W_up) W_down (+ x)`."""
    if x.shape[-1] != p.w_up.shape[0]:
        raise CondlabShapeError(
            "tokens do not match the feedforward input dimension",
            (x.shape, tuple(p.w_up.shape)),
        )
    h = normalize(x, norm) if block.prenorm else x
    out = activate(h @ p.w_up, p.activation) @ p.w_down
    return out + x if block.skip_ffn else out
