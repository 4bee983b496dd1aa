# -*- encoding: utf-8 -*-
"""Differentiable primitives.

Every function takes `Var` operands (plain arrays and scalars are recorded as
constants on the tape of the first variable), evaluates the forward value
eagerly and records the vector-Jacobian product on the tape. Leading axes are
treated as batch axes and broadcasting follows numpy; gradients of broadcast
operands are summed back to the operand's shape.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from condlab.autodiff.tape import Tape, Var
from condlab.schema.core import Padding
from condlab.schema.exception import CondlabAutodiffError, CondlabShapeError

Operand = Union[Var, np.ndarray, float]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _tape_of(*operands) -> Tape:
    for operand in operands:
        if isinstance(operand, Var):
            return operand.tape
        if isinstance(operand, (list, tuple)):
            for item in operand:
                if isinstance(item, Var):
                    return item.tape
    raise CondlabAutodiffError("at least one operand must be a recorded variable")


def _lift(tape: Tape, operand: Operand) -> Var:
    if isinstance(operand, Var):
        tape.check(operand)
        return operand
    return tape.constant(operand)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# elementwise arithmetic


def add(a: Operand, b: Operand) -> Var:
    """Elementwise sum with broadcasting."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        value = a.value + b.value
    except ValueError:
        raise CondlabShapeError("cannot add operands", (a.shape, b.shape)) from None
    shape_a, shape_b = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, shape_a), _unbroadcast(g, shape_b)

    return tape.apply("add", value, (a, b), vjp)


def sub(a: Operand, b: Operand) -> Var:
    """Elementwise difference with broadcasting."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        value = a.value - b.value
    except ValueError:
        raise CondlabShapeError("cannot subtract operands", (a.shape, b.shape)) from None
    shape_a, shape_b = a.shape, b.shape

    def vjp(g):
        return _unbroadcast(g, shape_a), _unbroadcast(-g, shape_b)

    return tape.apply("sub", value, (a, b), vjp)


def mul(a: Operand, b: Operand) -> Var:
    """Elementwise product with broadcasting."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    try:
        value = a.value * b.value
    except ValueError:
        raise CondlabShapeError("cannot multiply operands", (a.shape, b.shape)) from None
    va, vb = a.value, b.value

    def vjp(g):
        return _unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)

    return tape.apply("mul", value, (a, b), vjp)


def scalar_mul(a: Var, c: float) -> Var:
    """Multiply by a constant scalar."""
    c = float(c)

    def vjp(g):
        return (g * c,)

    return a.tape.apply("scalar_mul", a.value * c, (a,), vjp)


def power(a: Var, exponent: float) -> Var:
    """Elementwise power with a constant exponent."""
    exponent = float(exponent)
    va = a.value
    value = np.power(va, exponent)

    def vjp(g):
        return (g * exponent * np.power(va, exponent - 1.0),)

    return a.tape.apply("power", value, (a,), vjp)


# linear algebra and structure


def matmul(a: Operand, b: Operand) -> Var:
    """Matrix product over the last two axes, batched over leading axes."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    va, vb = a.value, b.value
    if va.ndim < 2 or vb.ndim < 2 or va.shape[-1] != vb.shape[-2]:  # noqa: PLR2004
        raise CondlabShapeError("inner dimensions of matrix product do not agree", (va.shape, vb.shape))
    try:
        value = va @ vb
    except ValueError:
        raise CondlabShapeError("cannot multiply operands", (va.shape, vb.shape)) from None

    def vjp(g):
        return (
            _unbroadcast(g @ _swap(vb), va.shape),
            _unbroadcast(_swap(va) @ g, vb.shape),
        )

    return tape.apply("matmul", value, (a, b), vjp)


def transpose(a: Var, axes: Optional[Sequence[int]] = None) -> Var:
    """Permute axes; by default swap the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return a.tape.apply("transpose", np.transpose(a.value, axes), (a,), vjp)


def reshape(a: Var, shape: Sequence[int]) -> Var:
    """Reshape without changing the data."""
    original = a.shape
    try:
        value = a.value.reshape(tuple(shape))
    except ValueError:
        raise CondlabShapeError(f"cannot reshape to {tuple(shape)}", (original,)) from None

    def vjp(g):
        return (g.reshape(original),)

    return a.tape.apply("reshape", value, (a,), vjp)


def concat(operands: Sequence[Operand], axis: int = 0) -> Var:
    """Concatenate along an axis."""
    tape = _tape_of(operands)
    variables = [_lift(tape, operand) for operand in operands]
    try:
        value = np.concatenate([var.value for var in variables], axis=axis)
    except ValueError:
        raise CondlabShapeError(
            "cannot concatenate operands",
            tuple(var.shape for var in variables),
        ) from None
    splits = np.cumsum([var.shape[axis] for var in variables])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape.apply("concat", value, variables, vjp)


def slice_axis(a: Var, start: int, stop: int, axis: int = -1) -> Var:
    """Select the half-open index range [start, stop) along an axis."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = a.shape

    def vjp(g):
        grad = np.zeros(shape)
        grad[index] = g
        return (grad,)

    return a.tape.apply("slice", a.value[index], (a,), vjp)


def sum(a: Var, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    """Sum over the given axes (all by default)."""
    shape = a.shape
    value = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape.apply("sum", np.asarray(value, dtype=np.float64), (a,), vjp)


def mean(a: Var, axis=None, keepdims: bool = False) -> Var:
    """Mean over the given axes (all by default)."""
    total = sum(a, axis=axis, keepdims=keepdims)
    count = a.size // max(total.size, 1) if axis is not None else a.size
    return scalar_mul(total, 1.0 / count)


# nonlinearities and normalization


def row_softmax(a: Var) -> Var:
    """Softmax over the last axis, stabilized by subtracting the row maximum."""
    shifted = a.value - np.max(a.value, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / np.sum(exp, axis=-1, keepdims=True)

    def vjp(g):
        return (probs * (g - np.sum(g * probs, axis=-1, keepdims=True)),)

    return a.tape.apply("row_softmax", probs, (a,), vjp)


def layernorm(
    x: Var,
    gamma: Optional[Operand] = None,
    beta: Optional[Operand] = None,
    eps: float = 1e-6,
) -> Var:
    """Normalize every row (last axis) to zero mean and unit variance.

    The affine parameters are optional; without them the normalization is
    parameter-free.
    """
    tape = x.tape
    mu = np.mean(x.value, axis=-1, keepdims=True)
    std = np.sqrt(np.var(x.value, axis=-1, keepdims=True) + eps)
    xhat = (x.value - mu) / std
    inputs = [x]
    if gamma is not None:
        gamma = _lift(tape, gamma)
        beta = _lift(tape, beta if beta is not None else np.zeros(gamma.shape))
        inputs += [gamma, beta]
        value = xhat * gamma.value + beta.value
        gamma_value = gamma.value
    else:
        value = xhat
        gamma_value = None

    def vjp(g):
        dxhat = g if gamma_value is None else g * gamma_value
        dx = (
            dxhat
            - np.mean(dxhat, axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        ) / std
        if gamma_value is None:
            return (dx,)
        return (
            dx,
            _unbroadcast(g * xhat, gamma_value.shape),
            _unbroadcast(g, gamma_value.shape),
        )

    return tape.apply("layernorm", value, inputs, vjp)


def gelu(x: Var) -> Var:
    """Gaussian error linear unit (tanh approximation)."""
    v = x.value
    inner = _GELU_C * (v + _GELU_A * v**3)
    t = np.tanh(inner)
    value = 0.5 * v * (1.0 + t)

    def vjp(g):
        derivative = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * _GELU_C * (
            1.0 + 3.0 * _GELU_A * v * v
        )
        return (g * derivative,)

    return x.tape.apply("gelu", value, (x,), vjp)


def relu(x: Var) -> Var:
    """Rectified linear unit; the subgradient at 0 is 0."""
    mask = x.value > 0

    def vjp(g):
        return (g * mask,)

    return x.tape.apply("relu", x.value * mask, (x,), vjp)


# convolutions (tensors of shape (batch, channels, height, width))


def _pad(x: np.ndarray, radius: int, padding: Padding) -> np.ndarray:
    widths = ((0, 0), (0, 0), (radius, radius), (radius, radius))
    mode = "wrap" if padding == Padding.CIRCULAR else "constant"
    return np.pad(x, widths, mode=mode)


def _fold(grad_padded: np.ndarray, radius: int, height: int, width: int, padding: Padding):
    if padding != Padding.CIRCULAR:
        return grad_padded[:, :, radius : radius + height, radius : radius + width].copy()
    rows = (np.arange(height + 2 * radius) - radius) % height
    cols = (np.arange(width + 2 * radius) - radius) % width
    grad = np.zeros(grad_padded.shape[:2] + (height, width))
    np.add.at(grad, (slice(None), slice(None), rows[:, None], cols[None, :]), grad_padded)
    return grad


def depthwise_conv2d(
    x: Var,
    kernel: Operand,
    bias: Optional[Operand] = None,
    padding: Padding = Padding.ZEROS,
) -> Var:
    """Per-channel 2-D cross-correlation with "same" output size.

    Args:
        x (Var): Input of shape (B, C, H, W).
        kernel (Operand): Kernels of shape (C, k, k) with odd k.
        bias (Operand, optional): Per-channel bias of shape (C,).
        padding (Padding): Zero or circular padding.
    """
    tape = _tape_of(x, kernel)
    x, kernel = _lift(tape, x), _lift(tape, kernel)
    if x.ndim != 4 or kernel.ndim != 3 or kernel.shape[0] != x.shape[1]:  # noqa: PLR2004
        raise CondlabShapeError("depthwise convolution shape mismatch", (x.shape, kernel.shape))
    _, channels, height, width = x.shape
    size = kernel.shape[-1]
    radius = size // 2
    padded = _pad(x.value, radius, Padding(padding))
    weights = kernel.value
    value = np.zeros_like(x.value)
    for u in range(size):
        for v in range(size):
            value += weights[None, :, u, v, None, None] * padded[:, :, u : u + height, v : v + width]
    inputs = [x, kernel]
    if bias is not None:
        bias = _lift(tape, bias)
        value = value + bias.value[None, :, None, None]
        inputs.append(bias)

    def vjp(g):
        grad_padded = np.zeros_like(padded)
        grad_kernel = np.zeros((channels, size, size))
        for u in range(size):
            for v in range(size):
                window = padded[:, :, u : u + height, v : v + width]
                grad_kernel[:, u, v] = np.einsum("bchw,bchw->c", g, window)
                grad_padded[:, :, u : u + height, v : v + width] += (
                    weights[None, :, u, v, None, None] * g
                )
        grads = [_fold(grad_padded, radius, height, width, Padding(padding)), grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return tape.apply("depthwise_conv2d", value, inputs, vjp)


def pointwise_conv2d(x: Var, weight: Operand, bias: Optional[Operand] = None) -> Var:
    """1x1 convolution mixing channels: `out[b, o] = sum_c weight[o, c] x[b, c]`."""
    tape = _tape_of(x, weight)
    x, weight = _lift(tape, x), _lift(tape, weight)
    if x.ndim != 4 or weight.ndim != 2 or weight.shape[1] != x.shape[1]:  # noqa: PLR2004
        raise CondlabShapeError("pointwise convolution shape mismatch", (x.shape, weight.shape))
    xv, wv = x.value, weight.value
    value = np.einsum("oc,bchw->bohw", wv, xv)
    inputs = [x, weight]
    if bias is not None:
        bias = _lift(tape, bias)
        value = value + bias.value[None, :, None, None]
        inputs.append(bias)

    def vjp(g):
        grads = [
            np.einsum("oc,bohw->bchw", wv, g),
            np.einsum("bohw,bchw->oc", g, xv),
        ]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return tape.apply("pointwise_conv2d", value, inputs, vjp)


def batchnorm(
    x: Var,
    gamma: Operand,
    beta: Operand,
    eps: float = 1e-5,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
) -> Var:
    """Batch normalization over the batch and spatial axes of (B, C, H, W).

    With `running_mean` and `running_var` given, these statistics are used
    (evaluation mode); otherwise the statistics of the batch are used and
    differentiated through (training mode).
    """
    tape = _tape_of(x, gamma)
    x, gamma, beta = _lift(tape, x), _lift(tape, gamma), _lift(tape, beta)
    axes = (0, 2, 3)
    training = running_mean is None
    if training:
        mu = np.mean(x.value, axis=axes, keepdims=True)
        var = np.var(x.value, axis=axes, keepdims=True)
    else:
        mu = np.asarray(running_mean)[None, :, None, None]
        var = np.asarray(running_var)[None, :, None, None]
    std = np.sqrt(var + eps)
    xhat = (x.value - mu) / std
    scale = gamma.value[None, :, None, None]
    value = xhat * scale + beta.value[None, :, None, None]

    def vjp(g):
        dxhat = g * scale
        if training:
            dx = (
                dxhat
                - np.mean(dxhat, axis=axes, keepdims=True)
                - xhat * np.mean(dxhat * xhat, axis=axes, keepdims=True)
            ) / std
        else:
            dx = dxhat / std
        return dx, np.sum(g * xhat, axis=axes), np.sum(g, axis=axes)

    return tape.apply("batchnorm", value, (x, gamma, beta), vjp)


# losses


def cross_entropy(logits: Var, labels: np.ndarray) -> Var:
    """Mean cross-entropy of integer labels under softmax(logits).

    Args:
        logits (Var): Scores of shape (B, K).
        labels (np.ndarray): Integer class labels of shape (B,).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):  # noqa: PLR2004
        raise CondlabShapeError("cross-entropy expects (B, K) logits and (B,) labels", (logits.shape, labels.shape))
    shifted = logits.value - np.max(logits.value, axis=-1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(labels.shape[0])
    value = -np.mean(log_probs[rows, labels])
    probs = np.exp(log_probs)

    def vjp(g):
        grad = probs.copy()
        grad[rows, labels] -= 1.0
        return (g * grad / labels.shape[0],)

    return logits.tape.apply("cross_entropy", np.asarray(value), (logits,), vjp)


def mse(prediction: Operand, target: Operand) -> Var:
    """Mean squared error."""
    tape = _tape_of(prediction, target)
    prediction, target = _lift(tape, prediction), _lift(tape, target)
    if prediction.shape != target.shape:
        raise CondlabShapeError("mse operands differ in shape", (prediction.shape, target.shape))
    diff = prediction.value - target.value
    count = diff.size

    def vjp(g):
        grad = g * 2.0 * diff / count
        return grad, -grad

    return tape.apply("mse", np.asarray(np.mean(diff * diff)), (prediction, target), vjp)
