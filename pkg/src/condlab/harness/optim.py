# -*- encoding: utf-8 -*-
"""Parameter update rules.

Optimizers work on dictionaries of named arrays, the representation returned
by `ModelParams.arrays()`, and return updated copies. Weight decay is
decoupled and only applies to matrices and higher-order tensors, never to
biases or normalization parameters.
"""

from __future__ import annotations

import logging
import math
from typing import Dict

import numpy as np

from condlab.schema.exception import CondlabConfigError
from condlab.schema.experiment import OptimizerKind, OptimizerSpec

logger = logging.getLogger("condlab")

Arrays = Dict[str, np.ndarray]


def decays(value: np.ndarray) -> bool:
    """Whether weight decay applies to a parameter."""
    return value.ndim >= 2  # noqa: PLR2004


class Optimizer:
    """Base class of the parameter update rules."""

    def __init__(self, spec: OptimizerSpec):  # noqa: D107
        self.spec = spec
        self.steps = 0

    def step(self, params: Arrays, grads: Arrays) -> Arrays:
        """Return the parameters after one update.

        Raises:
            CondlabConfigError: If a gradient is missing for a parameter.
        """
        missing = sorted(set(params) - set(grads))
        if missing:
            raise CondlabConfigError(f"no gradient for parameters {missing}")
        self.steps += 1
        return {name: self._update(name, params[name], grads[name]) for name in params}

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError()


class SGD(Optimizer):
    """Plain gradient descent with decoupled weight decay."""

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:  # noqa: ARG002
        lr = self.spec.learning_rate
        if decays(value):
            value = value * (1.0 - lr * self.spec.weight_decay)
        return value - lr * grad


class AdamW(Optimizer):
    """Adam with bias-corrected moments and decoupled weight decay."""

    def __init__(self, spec: OptimizerSpec):  # noqa: D107
        super().__init__(spec)
        self.first: Arrays = {}
        self.second: Arrays = {}

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        spec = self.spec
        m = spec.beta1 * self.first.get(name, 0.0) + (1.0 - spec.beta1) * grad
        v = spec.beta2 * self.second.get(name, 0.0) + (1.0 - spec.beta2) * grad * grad
        self.first[name], self.second[name] = m, v
        m_hat = m / (1.0 - spec.beta1**self.steps)
        v_hat = v / (1.0 - spec.beta2**self.steps)
        if decays(value):
            value = value * (1.0 - spec.learning_rate * spec.weight_decay)
        return value - spec.learning_rate * m_hat / (np.sqrt(v_hat) + spec.eps)


def build_optimizer(spec: OptimizerSpec) -> Optimizer:
    """Create the optimizer described by its settings."""
    if spec.kind == OptimizerKind.ADAMW:
        return AdamW(spec)
    return SGD(spec)


def gradient_norm(grads: Arrays) -> float:
    """Global Euclidean norm of all gradients."""
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
