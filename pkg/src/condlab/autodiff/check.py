# -*- encoding: utf-8 -*-
"""Gradient checking and Jacobian assembly on top of the tape."""

from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from condlab.autodiff.tape import Tape, Var
from condlab.config import get_settings
from condlab.schema.exception import CondlabAutodiffError, CondlabBudgetError

logger = logging.getLogger("condlab")

Function = Callable[[Var], Var]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest entrywise deviation relative to the largest entry magnitude."""
    deviation = float(np.max(np.abs(analytic - numeric), initial=0.0))
    scale = max(
        float(np.max(np.abs(analytic), initial=0.0)),
        float(np.max(np.abs(numeric), initial=0.0)),
    )
    return deviation / scale if scale > 0.0 else deviation


def evaluate(f: Function, x: np.ndarray) -> np.ndarray:
    """Evaluate `f` at `x` without recording gradients."""
    tape = Tape(record=False)
    out = f(tape.constant(x))
    if not isinstance(out, Var):
        raise CondlabAutodiffError("function must return a recorded variable")
    return out.value


def gradient(f: Function, x: np.ndarray) -> np.ndarray:
    """Gradient of a scalar function at `x`, computed on a fresh tape."""
    tape = Tape()
    xv = tape.leaf(x)
    out = f(xv)
    if not isinstance(out, Var) or out.size != 1:
        raise CondlabAutodiffError("function must return a scalar variable")
    return tape.backward(out)[xv]


def grad_check(f: Function, x, step: float = 1e-5) -> float:
    """Compare the tape gradient of a scalar function with central differences.

    Args:
        f (Function): Maps a variable to a scalar variable. It must be smooth
            at `x`; ReLU kinks in particular give meaningless results.
        x (array_like): Point at which the gradient is checked.
        step (float): Finite difference step.

    Raises:
        CondlabAutodiffError: If `f` does not return a scalar.

    Returns:
        float: The largest entrywise deviation between the two gradients,
            relative to the largest gradient entry.
    """
    x = np.array(x, dtype=np.float64)
    analytic = gradient(f, x)
    numeric = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus = x.copy()
        minus = x.copy()
        plus[index] += step
        minus[index] -= step
        numeric[index] = (
            float(np.sum(evaluate(f, plus))) - float(np.sum(evaluate(f, minus)))
        ) / (2.0 * step)
    error = relative_error(analytic, numeric)
    logger.debug("Gradient check on shape %s: relative error %.3e", x.shape, error)
    return error


def jacobian(f: Function, x, max_entries: Optional[int] = None) -> np.ndarray:
    """Assemble the exact Jacobian of `f` at `x`.

    Row i is obtained by a backward pass seeded with the i-th basis covector
    of the flattened output.

    Args:
        f (Function): Maps a variable to a variable.
        x (array_like): Point of evaluation.
        max_entries (int, optional): Budget for the number of Jacobian
            entries. Defaults to the `max_jacobian_entries` configuration value.

    Raises:
        CondlabBudgetError: If the Jacobian would exceed the budget.

    Returns:
        np.ndarray: Matrix of shape (output size, input size), both flattened
            in row-major order.
    """
    x = np.array(x, dtype=np.float64)
    budget = max_entries or get_settings().max_jacobian_entries
    tape = Tape()
    xv = tape.leaf(x)
    out = f(xv)
    if not isinstance(out, Var):
        raise CondlabAutodiffError("function must return a recorded variable")
    required = out.size * x.size
    if required > budget:
        raise CondlabBudgetError("Jacobian exceeds the entry budget", required=required, budget=budget)
    result = np.empty((out.size, x.size))
    seed = np.zeros(out.size)
    for row in range(out.size):
        seed[row] = 1.0
        result[row] = tape.backward(out, seed.reshape(out.shape))[xv].ravel()
        seed[row] = 0.0
    return result
