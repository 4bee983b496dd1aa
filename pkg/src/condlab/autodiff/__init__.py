# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Reverse-mode automatic differentiation."""

from . import ops
from .check import evaluate, grad_check, gradient, jacobian, relative_error
from .tape import Gradients, Tape, Var
