# -*- encoding: utf-8 -*-
"""Gradient tape for reverse-mode automatic differentiation.

Every operation evaluates eagerly and appends a node to the tape holding the
indices of its inputs and a closure computing the vector-Jacobian product.
Nodes are therefore in topological order by construction, and the backward
pass simply walks them in reverse.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from condlab.schema.exception import CondlabAutodiffError

Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _Node:
    __slots__ = ("op", "parents", "vjp", "requires_grad")

    def __init__(
        self,
        op: str,
        parents: Tuple[int, ...],
        vjp: Optional[Vjp],
        requires_grad: bool,
    ):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad


class Var:
    """A value recorded on a tape.

    Supports the arithmetic operators `+`, `-`, `*`, `/` (by scalars), `@`,
    unary minus, `**` and the `T` transpose shorthand.
    """

    __slots__ = ("value", "tape", "index", "generation", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        tape: Tape,
        index: int,
        generation: int,
        requires_grad: bool,
    ):
        self.value = value
        self.tape = tape
        self.index = index
        self.generation = generation
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        """Shape of the value."""
        return self.value.shape

    @property
    def ndim(self) -> int:
        """Number of dimensions of the value."""
        return self.value.ndim

    @property
    def size(self) -> int:
        """Number of entries of the value."""
        return self.value.size

    @property
    def T(self) -> Var:  # noqa: N802
        """Swap the last two axes."""
        from condlab.autodiff import ops

        return ops.transpose(self)

    def __repr__(self):
        return (
            f"Var(op={self.tape.op_name(self)!r}, shape={self.shape}, "
            f"requires_grad={self.requires_grad})"
        )

    def __add__(self, other):
        from condlab.autodiff import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from condlab.autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from condlab.autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from condlab.autodiff import ops

        if np.isscalar(other):
            return ops.scalar_mul(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from condlab.autodiff import ops

        if not np.isscalar(other):
            raise CondlabAutodiffError("division is only supported by scalars")
        return ops.scalar_mul(self, 1.0 / float(other))

    def __neg__(self):
        from condlab.autodiff import ops

        return ops.scalar_mul(self, -1.0)

    def __matmul__(self, other):
        from condlab.autodiff import ops

        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from condlab.autodiff import ops

        return ops.matmul(other, self)

    def __pow__(self, exponent):
        from condlab.autodiff import ops

        return ops.power(self, float(exponent))


class Gradients:
    """Result of a backward pass.

    Indexing with a variable returns its gradient; variables that did not
    contribute to the output get a zero gradient.
    """

    def __init__(self, tape: Tape, slots: List[Optional[np.ndarray]]):  # noqa: D107
        self._tape = tape
        self._slots = slots

    def __getitem__(self, var: Var) -> np.ndarray:
        self._tape.check(var)
        grad = self._slots[var.index] if var.index < len(self._slots) else None
        if grad is None:
            return np.zeros_like(var.value)
        return grad

    def get(self, var: Var) -> np.ndarray:
        """Gradient of a variable, zero if it does not influence the output."""
        return self[var]

    def of(self, variables: Dict[str, Var]) -> Dict[str, np.ndarray]:
        """Gradients of a dictionary of named variables."""
        return {name: self[var] for name, var in variables.items()}


class Tape:
    """An append-only record of operations.

    Args:
        record (bool): If False, operations are evaluated without storing
            vector-Jacobian products, so no backward pass is possible. This is
            used for plain inference.
    """

    def __init__(self, record: bool = True):  # noqa: D107
        self.record = record
        self.generation = 0
        self._nodes: List[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def reset(self) -> None:
        """Discard all nodes. Variables created before the reset become invalid."""
        self._nodes = []
        self.generation += 1

    def check(self, var: Var) -> None:
        """Make sure a variable belongs to the current generation of this tape.

        Raises:
            CondlabAutodiffError: If the variable was recorded on another tape
                or before the last reset.
        """
        if var.tape is not self:
            raise CondlabAutodiffError("variable belongs to a different tape")
        if var.generation != self.generation:
            raise CondlabAutodiffError("variable was recorded before the tape was reset")

    def op_name(self, var: Var) -> str:
        """Name of the operation that produced a variable."""
        if var.generation != self.generation or var.index >= len(self._nodes):
            return "<stale>"
        return self._nodes[var.index].op

    def _append(
        self,
        op: str,
        value: np.ndarray,
        parents: Tuple[int, ...],
        vjp: Optional[Vjp],
        requires_grad: bool,
    ) -> Var:
        if not self.record:
            vjp = None
            requires_grad = False
        self._nodes.append(_Node(op, parents, vjp, requires_grad))
        return Var(value, self, len(self._nodes) - 1, self.generation, requires_grad)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        """Record an input variable."""
        array = np.array(value, dtype=np.float64)
        return self._append("leaf", array, (), None, requires_grad)

    def constant(self, value) -> Var:
        """Record an input that never receives a gradient."""
        return self.leaf(value, requires_grad=False)

    def apply(
        self,
        op: str,
        value: np.ndarray,
        inputs: Iterable[Var],
        vjp: Vjp,
    ) -> Var:
        """Record the result of an operation on the given input variables.

        Args:
            op (str): Operation name.
            value (np.ndarray): The already computed forward value.
            inputs (Iterable[Var]): The operands, in the order in which `vjp`
                returns their gradients.
            vjp (Vjp): Maps the upstream gradient to one gradient per input
                (or None for inputs that need none).

        Returns:
            Var: The recorded result.
        """
        inputs = tuple(inputs)
        for var in inputs:
            self.check(var)
        requires_grad = any(var.requires_grad for var in inputs)
        return self._append(
            op,
            value,
            tuple(var.index for var in inputs),
            vjp if requires_grad else None,
            requires_grad,
        )

    def backward(self, output: Var, seed: Optional[np.ndarray] = None) -> Gradients:
        """Propagate gradients from `output` back to every recorded variable.

        Args:
            output (Var): The variable to differentiate.
            seed (np.ndarray, optional): Upstream gradient (covector) of the
                output. Required unless the output is a scalar, in which case
                it defaults to 1.

        Raises:
            CondlabAutodiffError: If the tape does not record, the output is
                stale, or a non-scalar output has no seed.

        Returns:
            Gradients: Gradients of all variables with respect to the output.
        """
        if not self.record:
            raise CondlabAutodiffError("cannot differentiate a non-recording tape")
        self.check(output)
        if seed is None:
            if output.size != 1:
                raise CondlabAutodiffError(
                    f"output of shape {output.shape} is not a scalar; pass a seed",
                )
            seed = np.ones_like(output.value)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != output.shape:
                raise CondlabAutodiffError(
                    f"seed shape {seed.shape} does not match output {output.shape}",
                )
        slots: List[Optional[np.ndarray]] = [None] * (output.index + 1)
        slots[output.index] = seed
        for index in range(output.index, -1, -1):
            grad = slots[index]
            node = self._nodes[index]
            if grad is None or node.vjp is None:
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if parent_grad is None or not self._nodes[parent].requires_grad:
                    continue
                if slots[parent] is None:
                    slots[parent] = parent_grad
                else:
                    slots[parent] = slots[parent] + parent_grad
        return Gradients(self, slots)
