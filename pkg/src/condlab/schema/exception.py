"""Exceptions raised by condlab."""
from __future__ import annotations

from typing import Optional, Tuple


class CondlabError(Exception):
    """Base class for condlab errors."""

    def __init__(self, message):  # noqa: D107
        super().__init__(message)
        self.message = message


class CondlabShapeError(CondlabError):
    """Error raised if operands have inconsistent shapes."""

    def __init__(self, message, shapes: Tuple = ()):  # noqa: D107
        super().__init__(message)
        self.shapes = shapes

    def __str__(self):
        if not self.shapes:
            return self.message
        shapes = " vs ".join(str(tuple(s)) for s in self.shapes)
        return f"{self.message} (shapes {shapes})"


class CondlabNonFiniteError(CondlabError):
    """Error raised if a matrix contains NaN or infinite entries."""


class CondlabRankDeficientError(CondlabError):
    """Error raised if a matrix is numerically rank deficient.

    The condition number of such a matrix is effectively infinite.
    """

    def __init__(  # noqa: D107
        self,
        message,
        tolerance: float,
        sigma_min: float = 0.0,
        sigma_max: float = 0.0,
    ):
        super().__init__(message)
        self.tolerance = tolerance
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max

    def __str__(self):
        return (
            f"{self.message}: condition number is effectively infinite "
            f"(sigma_min={self.sigma_min:.3e} < rank tolerance {self.tolerance:.3e})"
        )


class CondlabGrayingError(CondlabError):
    """Error raised while applying token graying to a sample of a batch."""

    def __init__(self, message, index: Optional[int] = None):  # noqa: D107
        super().__init__(message)
        self.index = index

    def __str__(self):
        if self.index is None:
            return self.message
        return f"Sample {self.index}: {self.message}"


class CondlabModelError(CondlabError):
    """Error raised during a model forward pass."""

    def __init__(self, message, layer: Optional[int] = None):  # noqa: D107
        super().__init__(message)
        self.layer = layer

    def __str__(self):
        if self.layer is None:
            return self.message
        return f"Layer {self.layer}: {self.message}"


class CondlabAutodiffError(CondlabError):
    """Error related to the use of a gradient tape."""


class CondlabBudgetError(CondlabAutodiffError):
    """Error raised if a Jacobian would exceed the configured entry budget."""

    def __init__(self, message, required: int, budget: int):  # noqa: D107
        super().__init__(message)
        self.required = required
        self.budget = budget

    def __str__(self):
        return (
            f"{self.message}: requires {self.required} entries, "
            f"budget is {self.budget}"
        )


class CondlabConfigError(CondlabError):
    """Error related to the (mis)configuration of an experiment."""


class CondlabDatasetError(CondlabConfigError):
    """Error raised if a dataset file is malformed."""

    def __init__(self, message, offset: Optional[int] = None):  # noqa: D107
        super().__init__(message)
        self.offset = offset

    def __str__(self):
        if self.offset is None:
            return self.message
        return f"{self.message} (at byte offset {self.offset})"


class CondlabStorageError(CondlabError):
    """Error raised when reading or writing matrix containers and reports."""


class CondlabLibraryError(CondlabError):
    """Generic run library error."""


class CondlabRunNotFoundError(CondlabLibraryError):
    """Error raised if a run was accessed that does not exist."""

    def __init__(self, message, target_id):  # noqa: D107
        super().__init__(message)
        self.target_id = target_id

    def __str__(self):
        return f"Run with ID {self.target_id} not found."
