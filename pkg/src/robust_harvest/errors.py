"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 1 and
:class:`InvariantViolation` to exit code 2.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Bad input: malformed data, out-of-range parameters, unmet preconditions."""


class StabilityError(ValidationError):
    """A time step violates the stability condition of an explicit-type scheme."""

    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class FitError(RuntimeError):
    """Least-squares fitting failed; carries the best parameters found so far."""

    def __init__(self, message: str, best=None, residual: float | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class InvariantViolation(RuntimeError):
    """A provable property of a numerical scheme failed during a solve."""

    def __init__(self, message: str, i: int | None = None, j: int | None = None):
        loc = "" if i is None else f" at (i={i}, j={j})"
        super().__init__(message + loc)
        self.i = i
        self.j = j
