"""Exception types shared across modules.

The CLI maps these onto exit codes, so every user-facing failure should
raise one of them rather than a bare ``ValueError``.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Malformed input: bad file, bad parameter, broken invariant."""


class ParseError(ValidationError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class InfeasibleError(ValueError):
    """No model fits inside the budget."""


class InstanceTooLargeError(ValueError):
    """Exhaustive enumeration would exceed the configured size guard."""


class BudgetExceededError(RuntimeError):
    """A run would spend more than its per-query budget."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class BackendError(RuntimeError):
    """A model invocation failed; ``record`` holds the partial run."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record
