"""Exception types shared across the package."""

from __future__ import annotations


class QsocError(Exception):
    """Base class for all package-specific errors."""


class CapacityError(QsocError):
    """A requested size exceeds a configured hard cap."""


class AlgebraMismatchError(QsocError):
    """Operands live on different algebra contexts."""


class SupportError(QsocError):
    """An element violates a blade-support (adaptedness) constraint."""


class AdaptednessError(QsocError):
    """A coefficient callback produced a non-adapted element."""


class ContractError(QsocError):
    """Inputs passed together do not satisfy their mutual contract."""


class BudgetError(QsocError):
    """A combinatorial enumeration would exceed its configured budget."""


class StepSizeError(QsocError):
    """Gradient step could not be made productive after repeated halving."""


class ConfigError(QsocError):
    """A run configuration failed schema validation.

    ``errors`` holds ``(field_path, message)`` pairs for every violation found.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" if path else msg for path, msg in self.errors)
        super().__init__(lines)
