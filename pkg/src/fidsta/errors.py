"""Exception hierarchy. Each family maps to a CLI exit code."""

from __future__ import annotations

from enum import Enum


class FidstaError(Exception):
    exit_code = 1


class DomainError(FidstaError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 4


class ConfigError(FidstaError, ValueError):
    exit_code = 4


class ExactModeCeilingError(DomainError):
    """Hilbert dimension too large for the exact order-statistics density."""

    def __init__(self, dim: int, ceiling: int):
        super().__init__(
            f"exact density refused for D={dim} (ceiling D<={ceiling}); "
            "use the large-D approximation (form='approx')"
        )
        self.dim = dim
        self.ceiling = ceiling


class NumericError(FidstaError, ArithmeticError):
    """Non-finite or inconsistent intermediate result."""


class DegenerateChannelError(FidstaError, ValueError):
    """Fidelity zero: the noisy density is a point mass at 1/D."""

    exit_code = 3


class EstimationFailed(FidstaError, RuntimeError):
    exit_code = 3


class UnattainableThresholdError(EstimationFailed):
    """Shot bisection hit its ceiling without reaching the error threshold."""


class ParseCode(str, Enum):
    EMPTY_FILE = "empty-file"
    MISSING_HEADER = "missing-header"
    BAD_HEADER = "bad-header"
    MALFORMED_LINE = "malformed-line"
    BAD_ALPHABET = "bad-alphabet"
    BAD_WIDTH = "bad-width"
    NEGATIVE_COUNT = "negative-count"
    ZERO_COUNT = "zero-count"
    DUPLICATE_KEY = "duplicate-key"
    BAD_RECORDS = "bad-records"


class ParseError(FidstaError, ValueError):
    exit_code = 2

    def __init__(self, code: ParseCode, message: str, *, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} [{code.value}] {message}".strip())
        self.code = code
        self.path = path
        self.line = line
