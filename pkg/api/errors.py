"""
Error hierarchy - every failure carries the CLI exit code it maps to
Guard errors also name the violated guard and the hypothesis it mirrors
"""

from typing import Optional


class NonlocalError(Exception):
    """Base class for all library errors"""

    exit_code = 1

    def __init__(self, message: str, guard: Optional[str] = None, hypothesis: Optional[str] = None):
        super().__init__(message)
        self.guard = guard
        self.hypothesis = hypothesis

    def describe(self) -> str:
        parts = [str(self)]
        if self.guard:
            parts.append(f"guard: {self.guard}")
        if self.hypothesis:
            parts.append(f"hypothesis: {self.hypothesis}")
        return " | ".join(parts)


class ConfigError(NonlocalError):
    """Malformed or inconsistent configuration"""

    exit_code = 1


class GuardError(NonlocalError):
    """A numerical guard (index, precondition, resolution) failed"""

    exit_code = 2


class DomainError(GuardError, ValueError):
    pass


class RangeError(GuardError, ValueError):
    pass


class AlignmentError(GuardError, ValueError):
    pass


class ResolutionError(GuardError):
    def __init__(self, message: str, suggested_n: Optional[int] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.suggested_n = suggested_n


class PreconditionError(GuardError):
    pass


class OrderAmbiguityError(GuardError):
    pass


class CompatibilityError(GuardError):
    pass


class SingularSymbolError(GuardError):
    pass


class SingularityError(GuardError):
    pass


class UnsupportedFamilyError(GuardError):
    pass


class ConfigurationError(GuardError):
    """Operator configuration contradicts the index hypotheses"""


class GridMismatchError(GuardError):
    pass


class CoverageError(GuardError):
    pass


class AcceptanceError(NonlocalError):
    """One or more acceptance checks failed in verify-all"""

    exit_code = 3

    def __init__(self, message: str, results: Optional[list] = None, guard: Optional[str] = "verify-all"):
        super().__init__(message, guard=guard)
        self.results = results or []
