"""Exception hierarchy for the QLV simulator."""

from __future__ import annotations

from typing import Optional


class QlvError(Exception):
    """Base exception for all simulator failures."""

    def __init__(self, message: str, *, cause: Optional[BaseException] = None) -> None:
        super().__init__(message)
        self.__cause__ = cause


class ValidationError(QlvError):
    """Raised when a matrix, state or channel violates its invariants.

    ``field`` names the offending parameter when the check concerns a single one.
    """

    def __init__(
        self,
        message: str,
        *,
        field: Optional[str] = None,
        cause: Optional[BaseException] = None,
    ) -> None:
        super().__init__(message, cause=cause)
        self.field = field



class ShapeError(ValidationError):
    """Raised when operand dimensions do not match."""


class SizeLimitError(QlvError):
    """Raised when a qubit count exceeds the configured maximum."""


class DomainError(QlvError):
    """Raised when an index or argument is outside its allowed range."""


class ContractError(QlvError):
    """Raised when a caller breaks a documented precondition."""


class ConfigurationError(QlvError):
    """Raised when a scenario or command configuration is invalid."""

    def __init__(
        self,
        message: str,
        *,
        field: Optional[str] = None,
        cause: Optional[BaseException] = None,
    ) -> None:
        super().__init__(message, cause=cause)
        self.field = field


class ProtocolOrderError(QlvError):
    """Raised when protocol steps are executed out of order."""


class ResourceError(QlvError):
    """Raised when a pair registry runs out of unconsumed pairs."""


class ProtocolCorruptionError(QlvError):
    """Raised when a message references a consumed or unknown qubit label."""
