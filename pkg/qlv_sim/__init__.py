"""Decoherence and protocol simulator for quantum location verification."""

from importlib import metadata

from . import analysis, protocol, quantum  # noqa: F401
from .config import Settings, configure, get_settings, reset_settings
from .errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    ProtocolCorruptionError,
    ProtocolOrderError,
    QlvError,
    ResourceError,
    ShapeError,
    SizeLimitError,
    ValidationError,
)

try:
    __version__ = metadata.version("qlv-sim")
except metadata.PackageNotFoundError:  # pragma: no cover - local dev
    __version__ = "0.0.0"

__all__ = [
    "ConfigurationError",
    "ContractError",
    "DomainError",
    "ProtocolCorruptionError",
    "ProtocolOrderError",
    "QlvError",
    "ResourceError",
    "Settings",
    "ShapeError",
    "SizeLimitError",
    "ValidationError",
    "analysis",
    "configure",
    "get_settings",
    "protocol",
    "quantum",
    "reset_settings",
    "__version__",
]
