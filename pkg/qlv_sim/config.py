"""Numerical tolerances and size limits shared by every module."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping, Optional

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
ENV_PREFIX = "QLV_"


@dataclass(frozen=True)
class Settings:
    """Tolerances and limits; replace via :func:`configure`."""

    tol_herm: float = 1e-10
    tol_trace: float = 1e-10
    tol_psd: float = -1e-8
    tol_purity: float = 1e-8
    max_qubits: int = 12
    product_kraus_limit: int = 4096
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        if self.tol_herm < 0 or self.tol_trace < 0 or self.tol_purity < 0:
            raise ConfigurationError("tolerances must be non-negative", field="tol_herm")
        if self.tol_psd > 0:
            raise ConfigurationError("tol_psd must be zero or negative", field="tol_psd")
        if self.max_qubits < 1:
            raise ConfigurationError("max_qubits must be at least 1", field="max_qubits")
        if self.product_kraus_limit < 1:
            raise ConfigurationError(
                "product_kraus_limit must be at least 1", field="product_kraus_limit"
            )
        if self.speed_of_light <= 0:
            raise ConfigurationError("speed_of_light must be positive", field="speed_of_light")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Settings":
        known = {item.name for item in fields(self)}
        for key in overrides:
            if key not in known:
                raise ConfigurationError(f"unknown setting '{key}'", field=key)
        return replace(self, **dict(overrides))

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None) -> "Settings":
        env = os.environ if environ is None else environ
        base = cls()
        overrides: dict = {}
        for item in fields(base):
            raw = env.get(ENV_PREFIX + item.name.upper())
            if raw is None:
                continue
            current = getattr(base, item.name)
            try:
                overrides[item.name] = type(current)(raw)
            except ValueError as exc:
                raise ConfigurationError(
                    f"environment value for {item.name} is not a {type(current).__name__}",
                    field=item.name,
                    cause=exc,
                )
        return base.with_overrides(overrides)


_active = Settings()


def get_settings() -> Settings:
    return _active


def configure(**overrides: Any) -> Settings:
    """Replace the active settings, returning the new instance."""

    global _active
    _active = _active.with_overrides(overrides)
    logger.info("settings updated: %s", overrides)
    return _active


def reset_settings() -> Settings:
    global _active
    _active = Settings()
    return _active
