"""Exception hierarchy for the ocean-fm pipeline.

Every error carries a machine-readable ``code`` plus a ``details`` dict so the
CLI can print a stable diagnostic and callers can branch on the code.
"""

from __future__ import annotations

from typing import Any


class OceanFMError(RuntimeError):
    """Base error with structured metadata."""

    code = "OCEAN_FM"

    def __init__(
        self,
        message: str,
        *,
        code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details = details or {}


class DimensionError(OceanFMError, ValueError):
    code = "DIMENSION"


class ConfigurationError(OceanFMError, ValueError):
    code = "CONFIGURATION"


class GeometryError(OceanFMError, ValueError):
    code = "GEOMETRY"


class DomainError(OceanFMError, ValueError):
    code = "DOMAIN"


class FormatError(OceanFMError):
    """Malformed artifact file; ``offset`` is the byte position of the problem."""

    code = "FORMAT"

    def __init__(
        self,
        message: str,
        *,
        offset: int,
        details: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(f"{message} (at byte {offset})", details=details)
        self.offset = offset


class ValidationError(OceanFMError):
    code = "VALIDATION"


class EmptyLossError(OceanFMError):
    code = "EMPTY_LOSS"


class TrainingDivergenceError(OceanFMError):
    code = "DIVERGENCE"


class DeterminismError(OceanFMError):
    code = "DETERMINISM"


class InsufficientDataError(OceanFMError):
    code = "INSUFFICIENT_DATA"


class EmptyWindowError(OceanFMError):
    code = "EMPTY_WINDOW"


__all__ = [
    "ConfigurationError",
    "DeterminismError",
    "DimensionError",
    "DomainError",
    "EmptyLossError",
    "EmptyWindowError",
    "FormatError",
    "GeometryError",
    "InsufficientDataError",
    "OceanFMError",
    "TrainingDivergenceError",
    "ValidationError",
]
