# -*- coding: utf-8 -*-

"""
Exceptions for cma_inpaint.

Contains the error hierarchy raised by the library and the helpers that
turn exceptions into readable messages and CLI exit codes.
"""

from typing import Any, Dict, List, Optional

from loguru import logger


class CMAError(Exception):
    """Base class for every error raised by cma_inpaint."""

    exit_code: int = 1


class ConfigError(CMAError):
    """Invalid configuration file, key or value."""

    exit_code = 2


class NumericError(CMAError):
    """
    A NaN/Inf appeared in a forward op or a loss component.

    Attributes:
        component: Name of the op, layer or loss component that went non-finite
        step: Training step at which it happened (None outside training)
    """

    exit_code = 3

    def __init__(self, message: str, component: Optional[str] = None, step: Optional[int] = None):
        super().__init__(message)
        self.component = component
        self.step = step


class DimensionError(CMAError, ValueError):
    """Shapes of operands do not agree."""


class DataError(CMAError, ValueError):
    """Invalid sample, mask, image file or manifest line."""


class CheckpointError(CMAError):
    """Unreadable, truncated or incompatible checkpoint file."""


def format_validation_errors(errors: List[Dict[str, Any]]) -> str:
    """
    Renders pydantic validation errors as a single readable message.

    Pydantic may include bytes objects in the 'input' field; they are
    decoded so the message stays printable.

    Args:
        errors: List of validation errors from `ValidationError.errors()`

    Returns:
        One line per error: "<dotted.location>: <message> (got <input>)"
    """
    lines = []
    for error in errors:
        location = ".".join(str(part) for part in error.get("loc", ()))
        value = error.get("input")
        if isinstance(value, bytes):
            value = value.decode("utf-8", errors="replace")
        message = error.get("msg", "invalid value")
        if error.get("type") == "extra_forbidden":
            message = "unknown key"
        lines.append(f"{location or '<root>'}: {message} (got {value!r})")
    return "\n".join(lines)


def exit_code_for(exc: BaseException) -> int:
    """
    Maps an exception to the CLI exit code.

    Exit codes:
    - 2: configuration error
    - 3: numeric failure (NaN/Inf, gradient check above tolerance)
    - 1: any other cma_inpaint error or I/O error

    Args:
        exc: Exception raised by a command

    Returns:
        Process exit code
    """
    code = exc.exit_code if isinstance(exc, CMAError) else 1
    logger.debug(f"Mapped {type(exc).__name__} to exit code {code}")
    return code
