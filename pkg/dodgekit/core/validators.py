from collections.abc import Iterable, Sized
from typing import Any

from dodgekit.core.logging_config import get_logger

logger = get_logger(__name__)


class ValidationError(ValueError):
    """Raised when input validation fails."""
    pass


def check_range(
    name: str,
    value: float,
    lo: float,
    hi: float,
    error: type[ValidationError] = ValidationError,
) -> float:
    """
    Check that lo <= value <= hi.

    Args:
        name: Parameter name used in the message
        value: Value to check
        lo: Inclusive lower bound
        hi: Inclusive upper bound
        error: ValidationError subclass to raise

    Returns:
        The value, unchanged

    Raises:
        error: If the value is outside [lo, hi]
    """
    if not lo <= value <= hi:
        raise error(f"{name}={value} outside [{lo}, {hi}]")
    return value


def check_positive(name: str, value: float, error: type[ValidationError] = ValidationError) -> float:
    if not value > 0:
        raise error(f"{name} must be > 0, got {value}")
    return value


def check_fraction(name: str, value: float, error: type[ValidationError] = ValidationError) -> float:
    """Open-interval check for split fractions and confidences."""
    if not 0.0 < value < 1.0:
        raise error(f"{name} must lie in (0, 1), got {value}")
    return value


def check_choice(
    name: str,
    value: Any,
    choices: Iterable[Any],
    error: type[ValidationError] = ValidationError,
) -> Any:
    allowed = list(choices)
    if value not in allowed:
        raise error(f"{name}={value!r} not one of {allowed}")
    return value


def check_non_empty(name: str, value: Sized, error: type[ValidationError] = ValidationError) -> None:
    if len(value) == 0:
        raise error(f"{name} is empty")
