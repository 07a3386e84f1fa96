"""
Declarative hyperparameter definitions shared by preprocessors, learners and the option tree.
"""

import math
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from dodgekit.core.validators import ValidationError, check_choice, check_range


@dataclass(frozen=True)
class ParamDef:
    """
    One hyperparameter: its type, search range and accepted range.

    `lo`/`hi` (or `choices`) are the search range the option tree samples from.
    `valid_lo`/`valid_hi` widen what a hand-written spec may use; they default to the
    search range. `active_when=(param, value)` makes the parameter conditional.
    """

    name: str
    kind: str  # "int" | "real" | "choice"
    default: Any
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: tuple[Any, ...] = ()
    valid_lo: Optional[float] = None
    valid_hi: Optional[float] = None
    active_when: Optional[tuple[str, Any]] = None
    tunable: bool = True

    @property
    def numeric(self) -> bool:
        return self.kind in ("int", "real")

    def is_active(self, params: Mapping[str, Any]) -> bool:
        if self.active_when is None:
            return True
        other, value = self.active_when
        return params.get(other) == value

    def coerce(self, value: Any, error: type[ValidationError] = ValidationError) -> Any:
        """Validate `value` and return it in canonical type."""
        if self.kind == "choice":
            return check_choice(self.name, value, self.choices, error)

        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise error(f"{self.name}={value!r} is not a number")
        if math.isnan(value):
            raise error(f"{self.name} is NaN")
        lo = self.lo if self.valid_lo is None else self.valid_lo
        hi = self.hi if self.valid_hi is None else self.valid_hi
        check_range(self.name, value, -math.inf if lo is None else lo,
                    math.inf if hi is None else hi, error)
        if self.kind == "int":
            if float(value) != round(value):
                raise error(f"{self.name}={value} must be an integer")
            return int(round(value))
        return float(value)


def resolve_params(
    owner: str,
    defs: tuple[ParamDef, ...],
    params: Mapping[str, Any],
    error: type[ValidationError] = ValidationError,
) -> dict[str, Any]:
    """Fill defaults, validate, and drop inactive conditional parameters."""
    known = {d.name for d in defs}
    unknown = sorted(set(params) - known)
    if unknown:
        raise error(f"{owner}: unknown parameter(s) {unknown}")

    resolved: dict[str, Any] = {}
    for d in defs:
        resolved[d.name] = d.coerce(params[d.name], error) if d.name in params else d.default
    for d in defs:
        if not d.is_active(resolved):
            resolved.pop(d.name)
    return resolved
