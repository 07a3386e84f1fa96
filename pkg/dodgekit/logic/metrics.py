"""
Evaluation metrics: recall, false-positive rate, distance-to-heaven and effort-aware Popt(20).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from dodgekit.core.logging_config import get_logger
from dodgekit.core.validators import ValidationError

logger = get_logger(__name__)

POPT_CUTOFF = 0.2


class MetricError(ValidationError):
    """Raised when a metric is undefined for its inputs."""
    pass


class Polarity(str, Enum):
    """Direction in which a score improves."""

    LOWER = "lower"
    HIGHER = "higher"

    def better(self, a: float, b: float) -> bool:
        """True when a is strictly better than b."""
        return a < b if self is Polarity.LOWER else a > b

    @property
    def worst(self) -> float:
        return 1.0 if self is Polarity.LOWER else 0.0


GOAL_POLARITY: dict[str, Polarity] = {
    "d2h": Polarity.LOWER,
    "popt20": Polarity.HIGHER,
}


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class GoalVector:
    """Named goal scores in [0, 1], each with its polarity."""

    scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[str, float] = {}
        for name, value in self.scores.items():
            if name not in GOAL_POLARITY:
                raise MetricError(f"unknown goal '{name}'")
            if not 0.0 <= value <= 1.0 or math.isnan(value):
                raise MetricError(f"goal {name}={value} outside [0, 1]")
            clean[name] = float(value)
        object.__setattr__(self, "scores", clean)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self.scores))

    def polarity(self, name: str) -> Polarity:
        return GOAL_POLARITY[name]

    def __getitem__(self, name: str) -> float:
        return self.scores[name]

    def __len__(self) -> int:
        return len(self.scores)

    def within(self, other: "GoalVector", epsilon: float) -> bool:
        """True when every goal differs from `other` by strictly less than epsilon."""
        if self.names != other.names:
            raise MetricError(f"goal names differ: {self.names} vs {other.names}")
        return all(abs(self.scores[n] - other.scores[n]) < epsilon for n in self.names)

    def better_than(self, other: "GoalVector", primary: str) -> bool:
        return GOAL_POLARITY[primary].better(self.scores[primary], other.scores[primary])

    def to_dict(self) -> dict[str, float]:
        return dict(sorted(self.scores.items()))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GoalVector":
        return cls(scores={str(k): float(v) for k, v in data.items()})


@dataclass(frozen=True)
class PoptResult:
    value: float
    degenerate: bool
    s_optimal: float
    s_model: float
    s_worst: float


def _as_bool(labels: ArrayLike) -> NDArray[np.bool_]:
    return np.asarray(labels, dtype=bool).ravel()


def confusion(actual: ArrayLike, predicted: ArrayLike) -> Confusion:
    y_true = _as_bool(actual)
    y_pred = _as_bool(predicted)
    if y_true.size != y_pred.size:
        raise MetricError(f"length mismatch: {y_true.size} actual vs {y_pred.size} predicted")
    if y_true.size == 0:
        raise MetricError("empty label set")
    return Confusion(
        tp=int(np.sum(y_true & y_pred)),
        fp=int(np.sum(~y_true & y_pred)),
        tn=int(np.sum(~y_true & ~y_pred)),
        fn=int(np.sum(y_true & ~y_pred)),
    )


def recall(c: Confusion) -> float:
    if c.tp + c.fn == 0:
        raise MetricError("recall undefined: no actual positives")
    return c.tp / (c.tp + c.fn)


def false_positive_rate(c: Confusion) -> float:
    if c.fp + c.tn == 0:
        raise MetricError("false positive rate undefined: no actual negatives")
    return c.fp / (c.fp + c.tn)


def d2h_from_rates(recall_value: float, fpr: float) -> float:
    return math.sqrt((1.0 - recall_value) ** 2 + fpr ** 2) / math.sqrt(2.0)


def d2h(c: Confusion) -> float:
    """Normalized distance from (recall, FPR) to the ideal point (1, 0)."""
    if c.tp + c.fn == 0 or c.fp + c.tn == 0:
        raise MetricError("d2h undefined: actual labels hold a single class")
    return d2h_from_rates(recall(c), false_positive_rate(c))


def _curve_area(loc: NDArray, defects: NDArray, order: NDArray, total_loc: float,
                total_defects: float, cutoff: float) -> float:
    """
    Area under the cumulative defects-vs-LOC curve for x in [0, cutoff].

    Each module spans [x_prev, x_next] on the LOC axis, with recall rising linearly
    across it. Zero-LOC modules have a zero-width span and act as a vertical step.
    """
    x = np.concatenate([[0.0], np.cumsum(loc[order]) / total_loc])
    y = np.concatenate([[0.0], np.cumsum(defects[order]) / total_defects])
    x0, x1 = x[:-1], x[1:]
    y0, y1 = y[:-1], y[1:]

    width = np.clip(x1, None, cutoff) - x0
    inside = width > 0
    span = x1 - x0
    safe_span = np.where(span > 0, span, 1.0)
    y_end = y0 + (y1 - y0) * np.where(x1 > cutoff, (cutoff - x0) / safe_span, 1.0)
    return float(np.sum(np.where(inside, 0.5 * (y0 + y_end) * width, 0.0)))


def popt20_detail(
    effort: ArrayLike,
    actual: ArrayLike,
    predicted: ArrayLike,
    cutoff: float = POPT_CUTOFF,
) -> PoptResult:
    """
    Normalized Popt at the `cutoff` LOC point, with the three areas behind it.

    Args:
        effort: Per-row LOC, all >= 0 with a positive total
        actual: Actual defective flags
        predicted: Predicted defective flags

    Returns:
        PoptResult; `degenerate` is set (and value 1.0) when S(optimal) == S(worst)

    Raises:
        MetricError: missing/negative/zero effort, length mismatch, no actual defects
    """
    if effort is None:
        raise MetricError("popt20 requires an effort column")
    loc = np.asarray(effort, dtype=np.float64).ravel()
    y_true = _as_bool(actual)
    y_pred = _as_bool(predicted)
    if not loc.size == y_true.size == y_pred.size:
        raise MetricError("effort, actual and predicted differ in length")
    if np.any(loc < 0):
        raise MetricError("effort values must be >= 0")
    total_loc = float(loc.sum())
    if total_loc <= 0:
        raise MetricError("zero total LOC")
    defects = y_true.astype(np.float64)
    total_defects = float(defects.sum())
    if total_defects == 0:
        raise MetricError("popt20 needs at least one actual defect")

    index = np.arange(loc.size)
    # lexsort: last key is primary
    model_order = np.lexsort((index, loc, ~y_pred))
    with np.errstate(divide="ignore", invalid="ignore"):
        density = np.where(loc > 0, defects / np.where(loc > 0, loc, 1.0),
                           np.where(defects > 0, np.inf, 0.0))
    optimal_order = np.lexsort((index, -density))
    worst_order = np.lexsort((index, density))

    args = (loc, defects)
    s_model = _curve_area(*args, model_order, total_loc, total_defects, cutoff)
    s_optimal = _curve_area(*args, optimal_order, total_loc, total_defects, cutoff)
    s_worst = _curve_area(*args, worst_order, total_loc, total_defects, cutoff)

    if math.isclose(s_optimal, s_worst, rel_tol=0.0, abs_tol=1e-15):
        logger.warning(
            "Popt degenerate: optimal and worst curves coincide",
            extra={"s_optimal": s_optimal, "rows": int(loc.size)},
        )
        return PoptResult(1.0, True, s_optimal, s_model, s_worst)

    value = 1.0 - (s_optimal - s_model) / (s_optimal - s_worst)
    return PoptResult(float(np.clip(value, 0.0, 1.0)), False, s_optimal, s_model, s_worst)


def popt20(effort: ArrayLike, actual: ArrayLike, predicted: ArrayLike) -> float:
    return popt20_detail(effort, actual, predicted).value


def goals(
    c: Confusion,
    effort: Optional[ArrayLike],
    actual: ArrayLike,
    predicted: ArrayLike,
    wanted: Iterable[str],
) -> GoalVector:
    wanted = list(wanted)
    if not wanted:
        raise MetricError("no goals requested")
    scores: dict[str, float] = {}
    for name in wanted:
        if name == "d2h":
            scores[name] = d2h(c)
        elif name == "popt20":
            if effort is None:
                raise MetricError("popt20 requested but the dataset has no effort column")
            scores[name] = popt20(effort, actual, predicted)
        else:
            raise MetricError(f"unknown goal '{name}'")
    return GoalVector(scores=scores)


def worst_goals(names: Iterable[str]) -> GoalVector:
    """Worst-possible value for every goal (used when an evaluation fails)."""
    names = list(names)
    unknown = [n for n in names if n not in GOAL_POLARITY]
    if unknown:
        raise MetricError(f"unknown goal(s) {unknown}")
    return GoalVector(scores={name: GOAL_POLARITY[name].worst for name in names})
