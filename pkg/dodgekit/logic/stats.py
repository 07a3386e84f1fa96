"""
Nonparametric comparison of treatments: pooled-null bootstrap significance,
Vargha-Delaney A12 effect size, and win/tie/loss aggregation.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import make_rng
from dodgekit.core.validators import ValidationError, check_fraction
from dodgekit.logic.metrics import Polarity

logger = get_logger(__name__)

TIE = "tie"
# Vargha-Delaney cut points on max(A12, 1 - A12)
SMALL, MEDIUM, LARGE = 0.56, 0.64, 0.71


class StatsError(ValidationError):
    """Raised for empty samples, polarity mismatches and bad test parameters."""
    pass


@dataclass(frozen=True)
class SampleSet:
    name: str
    scores: tuple[float, ...]
    polarity: Polarity = Polarity.LOWER

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.scores)
        if not scores:
            raise StatsError(f"sample '{self.name}' is empty")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)

    def oriented(self) -> np.ndarray:
        """Scores turned so that larger is always better."""
        return -self.values if self.polarity is Polarity.LOWER else self.values

    @property
    def median(self) -> float:
        return float(np.median(self.values))


@dataclass(frozen=True)
class ComparisonVerdict:
    a: str
    b: str
    significant: bool
    a12: float
    winner: str

    @property
    def is_tie(self) -> bool:
        return self.winner == TIE

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "significant": self.significant,
                "a12": self.a12, "winner": self.winner}


def _check_pair(a: SampleSet, b: SampleSet) -> None:
    if a.polarity is not b.polarity:
        raise StatsError(
            f"polarity mismatch: '{a.name}' is {a.polarity.value}, '{b.name}' is {b.polarity.value}"
        )


def bootstrap_test(
    a: SampleSet,
    b: SampleSet,
    resamples: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> bool:
    """
    Two-sided pooled-null bootstrap test on the difference of means.

    Both samples are redrawn (with replacement, original sizes) from their union; the
    p-value is the share of resampled |mean difference| at least as large as the observed
    one, and the test is significant when p < 1 - confidence. The two samples are put in
    a canonical order first, so swapping the arguments gives the same answer.

    Raises:
        StatsError: resamples < 100 or confidence outside (0, 1)
    """
    if resamples < 100:
        raise StatsError(f"resamples must be >= 100, got {resamples}")
    check_fraction("confidence", confidence, StatsError)

    x, y = a.values, b.values
    if (x.size, tuple(np.sort(x))) > (y.size, tuple(np.sort(y))):
        x, y = y, x
    observed = abs(x.mean() - y.mean())
    if observed == 0.0:
        return False

    pool = np.concatenate([x, y])
    rng = make_rng(seed)
    draws = pool[rng.integers(0, pool.size, size=(resamples, pool.size))]
    diffs = np.abs(draws[:, :x.size].mean(axis=1) - draws[:, x.size:].mean(axis=1))
    p_value = float(np.mean(diffs >= observed - 1e-12))
    return p_value < 1.0 - confidence


def a12(a: SampleSet, b: SampleSet) -> float:
    """
    Probability that a draw from `a` beats a draw from `b` (ties count half), after
    orienting both samples so that larger is better.
    """
    _check_pair(a, b)
    x, y = a.oriented(), b.oriented()
    ranks = rankdata(np.concatenate([x, y]))
    m, n = x.size, y.size
    return float((ranks[:m].sum() - m * (m + 1) / 2.0) / (m * n))


def verdict(
    a: SampleSet,
    b: SampleSet,
    seed: int = 0,
    resamples: int = 1000,
    confidence: float = 0.95,
    small_effect: float = SMALL,
) -> ComparisonVerdict:
    """A treatment wins only when the bootstrap is significant and its A12 reaches small_effect."""
    _check_pair(a, b)
    significant = bootstrap_test(a, b, resamples, confidence, seed)
    effect = a12(a, b)
    winner = TIE
    if significant and effect >= small_effect:
        winner = a.name
    elif significant and 1.0 - effect >= small_effect:
        winner = b.name
    return ComparisonVerdict(a.name, b.name, significant, effect, winner)


def win_tie_loss(verdicts: Iterable[ComparisonVerdict], focal: str) -> tuple[int, int, int]:
    wins = ties = losses = 0
    for v in verdicts:
        if focal not in (v.a, v.b):
            raise StatsError(f"verdict {v.a} vs {v.b} does not involve '{focal}'")
        if v.is_tie:
            ties += 1
        elif v.winner == focal:
            wins += 1
        else:
            losses += 1
    return wins, ties, losses


def effect_size_category(a12_value: float) -> str:
    magnitude = max(a12_value, 1.0 - a12_value)
    if magnitude < SMALL:
        return "negligible"
    if magnitude < MEDIUM:
        return "small"
    if magnitude < LARGE:
        return "medium"
    return "large"


def success_curve(points: Sequence[tuple[float, bool]]) -> list[tuple[float, float]]:
    """
    For each observed dimension D (ascending), the share of datasets with dimension <= D
    on which the focal optimizer won.
    """
    if not points:
        return []
    dims = np.asarray([p[0] for p in points], dtype=np.float64)
    won = np.asarray([bool(p[1]) for p in points])
    curve = []
    for d in np.unique(dims):
        upto = dims <= d
        curve.append((float(d), float(won[upto].mean())))
    return curve
