"""
Fractal (correlation) intrinsic dimensionality.

C(r) is the fraction of row pairs within L1 distance r. The estimate is the maximum of
the smoothed slopes of ln C(r) against ln r over a log-spaced radius grid.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import pdist

from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import make_rng, to_jsonable
from dodgekit.core.validators import ValidationError
from dodgekit.logic.dataset_io import Dataset

logger = get_logger(__name__)


class IntrinsicDimError(ValidationError):
    """Raised when the estimator cannot run on its input."""
    pass


class Recommendation(str, Enum):
    RECOMMENDED = "recommended"
    INCONCLUSIVE = "inconclusive"
    NOT_RECOMMENDED = "not recommended"

    @property
    def message(self) -> str:
        return {
            Recommendation.RECOMMENDED: "simple optimizer (DODGE) recommended",
            Recommendation.INCONCLUSIVE: "inconclusive",
            Recommendation.NOT_RECOMMENDED: "simple optimizer not recommended",
        }[self]


@dataclass(frozen=True)
class IntrinsicDimReport:
    radii: tuple[float, ...]
    corr_sums: tuple[float, ...]
    used: tuple[bool, ...]
    raw_slopes: tuple[float, ...]
    slopes: tuple[float, ...]
    dimension: float
    n_used: int
    n_rows: int
    degenerate: bool = False
    reliable: bool = True

    def loglog_table(self) -> list[tuple[float, float]]:
        """(ln r, ln C(r)) for every radius that entered the slope sequence."""
        return [
            (float(np.log(r)), float(np.log(c)))
            for r, c, keep in zip(self.radii, self.corr_sums, self.used)
            if keep
        ]

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "dimension": self.dimension,
            "n_used": self.n_used,
            "n_rows": self.n_rows,
            "degenerate": self.degenerate,
            "reliable": self.reliable,
            "radii": list(self.radii),
            "corr_sums": list(self.corr_sums),
            "used": list(self.used),
            "raw_slopes": list(self.raw_slopes),
            "slopes": list(self.slopes),
        })

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "IntrinsicDimReport":
        return cls(
            radii=tuple(data["radii"]),
            corr_sums=tuple(data["corr_sums"]),
            used=tuple(bool(u) for u in data["used"]),
            raw_slopes=tuple(data["raw_slopes"]),
            slopes=tuple(data["slopes"]),
            dimension=float(data["dimension"]),
            n_used=int(data["n_used"]),
            n_rows=int(data["n_rows"]),
            degenerate=bool(data.get("degenerate", False)),
            reliable=bool(data.get("reliable", True)),
        )


def _pair_distances(rows: NDArray[np.float64]) -> NDArray[np.float64]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[0] < 2:
        raise IntrinsicDimError(f"need >= 2 rows, got {rows.shape[0]}")
    return pdist(rows, metric="cityblock")


def correlation_sum(rows: NDArray[np.float64], r: float) -> float:
    """2 / (N (N-1)) times the number of pairs i < j with L1 distance strictly below r."""
    if not r > 0:
        raise IntrinsicDimError(f"radius must be > 0, got {r}")
    dist = _pair_distances(rows)
    return float(np.count_nonzero(dist < r)) / dist.size


def correlation_sums(distances: NDArray[np.float64], radii: NDArray[np.float64]) -> NDArray[np.float64]:
    """C(r) for every radius, from a precomputed condensed distance vector."""
    ordered = np.sort(distances)
    return np.searchsorted(ordered, radii, side="left") / ordered.size


def minmax_normalize(rows: NDArray[np.float64]) -> NDArray[np.float64]:
    """Scale each column to [0, 1]; constant columns become 0."""
    rows = np.asarray(rows, dtype=np.float64)
    lo = rows.min(axis=0)
    span = rows.max(axis=0) - lo
    return np.where(span > 0, (rows - lo) / np.where(span > 0, span, 1.0), 0.0)


def moving_average(values: NDArray[np.float64], window: int) -> NDArray[np.float64]:
    """Centered moving average; sequences shorter than the window collapse to their mean."""
    if values.size == 0:
        return values
    if window <= 1:
        return values.copy()
    if values.size < window:
        return np.array([values.mean()])
    return np.convolve(values, np.ones(window) / window, mode="valid")


def intrinsic_dimension(
    data: Dataset | NDArray[np.float64],
    steps: int = 20,
    subsample_cap: int = 1000,
    smoothing_window: int = 3,
    seed: int = 0,
    min_pairs: int = 100,
    reliability_limit: float = 20.0,
) -> IntrinsicDimReport:
    """
    Estimate the correlation dimension of a dataset's feature rows.

    Args:
        data: Dataset or feature matrix
        steps: Number of log-spaced radii between the smallest nonzero and the largest
            pairwise L1 distance
        subsample_cap: Rows measured at most (sampled without replacement)
        smoothing_window: Centered moving-average window over the slope sequence
        seed: Subsampling seed
        min_pairs: Radii counting fewer than min(min_pairs, 0.1% of all pairs) pairs are
            left out of the slope sequence
        reliability_limit: Estimates above it are flagged unreliable

    Returns:
        IntrinsicDimReport; all-identical rows give dimension 0 with `degenerate` set

    Raises:
        IntrinsicDimError: fewer than 2 rows, bad step or window counts
    """
    if steps < 2:
        raise IntrinsicDimError(f"steps must be >= 2, got {steps}")
    if subsample_cap < 2:
        raise IntrinsicDimError(f"subsample_cap must be >= 2, got {subsample_cap}")
    if smoothing_window < 1 or min_pairs < 1:
        raise IntrinsicDimError("smoothing_window and min_pairs must be >= 1")

    rows = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    n_rows = rows.shape[0]
    if n_rows < 2:
        raise IntrinsicDimError(f"need >= 2 rows, got {n_rows}")
    if n_rows > subsample_cap:
        keep = np.sort(make_rng(seed).choice(n_rows, size=subsample_cap, replace=False))
        rows = rows[keep]

    dist = _pair_distances(minmax_normalize(rows))
    n_used = rows.shape[0]
    nonzero = dist[dist > 0]
    if nonzero.size == 0:
        logger.warning("All rows coincide; intrinsic dimension is 0", extra={"n_used": n_used})
        return IntrinsicDimReport((), (), (), (), (), 0.0, n_used, n_rows, degenerate=True)

    radii = np.geomspace(nonzero.min(), dist.max(), steps)
    sums = correlation_sums(dist, radii)
    pair_floor = min(min_pairs, max(1, dist.size // 1000))
    used = np.rint(sums * dist.size) >= pair_floor
    log_r = np.log(radii[used])
    log_c = np.log(sums[used])
    raw = np.diff(log_c) / np.diff(log_r) if log_r.size >= 2 else np.empty(0)
    smoothed = moving_average(raw, smoothing_window)

    degenerate = smoothed.size == 0
    dimension = max(float(smoothed.max()), 0.0) if smoothed.size else 0.0
    reliable = dimension <= reliability_limit
    if degenerate:
        logger.warning("Too few populated radii for a slope", extra={"n_used": n_used})
    if not reliable:
        logger.warning(
            "Intrinsic dimension above reliability limit; estimator underestimates here",
            extra={"dimension": dimension, "limit": reliability_limit},
        )
    logger.debug(
        "Intrinsic dimension estimated",
        extra={"dimension": dimension, "n_used": n_used, "radii_used": int(used.sum())},
    )
    return IntrinsicDimReport(
        radii=tuple(float(r) for r in radii),
        corr_sums=tuple(float(c) for c in sums),
        used=tuple(bool(u) for u in used),
        raw_slopes=tuple(float(s) for s in raw),
        slopes=tuple(float(s) for s in smoothed),
        dimension=dimension,
        n_used=n_used,
        n_rows=n_rows,
        degenerate=degenerate,
        reliable=reliable,
    )


def mean_dimension_by_group(dimensions: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Mean estimate per group, e.g. SE versus non-SE datasets."""
    out = {}
    for group, values in dimensions.items():
        if len(values) == 0:
            raise IntrinsicDimError(f"group '{group}' has no estimates")
        out[group] = float(np.mean(values))
    return out


def recommend(
    dimension: float,
    max_recommended: float = 4.0,
    min_not_recommended: float = 8.0,
) -> Recommendation:
    if dimension <= max_recommended:
        return Recommendation.RECOMMENDED
    if dimension > min_not_recommended:
        return Recommendation.NOT_RECOMMENDED
    return Recommendation.INCONCLUSIVE
