"""
Tabular pre-processors: fit on the training partition, apply to both partitions.

Scalers, the quantile transform, the normalizer and the binarizer wrap scikit-learn
transformers. SMOTE is implemented here, since it needs a Minkowski exponent below 1
and alters the training rows only.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist
from sklearn.base import TransformerMixin
from sklearn.preprocessing import (
    Binarizer,
    MaxAbsScaler,
    MinMaxScaler,
    Normalizer,
    QuantileTransformer,
    RobustScaler,
    StandardScaler,
)

from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import make_rng
from dodgekit.core.validators import ValidationError, check_non_empty
from dodgekit.logic.dataset_io import Dataset
from dodgekit.logic.params import ParamDef, resolve_params

logger = get_logger(__name__)


class PreprocessError(ValidationError):
    """Raised for invalid pre-processor specs or inputs."""
    pass


class PreprocKind(str, Enum):
    STANDARD_SCALER = "standard_scaler"
    MINMAX_SCALER = "minmax_scaler"
    MAXABS_SCALER = "maxabs_scaler"
    ROBUST_SCALER = "robust_scaler"
    KERNEL_CENTERER = "kernel_centerer"
    QUANTILE_TRANSFORM = "quantile_transform"
    NORMALIZER = "normalizer"
    BINARIZER = "binarizer"
    SMOTE = "smote"
    NONE = "none"


PREPROC_PARAMS: dict[PreprocKind, tuple[ParamDef, ...]] = {
    PreprocKind.STANDARD_SCALER: (),
    PreprocKind.MINMAX_SCALER: (),
    PreprocKind.MAXABS_SCALER: (),
    PreprocKind.KERNEL_CENTERER: (),
    PreprocKind.NONE: (),
    PreprocKind.ROBUST_SCALER: (
        ParamDef("quantile_low", "int", 25, lo=0, hi=50),
        ParamDef("quantile_high", "int", 75, lo=51, hi=100),
    ),
    PreprocKind.QUANTILE_TRANSFORM: (
        ParamDef("n_quantiles", "int", 1000, lo=100, hi=1000),
        ParamDef("subsample", "int", 100000, lo=1000, hi=100000),
        ParamDef("output_distribution", "choice", "uniform", choices=("normal", "uniform")),
    ),
    PreprocKind.NORMALIZER: (
        ParamDef("norm", "choice", "l2", choices=("l1", "l2", "max")),
    ),
    PreprocKind.BINARIZER: (
        ParamDef("threshold", "real", 0.0, lo=0.0, hi=100.0),
    ),
    PreprocKind.SMOTE: (
        ParamDef("n_neighbors", "int", 5, lo=1, hi=20),
        ParamDef("n_synthetics", "choice", 100, choices=(50, 100, 200, 400)),
        ParamDef("minkowski_exponent", "real", 2.0, lo=0.1, hi=5.0),
    ),
}


def parse_preproc_kind(kind: str | PreprocKind) -> PreprocKind:
    try:
        return PreprocKind(kind)
    except ValueError:
        raise PreprocessError(
            f"unknown pre-processor '{kind}'; expected one of {[k.value for k in PreprocKind]}"
        )


@dataclass(frozen=True)
class PreprocSpec:
    """A pre-processor kind with validated parameters (defaults filled in)."""

    kind: PreprocKind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        kind = parse_preproc_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(
            self,
            "params",
            resolve_params(kind.value, PREPROC_PARAMS[kind], self.params, PreprocessError),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PreprocSpec":
        return cls(kind=data["kind"], params=dict(data.get("params", {})))


def _build_transformer(spec: PreprocSpec, n_train: int, seed: int) -> TransformerMixin:
    p = spec.params
    match spec.kind:
        case PreprocKind.STANDARD_SCALER:
            return StandardScaler()
        case PreprocKind.MINMAX_SCALER:
            return MinMaxScaler()
        case PreprocKind.MAXABS_SCALER:
            return MaxAbsScaler()
        case PreprocKind.ROBUST_SCALER:
            return RobustScaler(quantile_range=(float(p["quantile_low"]), float(p["quantile_high"])))
        case PreprocKind.KERNEL_CENTERER:
            # per-column mean-centering stands in for kernel-matrix centering
            return StandardScaler(with_std=False)
        case PreprocKind.QUANTILE_TRANSFORM:
            return QuantileTransformer(
                n_quantiles=min(p["n_quantiles"], n_train),
                subsample=p["subsample"],
                output_distribution=p["output_distribution"],
                random_state=seed % (2**32),
            )
        case PreprocKind.NORMALIZER:
            return Normalizer(norm=p["norm"])
        case PreprocKind.BINARIZER:
            return Binarizer(threshold=p["threshold"])
    raise PreprocessError(f"no transformer for '{spec.kind.value}'")


def fit_transform(
    spec: PreprocSpec,
    train: Dataset,
    test: Dataset,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """
    Fit `spec` on the training rows and apply it to both partitions.

    SMOTE returns an oversampled training set and leaves the test set untouched.

    Raises:
        PreprocessError: empty training set, column mismatch, SMOTE minority too small
    """
    check_non_empty("training set", train.target, PreprocessError)
    if train.n_cols != test.n_cols:
        raise PreprocessError(f"train has {train.n_cols} columns, test has {test.n_cols}")

    if spec.kind is PreprocKind.NONE:
        return train, test
    if spec.kind is PreprocKind.SMOTE:
        oversampled = smote_oversample(
            train,
            n_neighbors=spec.params["n_neighbors"],
            n_synthetics=spec.params["n_synthetics"],
            minkowski_exponent=spec.params["minkowski_exponent"],
            seed=seed,
        )
        return oversampled, test

    transformer = _build_transformer(spec, train.n_rows, seed)
    fitted_train = transformer.fit_transform(train.features)
    fitted_test = transformer.transform(test.features) if test.n_rows else test.features
    return train.with_features(fitted_train), test.with_features(fitted_test)


def _minkowski_neighbors(rows: NDArray[np.float64], k: int, p: float) -> NDArray[np.int64]:
    """
    k nearest other rows of every row under the Minkowski-p distance.

    p may be below 1. Ties keep the lower row index.
    """
    dist = cdist(rows, rows, "minkowski", p=p)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k].astype(np.int64)


def smote_oversample(
    train: Dataset,
    n_neighbors: int,
    n_synthetics: int,
    minkowski_exponent: float,
    seed: int,
) -> Dataset:
    """
    Append exactly n_synthetics synthetic minority rows.

    Each synthetic row is base + t * (neighbor - base) with t ~ U(0, 1), where neighbor
    is one of the base row's n_neighbors nearest minority rows. The minority class is the
    less frequent label (positive on a tie). Synthetic rows get row_id -1, the base row's
    version tag, and effort interpolated with the same t.

    Raises:
        PreprocessError: fewer than 2 minority rows, n_neighbors < 1, negative count
    """
    if n_neighbors < 1:
        raise PreprocessError(f"n_neighbors must be >= 1, got {n_neighbors}")
    if n_synthetics < 0:
        raise PreprocessError(f"n_synthetics must be >= 0, got {n_synthetics}")
    if minkowski_exponent <= 0:
        raise PreprocessError(f"minkowski_exponent must be > 0, got {minkowski_exponent}")

    n_pos = train.n_positive
    minority_label = n_pos <= train.n_rows - n_pos
    minority = np.flatnonzero(train.target == minority_label)
    if minority.size < 2:
        raise PreprocessError(
            f"SMOTE needs ≥ 2 minority instances, found {minority.size}"
        )
    if n_synthetics == 0:
        return train

    k = min(n_neighbors, minority.size - 1)
    rows = train.features[minority]
    neighbors = _minkowski_neighbors(rows, k, minkowski_exponent)

    rng = make_rng(seed)
    base = rng.integers(0, minority.size, size=n_synthetics)
    partner = neighbors[base, rng.integers(0, k, size=n_synthetics)]
    t = rng.uniform(0.0, 1.0, size=n_synthetics)
    synthetic = rows[base] + t[:, None] * (rows[partner] - rows[base])

    effort = None
    if train.effort is not None:
        minority_effort = train.effort[minority]
        synth_effort = minority_effort[base] + t * (minority_effort[partner] - minority_effort[base])
        effort = np.concatenate([train.effort, synth_effort])
    version = None
    if train.version is not None:
        version = train.version + tuple(train.version[minority[b]] for b in base)

    logger.debug(
        "SMOTE oversampled",
        extra={"minority": int(minority.size), "k": k, "synthetics": n_synthetics},
    )
    return Dataset(
        features=np.vstack([train.features, synthetic]),
        target=np.concatenate([train.target, np.full(n_synthetics, minority_label)]),
        names=train.names,
        effort=effort,
        version=version,
        row_ids=np.concatenate([train.row_ids, np.full(n_synthetics, -1)]),
        name=train.name,
    )
