"""
Tabular dataset loading and partitioning.

This module provides:
- CSV load/write for binary-target datasets with optional effort (LOC) and version columns
- The UCI two-class reduction (most frequent vs rarest class)
- Temporal (latest version held out) and stratified random partitions
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from dodgekit.core.logging_config import get_logger
from dodgekit.core.validators import ValidationError

logger = get_logger(__name__)


class DatasetError(ValidationError):
    """Raised when a dataset cannot be loaded or partitioned."""
    pass


def _frozen(array: NDArray) -> NDArray:
    out = np.array(array, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix + binary target, with optional effort and version tags."""

    features: NDArray[np.float64]
    target: NDArray[np.bool_]
    names: tuple[str, ...]
    effort: Optional[NDArray[np.float64]] = None
    version: Optional[tuple[str, ...]] = None
    row_ids: Optional[NDArray[np.int64]] = None
    name: str = "dataset"

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {features.shape}")
        n_rows, n_cols = features.shape
        if len(self.names) != n_cols:
            raise DatasetError(f"{len(self.names)} names for {n_cols} columns")
        target = np.asarray(self.target, dtype=bool)
        if target.shape != (n_rows,):
            raise DatasetError(f"target has {target.shape[0]} rows, features have {n_rows}")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "target", _frozen(target))
        object.__setattr__(self, "names", tuple(self.names))

        if self.effort is not None:
            effort = np.asarray(self.effort, dtype=np.float64)
            if effort.shape != (n_rows,):
                raise DatasetError("effort column length differs from row count")
            if np.any(effort < 0) or not np.all(np.isfinite(effort)):
                raise DatasetError("effort must be finite and >= 0 for every row")
            object.__setattr__(self, "effort", _frozen(effort))

        if self.version is not None:
            if len(self.version) != n_rows:
                raise DatasetError("version column length differs from row count")
            object.__setattr__(self, "version", tuple(str(v) for v in self.version))

        row_ids = np.arange(n_rows) if self.row_ids is None else self.row_ids
        row_ids = np.asarray(row_ids, dtype=np.int64)
        if row_ids.shape != (n_rows,):
            raise DatasetError("row_ids length differs from row count")
        object.__setattr__(self, "row_ids", _frozen(row_ids))

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_positive(self) -> int:
        return int(self.target.sum())

    @property
    def has_effort(self) -> bool:
        return self.effort is not None

    def has_both_classes(self) -> bool:
        return 0 < self.n_positive < self.n_rows

    def require_both_classes(self) -> None:
        if not self.has_both_classes():
            raise DatasetError(f"single-class target in dataset '{self.name}'")

    def subset(self, indices: NDArray[np.int64] | list[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            target=self.target[idx],
            names=self.names,
            effort=None if self.effort is None else self.effort[idx],
            version=None if self.version is None else tuple(self.version[i] for i in idx),
            row_ids=self.row_ids[idx],
            name=self.name,
        )

    def with_features(self, features: NDArray[np.float64]) -> "Dataset":
        """Same rows and labels, transformed feature values."""
        return Dataset(
            features=features,
            target=self.target,
            names=self.names,
            effort=self.effort,
            version=self.version,
            row_ids=self.row_ids,
            name=self.name,
        )


@dataclass(frozen=True)
class MulticlassTable:
    """Feature matrix with a categorical label, before the two-class reduction."""

    features: NDArray[np.float64]
    labels: tuple[str, ...]
    names: tuple[str, ...]
    class_counts: dict[str, int] = field(default_factory=dict)
    name: str = "table"

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != len(self.labels):
            raise DatasetError("labels and feature rows differ in length")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
        counts = dict(Counter(self.labels))
        if self.class_counts and self.class_counts != counts:
            raise DatasetError("class_counts do not match the labels")
        object.__setattr__(self, "class_counts", counts)


def _read_raw(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetError(f"cannot parse {path}: {e}")
    if frame.shape[1] == 0:
        raise DatasetError(f"{path} has no header row")
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame


def _check_missing(frame: pd.DataFrame) -> None:
    blank = frame.apply(lambda col: col.str.strip() == "")
    if blank.to_numpy().any():
        rows, cols = np.nonzero(blank.to_numpy())
        # rows are 1-based data rows, columns by header name
        raise DatasetError(f"missing value at row {rows[0] + 1}, column {frame.columns[cols[0]]}")


def _numeric_matrix(frame: pd.DataFrame, columns: list[str]) -> NDArray[np.float64]:
    matrix = np.empty((len(frame), len(columns)), dtype=np.float64)
    for j, column in enumerate(columns):
        cells = frame[column].str.strip()
        bad = pd.to_numeric(cells, errors="coerce").isna().to_numpy()
        if bad.any():
            row = int(np.argmax(bad))
            raise DatasetError(
                f"non-numeric value {frame[column].iloc[row]!r} at row {row + 1}, column {column}"
            )
        # object -> float64 goes through float(), exact to the last digit written
        matrix[:, j] = cells.to_numpy(dtype=object).astype(np.float64)
    if not np.all(np.isfinite(matrix)):
        raise DatasetError("features contain non-finite values")
    return matrix


def _require_column(frame: pd.DataFrame, column: Optional[str], role: str) -> None:
    if column is not None and column not in frame.columns:
        raise DatasetError(f"{role} column '{column}' not in header {list(frame.columns)}")


def load_csv(
    path: str | Path,
    target_column: str,
    positive_label: str,
    effort_column: Optional[str] = None,
    version_column: Optional[str] = None,
    name: Optional[str] = None,
) -> Dataset:
    """
    Load a binary-target dataset from a UTF-8 CSV with a header row.

    Every column other than target/effort/version is a numeric feature; column and row
    order are preserved. The target is True where the cell equals positive_label. The
    dataset is named after the file stem unless name is given.

    Raises:
        DatasetError: missing file or column, non-numeric feature, missing value,
            single-class target
    """
    frame = _read_raw(path)
    _require_column(frame, target_column, "target")
    _require_column(frame, effort_column, "effort")
    _require_column(frame, version_column, "version")
    _check_missing(frame)

    reserved = {target_column, effort_column, version_column}
    feature_columns = [c for c in frame.columns if c not in reserved]
    if not feature_columns:
        raise DatasetError("no feature columns")

    features = _numeric_matrix(frame, feature_columns)
    target = (frame[target_column].str.strip() == positive_label).to_numpy()
    effort = _numeric_matrix(frame, [effort_column])[:, 0] if effort_column else None
    version = tuple(frame[version_column].str.strip()) if version_column else None

    data = Dataset(
        features=features,
        target=target,
        names=tuple(feature_columns),
        effort=effort,
        version=version,
        name=name or Path(path).stem,
    )
    data.require_both_classes()
    logger.info(
        "Dataset loaded",
        extra={"dataset": data.name, "rows": data.n_rows, "cols": data.n_cols,
               "positives": data.n_positive},
    )
    return data


def write_csv(
    data: Dataset,
    path: str | Path,
    target_column: str = "target",
    positive_label: str = "yes",
    negative_label: str = "no",
    effort_column: str = "loc",
    version_column: str = "version",
) -> Path:
    """Write a Dataset so that load_csv with the same column names reads it back."""
    frame = pd.DataFrame(data.features, columns=list(data.names))
    if data.effort is not None:
        frame[effort_column] = data.effort
    if data.version is not None:
        frame[version_column] = list(data.version)
    frame[target_column] = np.where(data.target, positive_label, negative_label)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", float_format="%.17g")
    return path


def load_multiclass_csv(path: str | Path, label_column: str) -> MulticlassTable:
    frame = _read_raw(path)
    _require_column(frame, label_column, "label")
    _check_missing(frame)
    feature_columns = [c for c in frame.columns if c != label_column]
    return MulticlassTable(
        features=_numeric_matrix(frame, feature_columns),
        labels=tuple(frame[label_column].str.strip()),
        names=tuple(feature_columns),
        name=Path(path).stem,
    )


def reduce_to_binary(table: MulticlassTable) -> Dataset:
    """
    Keep the rows of the most frequent and the rarest label; the rarest is positive.

    Frequency ties are broken by the lexicographically smallest label, for both the
    most-frequent and the rarest pick. With exactly two equally frequent labels the
    smallest label is therefore both candidates; the other label is then the majority.
    """
    counts = table.class_counts
    if len(counts) < 2:
        raise DatasetError(f"need >= 2 classes, got {sorted(counts)}")

    labels = sorted(counts)
    rarest = min(labels, key=lambda lab: (counts[lab], lab))
    others = [lab for lab in labels if lab != rarest]
    most_frequent = min(others, key=lambda lab: (-counts[lab], lab))

    label_array = np.asarray(table.labels)
    keep = np.flatnonzero((label_array == rarest) | (label_array == most_frequent))
    logger.info(
        "Reduced multiclass table",
        extra={"table": table.name, "majority": most_frequent, "positive": rarest,
               "rows_kept": int(keep.size)},
    )
    return Dataset(
        features=table.features[keep],
        target=label_array[keep] == rarest,
        names=table.names,
        name=table.name,
    )


def version_key(tag: str) -> tuple:
    """Natural order of release tags: signed dotted integers, then other numbers, then text."""
    negative = tag.startswith("-")
    body = tag[1:] if tag.startswith(("-", "+")) else tag
    parts = body.split(".")
    if body and all(p.isdigit() for p in parts):
        ints = tuple(int(p) for p in parts)
        if negative:
            # among negatives a longer tag is the smaller number: -1.5 < -1
            return (0, -1, tuple(-i for i in ints) + (math.inf,))
        return (0, 1, ints)
    try:
        return (1, float(tag))
    except ValueError:
        return (2, tag)


def temporal_split(data: Dataset) -> tuple[Dataset, Dataset]:
    """Train on every earlier version, test on the latest one."""
    if data.version is None:
        raise DatasetError(f"dataset '{data.name}' has no version column")
    distinct = sorted(set(data.version), key=version_key)
    if len(distinct) < 2:
        raise DatasetError(f"temporal split needs >= 2 versions, got {distinct}")

    latest = distinct[-1]
    is_test = np.array([v == latest for v in data.version])
    train, test = data.subset(np.flatnonzero(~is_test)), data.subset(np.flatnonzero(is_test))
    logger.debug(
        "Temporal split",
        extra={"dataset": data.name, "test_version": latest, "train_rows": train.n_rows,
               "test_rows": test.n_rows},
    )
    return train, test


def stratified_split(
    data: Dataset,
    fraction: float,
    rng: np.random.Generator,
) -> tuple[Dataset, Dataset]:
    """
    Class-stratified random partition; `fraction` of each class goes to the first part.

    Per class, round(fraction * count) rows go first, clamped so both parts keep at
    least one row of that class.
    """
    first: list[int] = []
    second: list[int] = []
    for label in (True, False):
        members = np.flatnonzero(data.target == label)
        if members.size < 2:
            raise DatasetError(
                f"cannot stratify '{data.name}': only {members.size} "
                f"{'positive' if label else 'negative'} row(s)"
            )
        n_first = min(max(int(math.floor(fraction * members.size + 0.5)), 1), members.size - 1)
        shuffled = rng.permutation(members)
        first.extend(shuffled[:n_first].tolist())
        second.extend(shuffled[n_first:].tolist())
    return data.subset(sorted(first)), data.subset(sorted(second))
