import logging
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from dodgekit.logic.dataset_io import Dataset, write_csv
from dodgekit.logic.option_space import (
    CategoricalParam,
    NodeRole,
    NumericParam,
    OptionNode,
    OptionTree,
)
from dodgekit.logic.synthetic import redundant_classification


@pytest.fixture(autouse=True)
def restore_root_handlers():
    """main() reconfigures the root logger; put the previous handlers back afterwards."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers = handlers
    root.setLevel(level)


@pytest.fixture
def write_text(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write raw CSV text under tmp_path and return its path."""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def separable_data() -> Dataset:
    """60 rows split cleanly on column 0 at 0.5; column 1 is noise."""
    rng = np.random.default_rng(3)
    x0 = np.concatenate([rng.uniform(0.0, 0.4, 30), rng.uniform(0.6, 1.0, 30)])
    x1 = rng.uniform(0.0, 1.0, 60)
    target = np.concatenate([np.zeros(30, dtype=bool), np.ones(30, dtype=bool)])
    effort = rng.integers(10, 500, 60).astype(float)
    return Dataset(
        features=np.column_stack([x0, x1]),
        target=target,
        names=("x0", "x1"),
        effort=effort,
        name="separable",
    )


@pytest.fixture
def small_defects() -> Dataset:
    """120-row low intrinsic-dimension classification set with a LOC column."""
    return redundant_classification(n_rows=120, n_informative=2, n_copies=4, seed=11)


@pytest.fixture
def versioned_data() -> Dataset:
    """poi-like layout: four releases, both classes in each."""
    rng = np.random.default_rng(5)
    versions = ("1.5",) * 20 + ("2.0",) * 20 + ("2.5",) * 20 + ("3.0",) * 20
    target = np.tile(np.array([True] * 6 + [False] * 14), 4)
    features = rng.normal(size=(80, 3)) + target[:, None] * 1.5
    return Dataset(
        features=features,
        target=target,
        names=("a", "b", "c"),
        effort=rng.integers(5, 300, 80).astype(float),
        version=versions,
        name="poi",
    )


@pytest.fixture
def csv_of(tmp_path: Path) -> Callable[[Dataset], Path]:
    """Persist a Dataset with write_csv defaults (target/yes/no, loc, version)."""

    def _csv(data: Dataset) -> Path:
        return write_csv(data, tmp_path / f"{data.name}.csv")

    return _csv


@pytest.fixture
def one_by_one_tree() -> OptionTree:
    """One preprocessor and one learner: every sample lands on the same branch."""
    pre = OptionNode("scale", NodeRole.PREPROCESSOR, "minmax_scaler", [])
    learner = OptionNode(
        "nb", NodeRole.LEARNER, "multinomial_nb",
        [NumericParam("alpha", 0.0, 0.1)],
    )
    return OptionTree([pre], [learner])


@pytest.fixture
def two_branch_tree() -> OptionTree:
    pre = OptionNode("scale", NodeRole.PREPROCESSOR, "standard_scaler", [])
    knn = OptionNode(
        "knn", NodeRole.LEARNER, "knn",
        [NumericParam("n_neighbors", 2, 25, integer=True),
         CategoricalParam("weights", ["uniform", "distance"])],
    )
    tree = OptionNode(
        "tree", NodeRole.LEARNER, "decision_tree",
        [CategoricalParam("criterion", ["gini", "entropy"]),
         NumericParam("min_samples_split", 0.0, 1.0)],
    )
    return OptionTree([pre], [knn, tree])
