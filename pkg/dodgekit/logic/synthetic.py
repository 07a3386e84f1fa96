"""
Synthetic data families used for estimator calibration and optimizer sanity checks.
"""

import numpy as np
from numpy.typing import NDArray
from sklearn.datasets import make_classification

from dodgekit.core.utils import make_rng
from dodgekit.core.validators import check_positive
from dodgekit.logic.dataset_io import Dataset


def uniform_cube(n_rows: int, n_cols: int, seed: int) -> NDArray[np.float64]:
    """Cells drawn uniformly from [0, 1]; intrinsic dimension equals n_cols."""
    check_positive("n_rows", n_rows)
    check_positive("n_cols", n_cols)
    return make_rng(seed).uniform(0.0, 1.0, size=(n_rows, n_cols))


def embedded_segment(n_rows: int, n_cols: int, seed: int) -> NDArray[np.float64]:
    """Points uniform on a 1-D segment: column 0 varies, the others are constant."""
    check_positive("n_rows", n_rows)
    check_positive("n_cols", n_cols)
    rows = np.full((n_rows, n_cols), 0.5)
    rows[:, 0] = make_rng(seed).uniform(0.0, 1.0, size=n_rows)
    return rows


def redundant_classification(
    n_rows: int = 500,
    n_informative: int = 3,
    n_copies: int = 20,
    seed: int = 0,
    weight_positive: float = 0.3,
) -> Dataset:
    """
    Low intrinsic-dimension classification family.

    n_informative columns from make_classification, followed by n_copies columns that are
    noisy linear copies of the informative ones (cycled), so the row cloud stays close to
    an n_informative-dimensional subspace. Carries a LOC-like effort column so popt20 can
    be scored too.
    """
    rng = make_rng(seed)
    informative, labels = make_classification(
        n_samples=n_rows,
        n_features=n_informative,
        n_informative=n_informative,
        n_redundant=0,
        n_repeated=0,
        n_clusters_per_class=1,
        weights=[1.0 - weight_positive, weight_positive],
        flip_y=0.02,
        class_sep=1.0,
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    copies = np.empty((n_rows, n_copies))
    for j in range(n_copies):
        source = informative[:, j % n_informative]
        scale = rng.uniform(0.5, 2.0)
        copies[:, j] = scale * source + rng.normal(0.0, 0.01, size=n_rows)

    features = np.hstack([informative, copies])
    names = tuple(f"x{j}" for j in range(n_informative)) + tuple(
        f"copy{j}" for j in range(n_copies)
    )
    effort = np.round(rng.lognormal(mean=5.0, sigma=1.0, size=n_rows))
    return Dataset(
        features=features,
        target=labels.astype(bool),
        names=names,
        effort=effort,
        name=f"redundant_{n_informative}x{n_copies}",
    )
