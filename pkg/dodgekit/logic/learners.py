"""
From-scratch binary classifiers: CART decision tree, random forest, logistic regression,
multinomial naive Bayes and k-nearest neighbours.

Every estimator follows a small fit(X, y) / predict(X) protocol on numpy arrays.
Prediction ties (equal votes, equal posteriors, z == 0) resolve to the negative class.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Protocol

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import make_rng
from dodgekit.core.validators import ValidationError, check_non_empty
from dodgekit.logic.dataset_io import Dataset
from dodgekit.logic.params import ParamDef, resolve_params

logger = get_logger(__name__)

LOGISTIC_MAX_EPOCHS = 1000
NB_MIN_ALPHA = 1e-10
KNN_CHUNK_ROWS = 1024


class LearnerError(ValidationError):
    """Raised for invalid learner specs, inputs or prediction requests."""
    pass


class LearnerKind(str, Enum):
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    LOGISTIC_REGRESSION = "logistic_regression"
    MULTINOMIAL_NB = "multinomial_nb"
    KNN = "knn"


_CRITERION = ParamDef("criterion", "choice", "gini", choices=("gini", "entropy"))

LEARNER_PARAMS: dict[LearnerKind, tuple[ParamDef, ...]] = {
    LearnerKind.DECISION_TREE: (
        _CRITERION,
        ParamDef("splitter", "choice", "best", choices=("best", "random")),
        ParamDef("min_samples_split", "real", 0.0, lo=0.0, hi=1.0),
    ),
    LearnerKind.RANDOM_FOREST: (
        ParamDef("n_estimators", "int", 100, lo=50, hi=150, valid_lo=1, valid_hi=1000),
        _CRITERION,
        ParamDef("min_samples_split", "real", 0.0, lo=0.0, hi=1.0),
        ParamDef("bootstrap", "choice", True, choices=(True, False), tunable=False),
        ParamDef("max_features", "choice", "sqrt", choices=("sqrt", "all"), tunable=False),
    ),
    LearnerKind.LOGISTIC_REGRESSION: (
        ParamDef("penalty", "choice", "l2", choices=("l1", "l2")),
        ParamDef("tol", "real", 1e-4, lo=0.0, hi=0.1),
        ParamDef("C", "int", 1, lo=1, hi=500),
    ),
    LearnerKind.MULTINOMIAL_NB: (
        ParamDef("alpha", "real", 0.01, lo=0.0, hi=0.1),
    ),
    LearnerKind.KNN: (
        ParamDef("n_neighbors", "int", 5, lo=2, hi=25, valid_lo=1, valid_hi=1000),
        ParamDef("weights", "choice", "uniform", choices=("uniform", "distance")),
        ParamDef("metric", "choice", "minkowski", choices=("minkowski", "chebyshev")),
        ParamDef("p", "int", 2, lo=1, hi=15, active_when=("metric", "minkowski")),
    ),
}


def parse_learner_kind(kind: str | LearnerKind) -> LearnerKind:
    try:
        return LearnerKind(kind)
    except ValueError:
        raise LearnerError(
            f"unknown learner '{kind}'; expected one of {[k.value for k in LearnerKind]}"
        )


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        kind = parse_learner_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(
            self,
            "params",
            resolve_params(kind.value, LEARNER_PARAMS[kind], self.params, LearnerError),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LearnerSpec":
        return cls(kind=data["kind"], params=dict(data.get("params", {})))


class Estimator(Protocol):
    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "Estimator": ...

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]: ...


def resolve_min_samples_split(fraction: float, n_train: int) -> int:
    """Fraction of the training rows a node needs before it may split (at least 2)."""
    return max(2, math.ceil(fraction * n_train))


def _impurity(p: NDArray[np.float64], criterion: str) -> NDArray[np.float64]:
    if criterion == "gini":
        return 2.0 * p * (1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return np.nan_to_num(terms, nan=0.0)


class DecisionTree:
    """
    CART tree on a binary target, stored as flat node arrays.

    Splits are `x[f] <= threshold` to the left. The best splitter scans midpoints between
    distinct sorted values; the random splitter draws one uniform threshold per feature.
    A leaf predicts positive iff more than half of its rows are positive.
    """

    def __init__(
        self,
        criterion: str = "gini",
        splitter: str = "best",
        min_samples_split: float = 0.0,
        max_features: str = "all",
        seed: int | np.random.Generator = 0,
    ):
        self.criterion = criterion
        self.splitter = splitter
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self._rng = make_rng(seed)
        self.min_split_rows = 2
        self.feature = np.empty(0, dtype=np.int64)
        self.threshold = np.empty(0)
        self.left = np.empty(0, dtype=np.int64)
        self.right = np.empty(0, dtype=np.int64)
        self.label = np.empty(0, dtype=bool)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature >= 0))

    def _candidate_features(self, n_features: int) -> NDArray[np.int64]:
        if self.max_features == "sqrt":
            size = max(1, int(math.floor(math.sqrt(n_features))))
            return np.sort(self._rng.choice(n_features, size=size, replace=False))
        return np.arange(n_features)

    def _best_threshold(self, x: NDArray, y: NDArray) -> tuple[float, float]:
        """Lowest weighted child impurity over all midpoints, (inf, nan) when x is constant."""
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], y[order]
        n = xs.size
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            return math.inf, math.nan
        pos_left = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        n_right = n - n_left
        pos_right = ys.sum() - pos_left
        score = (
            n_left * _impurity(pos_left / n_left, self.criterion)
            + n_right * _impurity(pos_right / n_right, self.criterion)
        ) / n
        score = np.where(valid, score, np.inf)
        i = int(np.argmin(score))
        threshold = xs[i] + (xs[i + 1] - xs[i]) / 2.0
        if threshold >= xs[i + 1]:
            threshold = xs[i]
        return float(score[i]), float(threshold)

    def _random_threshold(self, x: NDArray, y: NDArray) -> tuple[float, float]:
        lo, hi = float(x.min()), float(x.max())
        if lo == hi:
            return math.inf, math.nan
        threshold = float(self._rng.uniform(lo, hi))
        go_left = x <= threshold
        n, n_left = x.size, int(go_left.sum())
        if n_left in (0, n):
            return math.inf, math.nan
        p_left = np.array([y[go_left].mean()])
        p_right = np.array([y[~go_left].mean()])
        score = (
            n_left * _impurity(p_left, self.criterion)[0]
            + (n - n_left) * _impurity(p_right, self.criterion)[0]
        ) / n
        return float(score), threshold

    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "DecisionTree":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=bool)
        self.min_split_rows = resolve_min_samples_split(self.min_samples_split, X.shape[0])
        split_fn = self._best_threshold if self.splitter == "best" else self._random_threshold

        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        label: list[bool] = []

        def new_node(rows: NDArray[np.int64]) -> int:
            feature.append(-1)
            threshold.append(math.nan)
            left.append(-1)
            right.append(-1)
            label.append(bool(y[rows].mean() > 0.5) if rows.size else False)
            return len(feature) - 1

        stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            n_pos = int(y[rows].sum())
            if rows.size < self.min_split_rows or n_pos in (0, rows.size):
                continue

            best_score, best_feature, best_threshold = math.inf, -1, math.nan
            for f in self._candidate_features(X.shape[1]):
                score, thr = split_fn(X[rows, f], y[rows])
                if score < best_score:
                    best_score, best_feature, best_threshold = score, int(f), thr
            if best_feature < 0:
                continue

            go_left = X[rows, best_feature] <= best_threshold
            left_rows, right_rows = rows[go_left], rows[~go_left]
            feature[node] = best_feature
            threshold[node] = best_threshold
            left[node] = new_node(left_rows)
            right[node] = new_node(right_rows)
            stack.append((right[node], right_rows))
            stack.append((left[node], left_rows))

        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.label = np.asarray(label, dtype=bool)
        return self

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            at = node[idx]
            goes_left = X[idx, self.feature[at]] <= self.threshold[at]
            node[idx] = np.where(goes_left, self.left[at], self.right[at])
            active = self.feature[node] >= 0
        return self.label[node].copy()


class RandomForest:
    """Majority vote over CART trees; a split vote predicts negative."""

    def __init__(
        self,
        n_estimators: int = 100,
        criterion: str = "gini",
        min_samples_split: float = 0.0,
        bootstrap: bool = True,
        max_features: str = "sqrt",
        seed: int = 0,
    ):
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.min_samples_split = min_samples_split
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.seed = seed
        self.trees: list[DecisionTree] = []

    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "RandomForest":
        n = X.shape[0]
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_estimators):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(
                criterion=self.criterion,
                splitter="best",
                min_samples_split=self.min_samples_split,
                max_features=self.max_features,
                seed=rng,
            )
            self.trees.append(tree.fit(X[rows], y[rows]))
        return self

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]:
        votes = np.zeros(np.asarray(X).shape[0], dtype=np.int64)
        for tree in self.trees:
            votes += tree.predict(X)
        return votes * 2 > len(self.trees)


class LogisticRegression:
    """
    Batch gradient descent on standardized inputs, zero initialisation.

    Minimizes mean log-loss + penalty / (C * n); l1 uses the sign subgradient. Step size is
    the inverse Lipschitz constant of the smooth part. Stops when the loss changes by less
    than `tol` or after LOGISTIC_MAX_EPOCHS epochs.
    """

    def __init__(self, penalty: str = "l2", tol: float = 1e-4, C: float = 1.0,
                 max_epochs: int = LOGISTIC_MAX_EPOCHS):
        self.penalty = penalty
        self.tol = tol
        self.C = float(C)
        self.max_epochs = max_epochs
        self.mean_ = np.empty(0)
        self.scale_ = np.empty(0)
        self.coef_ = np.empty(0)
        self.intercept_ = 0.0
        self.epochs_ = 0

    def _penalty(self, w: NDArray) -> float:
        return float(np.abs(w).sum()) if self.penalty == "l1" else 0.5 * float(w @ w)

    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        Z = (X - self.mean_) / self.scale_
        s = np.where(np.asarray(y, dtype=bool), 1.0, -1.0)
        reg = 1.0 / (self.C * n)

        design = np.hstack([Z, np.ones((n, 1))])
        lipschitz = 0.25 * np.linalg.norm(design, 2) ** 2 / n
        if self.penalty == "l2":
            lipschitz += reg
        step = 1.0 / max(lipschitz, 1e-12)

        w = np.zeros(d)
        b = 0.0
        previous = math.inf
        for epoch in range(1, self.max_epochs + 1):
            margin = s * (Z @ w + b)
            loss = float(np.mean(np.logaddexp(0.0, -margin))) + reg * self._penalty(w)
            self.epochs_ = epoch
            if abs(previous - loss) < self.tol:
                break
            previous = loss
            # d/dz log(1 + exp(-s z)) = -s * sigmoid(-s z)
            coeff = -s * np.exp(-np.logaddexp(0.0, margin)) / n
            grad_w = Z.T @ coeff + reg * (np.sign(w) if self.penalty == "l1" else w)
            grad_b = float(coeff.sum())
            w = w - step * grad_w
            b = b - step * grad_b

        self.coef_ = w
        self.intercept_ = b
        return self

    def decision_function(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_
        return Z @ self.coef_ + self.intercept_

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]:
        return self.decision_function(X) > 0.0


class MultinomialNB:
    """
    Multinomial naive Bayes on nonnegative counts.

    Columns with negative training values are shifted by their training minimum; the same
    shift applies at predict time, and values still below zero are clipped.
    """

    def __init__(self, alpha: float = 0.01):
        self.alpha = max(float(alpha), NB_MIN_ALPHA)
        self.shift_ = np.empty(0)
        self.log_prior_ = np.empty(0)
        self.log_theta_ = np.empty((0, 0))

    def _shifted(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.clip(np.asarray(X, dtype=np.float64) + self.shift_, 0.0, None)

    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "MultinomialNB":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=bool)
        self.shift_ = np.where(X.min(axis=0) < 0, -X.min(axis=0), 0.0)
        counts = self._shifted(X)
        if np.any(counts < 0):
            raise LearnerError("negative counts after shift")

        log_prior = []
        log_theta = []
        for label in (False, True):
            rows = counts[y == label]
            log_prior.append(math.log(max(rows.shape[0], 1) / X.shape[0]))
            smoothed = rows.sum(axis=0) + self.alpha
            log_theta.append(np.log(smoothed) - np.log(smoothed.sum()))
        self.log_prior_ = np.asarray(log_prior)
        self.log_theta_ = np.vstack(log_theta)
        return self

    def joint_log_likelihood(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        return self._shifted(X) @ self.log_theta_.T + self.log_prior_

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]:
        joint = self.joint_log_likelihood(X)
        return joint[:, 1] > joint[:, 0]


class KNearestNeighbors:
    """
    k-NN vote. Under distance weighting, zero-distance neighbours outvote all others.
    Neighbour ties on distance keep the lower training index.
    """

    def __init__(self, n_neighbors: int = 5, weights: str = "uniform",
                 metric: str = "minkowski", p: int = 2):
        self.n_neighbors = n_neighbors
        self.weights = weights
        self.metric = metric
        self.p = p
        self.X_ = np.empty((0, 0))
        self.y_ = np.empty(0, dtype=bool)

    def fit(self, X: NDArray[np.float64], y: NDArray[np.bool_]) -> "KNearestNeighbors":
        self.X_ = np.asarray(X, dtype=np.float64)
        self.y_ = np.asarray(y, dtype=bool)
        return self

    def _distances(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.metric == "chebyshev":
            return cdist(X, self.X_, metric="chebyshev")
        return cdist(X, self.X_, metric="minkowski", p=self.p)

    def predict(self, X: NDArray[np.float64]) -> NDArray[np.bool_]:
        X = np.asarray(X, dtype=np.float64)
        k = min(self.n_neighbors, self.y_.size)
        out = np.zeros(X.shape[0], dtype=bool)
        for start in range(0, X.shape[0], KNN_CHUNK_ROWS):
            dist = self._distances(X[start:start + KNN_CHUNK_ROWS])
            nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
            near_dist = np.take_along_axis(dist, nearest, axis=1)
            labels = self.y_[nearest]
            if self.weights == "distance":
                exact = near_dist == 0.0
                with np.errstate(divide="ignore"):
                    w = np.where(exact.any(axis=1, keepdims=True),
                                 exact.astype(float), 1.0 / near_dist)
            else:
                w = np.ones_like(near_dist)
            pos = np.sum(w * labels, axis=1)
            neg = np.sum(w * ~labels, axis=1)
            out[start:start + dist.shape[0]] = pos > neg
        return out


def _build_estimator(spec: LearnerSpec, seed: int) -> Estimator:
    p = spec.params
    match spec.kind:
        case LearnerKind.DECISION_TREE:
            return DecisionTree(
                criterion=p["criterion"],
                splitter=p["splitter"],
                min_samples_split=p["min_samples_split"],
                seed=seed,
            )
        case LearnerKind.RANDOM_FOREST:
            return RandomForest(
                n_estimators=p["n_estimators"],
                criterion=p["criterion"],
                min_samples_split=p["min_samples_split"],
                bootstrap=p["bootstrap"],
                max_features=p["max_features"],
                seed=seed,
            )
        case LearnerKind.LOGISTIC_REGRESSION:
            return LogisticRegression(penalty=p["penalty"], tol=p["tol"], C=float(p["C"]))
        case LearnerKind.MULTINOMIAL_NB:
            return MultinomialNB(alpha=p["alpha"])
        case LearnerKind.KNN:
            return KNearestNeighbors(
                n_neighbors=p["n_neighbors"],
                weights=p["weights"],
                metric=p["metric"],
                p=p.get("p", 2),
            )
    raise LearnerError(f"no estimator for '{spec.kind.value}'")


@dataclass(frozen=True)
class Model:
    """A fitted estimator together with the spec that produced it."""

    spec: LearnerSpec
    estimator: Any
    n_features: int


def fit(spec: LearnerSpec, train: Dataset, seed: int = 0) -> Model:
    """
    Fit the learner described by `spec` on the training rows.

    Raises:
        LearnerError: empty training set or a single class present
    """
    check_non_empty("training set", train.target, LearnerError)
    if not train.has_both_classes():
        raise LearnerError("training set holds a single class")
    estimator = _build_estimator(spec, seed).fit(train.features, train.target)
    return Model(spec=spec, estimator=estimator, n_features=train.n_cols)


def predict(model: Model, rows: NDArray[np.float64]) -> NDArray[np.bool_]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.size == 0 and rows.ndim < 2:
        return np.zeros(0, dtype=bool)
    if rows.ndim != 2 or rows.shape[1] != model.n_features:
        raise LearnerError(
            f"model was fitted on {model.n_features} columns, got shape {rows.shape}"
        )
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(model.estimator.predict(rows), dtype=bool)
