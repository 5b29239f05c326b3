"""Gradient boosting over regression trees, plus a scikit-learn compatible wrapper."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .losses import LossFunction, get_loss
from .tree import RegressionTree, fit_tree, presort

FORMAT_NAME = "dfclab.gbdt.ensemble"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostingConfig:
    n_estimators: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 5

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_leaves < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_leaves and min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("dataset needs at least one row of features")
        if y.shape != (X.shape[0],):
            raise ValueError("one target per row required")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass
class Ensemble:
    base_value: float
    learning_rate: float
    n_features: int
    trees: list[RegressionTree] = field(default_factory=list)
    loss: str = "squared"
    n_iterations: int | None = None
    train_loss: list[float] = field(default_factory=list)

    def raw_sum(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.base_value + self.learning_rate * self.raw_sum(X)

    def predict_one(self, x) -> float:
        if len(x) != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {len(x)}")
        total = 0.0
        for tree in self.trees:
            total += tree.predict_one(x)
        return self.base_value + self.learning_rate * total

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "base_value": self.base_value,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "loss": self.loss,
            "n_iterations": self.n_iterations,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Ensemble:
        if doc.get("format") != FORMAT_NAME:
            raise ValueError(f"not a {FORMAT_NAME} document")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported ensemble version {doc.get('version')!r}")
        return cls(
            base_value=float(doc["base_value"]),
            learning_rate=float(doc["learning_rate"]),
            n_features=int(doc["n_features"]),
            trees=[RegressionTree.from_dict(t) for t in doc["trees"]],
            loss=doc.get("loss", "squared"),
            n_iterations=doc.get("n_iterations"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> Ensemble:
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_constant(targets, loss: str | LossFunction = "squared") -> float:
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise ValueError("targets must be non-empty")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    return get_loss(loss).init_constant(targets)


def pseudo_residuals(targets, predictions, loss: str | LossFunction = "squared") -> np.ndarray:
    targets = np.asarray(targets, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if targets.shape != predictions.shape:
        raise ValueError("targets and predictions differ in length")
    return get_loss(loss).negative_gradient(targets, predictions)


def leaf_value(targets, prior, loss: str | LossFunction = "squared") -> float:
    targets = np.asarray(targets, dtype=float)
    if targets.size == 0:
        raise RuntimeError("empty terminal region")
    return get_loss(loss).leaf_value(targets, np.asarray(prior, dtype=float))


def train(
    dataset: Dataset,
    loss: str | LossFunction = "squared",
    config: BoostingConfig | None = None,
    eval_set: Dataset | None = None,
) -> tuple[Ensemble, list[float]]:
    """Boost ``config.n_estimators`` trees; returns the ensemble and the held-out loss per round.

    Held-out losses are reported only; they never change the model.
    """
    config = config or BoostingConfig()
    loss_fn = get_loss(loss)
    X, y = np.ascontiguousarray(dataset.X), dataset.y
    order = presort(X)
    base = init_constant(y, loss_fn)
    ens = Ensemble(
        base_value=base,
        learning_rate=config.learning_rate,
        n_features=dataset.n_features,
        loss=loss_fn.kind,
        n_iterations=config.n_estimators,
    )
    raw = np.zeros(len(y))
    pred = np.full(len(y), base)
    ens.train_loss.append(float(np.mean(loss_fn.evaluate(y, pred))))
    eval_loss: list[float] = []
    if eval_set is not None:
        eval_raw = np.zeros(len(eval_set))
        eval_loss.append(float(np.mean(loss_fn.evaluate(eval_set.y, np.full(len(eval_set), base)))))

    for _ in range(config.n_estimators):
        r = loss_fn.negative_gradient(y, pred)
        tree = fit_tree(
            X,
            r,
            max_leaves=config.max_leaves,
            min_samples_leaf=config.min_samples_leaf,
            leaf_value=lambda rows: loss_fn.leaf_value(y[rows], pred[rows]),
            order=order,
        )
        ens.trees.append(tree)
        raw += tree.predict(X)
        pred = base + config.learning_rate * raw
        ens.train_loss.append(float(np.mean(loss_fn.evaluate(y, pred))))
        if eval_set is not None:
            eval_raw += tree.predict(eval_set.X)
            eval_pred = base + config.learning_rate * eval_raw
            eval_loss.append(float(np.mean(loss_fn.evaluate(eval_set.y, eval_pred))))
    return ens, eval_loss


def predict(ensemble: Ensemble, x) -> float:
    return ensemble.predict_one(np.asarray(x, dtype=float))


class GradientBoostingRegressor(RegressorMixin, BaseEstimator):
    """Exact-greedy gradient-boosted trees with the usual estimator interface.

    Parameters
    ----------
    n_estimators : int
        Boosting rounds.
    learning_rate : float
        Shrinkage applied to every tree, in (0, 1].
    max_leaves : int
        Leaf budget per tree (trees are grown best-first).
    min_samples_leaf : int
        Minimum rows in every leaf.
    loss : {"squared", "absolute"}
    """

    def __init__(
        self,
        n_estimators: int = 200,
        learning_rate: float = 0.1,
        max_leaves: int = 31,
        min_samples_leaf: int = 5,
        loss: str = "squared",
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_leaves = max_leaves
        self.min_samples_leaf = min_samples_leaf
        self.loss = loss

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        config = BoostingConfig(
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_leaves=self.max_leaves,
            min_samples_leaf=self.min_samples_leaf,
        )
        held_out = None
        if eval_set is not None:
            Xe, ye = check_X_y(*eval_set, dtype=float, y_numeric=True)
            held_out = Dataset(Xe, ye)
        self.ensemble_, self.eval_loss_ = train(Dataset(X, y), self.loss, config, held_out)
        self.train_loss_ = self.ensemble_.train_loss
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=float)
        return self.ensemble_.predict(X)

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble) -> GradientBoostingRegressor:
        est = cls(
            n_estimators=len(ensemble.trees),
            learning_rate=ensemble.learning_rate,
            loss=ensemble.loss,
        )
        est.ensemble_ = ensemble
        est.train_loss_ = ensemble.train_loss
        est.n_features_in_ = ensemble.n_features
        return est
