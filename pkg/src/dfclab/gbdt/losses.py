"""Losses for boosting: value, negative gradient, and the two argmin helpers."""

from __future__ import annotations

import numpy as np


def lower_median(values: np.ndarray) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("median of an empty set")
    return float(v[(v.size - 1) // 2])


class LossFunction:
    kind = ""

    def evaluate(self, target, prediction) -> np.ndarray:
        raise NotImplementedError

    def negative_gradient(self, target, prediction) -> np.ndarray:
        raise NotImplementedError

    def init_constant(self, targets: np.ndarray) -> float:
        """argmin over constants of the summed loss."""
        raise NotImplementedError

    def leaf_value(self, targets: np.ndarray, prior: np.ndarray) -> float:
        """argmin over gamma of sum L(target, prior + gamma)."""
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class SquaredLoss(LossFunction):
    kind = "squared"

    def evaluate(self, target, prediction):
        d = np.asarray(target, dtype=float) - np.asarray(prediction, dtype=float)
        return 0.5 * d * d

    def negative_gradient(self, target, prediction):
        return np.asarray(target, dtype=float) - np.asarray(prediction, dtype=float)

    def init_constant(self, targets):
        return float(np.mean(targets))

    def leaf_value(self, targets, prior):
        return float(np.mean(np.asarray(targets, dtype=float) - np.asarray(prior, dtype=float)))


class AbsoluteLoss(LossFunction):
    kind = "absolute"

    def evaluate(self, target, prediction):
        return np.abs(np.asarray(target, dtype=float) - np.asarray(prediction, dtype=float))

    def negative_gradient(self, target, prediction):
        return np.sign(np.asarray(target, dtype=float) - np.asarray(prediction, dtype=float))

    def init_constant(self, targets):
        return lower_median(targets)

    def leaf_value(self, targets, prior):
        return lower_median(np.asarray(targets, dtype=float) - np.asarray(prior, dtype=float))


_LOSSES = {"squared": SquaredLoss, "absolute": AbsoluteLoss}


def get_loss(loss: str | LossFunction) -> LossFunction:
    if isinstance(loss, LossFunction):
        return loss
    try:
        return _LOSSES[loss]()
    except KeyError:
        raise ValueError(f"unknown loss {loss!r}; choose from {sorted(_LOSSES)}") from None
