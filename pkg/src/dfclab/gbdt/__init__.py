from .boosting import (
    BoostingConfig,
    Dataset,
    Ensemble,
    GradientBoostingRegressor,
    init_constant,
    leaf_value,
    predict,
    pseudo_residuals,
    train,
)
from .losses import AbsoluteLoss, LossFunction, SquaredLoss, get_loss
from .tree import RegressionTree, best_split, fit_tree

__all__ = [
    "AbsoluteLoss",
    "BoostingConfig",
    "Dataset",
    "Ensemble",
    "GradientBoostingRegressor",
    "LossFunction",
    "RegressionTree",
    "SquaredLoss",
    "best_split",
    "fit_tree",
    "get_loss",
    "init_constant",
    "leaf_value",
    "predict",
    "pseudo_residuals",
    "train",
]
