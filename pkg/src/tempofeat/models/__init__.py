from .bank import (
    ModelBank,
    TargetScaler,
    ensemble_mean,
    predict_top5,
    rank_top,
    train_branch_bank,
)
from .forest import ForestModel, forest_fit
from .gbt import GbtModel, gbt_fit, gbt_predict
from .learners import fit_learner, model_from_dict
from .linear import LinearModel, logistic_fit, ridge_fit
from .tree import DecisionTree, presort, tree_fit

__all__ = [
    "DecisionTree", "ForestModel", "GbtModel", "LinearModel", "ModelBank", "TargetScaler",
    "ensemble_mean", "fit_learner", "forest_fit", "gbt_fit", "gbt_predict", "logistic_fit",
    "model_from_dict", "predict_top5", "presort", "rank_top", "ridge_fit", "train_branch_bank", "tree_fit",
]
