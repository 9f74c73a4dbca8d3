"""Leaf-wise histogram gradient boosting for binary pixel classification."""

from .binning import BinIndex, bin_features
from .boosting import (
    GBDTModel,
    GBDTParams,
    fit_gbdt,
    load_gbdt,
    logistic_grad_hess,
    model_from_json,
    model_to_json,
    predict_gbdt,
    predict_margins,
    save_gbdt,
)
from .tree import TreeArrays, find_best_split, grow_tree_leafwise

__all__ = [
    "BinIndex",
    "bin_features",
    "GBDTModel",
    "GBDTParams",
    "fit_gbdt",
    "predict_gbdt",
    "predict_margins",
    "logistic_grad_hess",
    "TreeArrays",
    "find_best_split",
    "grow_tree_leafwise",
    "model_to_json",
    "model_from_json",
    "save_gbdt",
    "load_gbdt",
]
