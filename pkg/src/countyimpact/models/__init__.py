"""Supervised severity classifiers over land-cover transition features."""

from .base import MLP_ARCHITECTURES, TABLE1_CONFIGS, ModelConfig
from .gbt import GBTModel, train_gbt
from .logistic import LogisticModel, train_logistic
from .mlp import MLPModel, train_mlp
from .sweep import (FeatureMatrix, SplitSpec, SweepResult, build_feature_matrix, cross_validate,
                    evaluate_sweep, random_baseline, stratified_folds, train_model)
from .trees import DecisionTreeModel, RandomForestModel, train_random_forest

__all__ = [
    "MLP_ARCHITECTURES", "TABLE1_CONFIGS", "ModelConfig", "GBTModel", "train_gbt", "LogisticModel",
    "train_logistic", "MLPModel", "train_mlp", "FeatureMatrix", "SplitSpec", "SweepResult",
    "build_feature_matrix", "random_baseline", "cross_validate", "evaluate_sweep", "stratified_folds", "train_model",
    "DecisionTreeModel", "RandomForestModel", "train_random_forest",
]
