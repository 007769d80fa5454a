"""Actionability classifiers: logistic regression, random forest,
gradient-boosted trees and a small feed-forward network."""

from __future__ import annotations

import numpy as np

from .base import (
    DEFAULT_PARAMS,
    Algorithm,
    ModelFormatError,
    TrainConfig,
    TrainedModel,
    data_hash,
    load_model,
    model_from_dict,
    save_model,
    validate_training_data,
)
from .gradcheck import gradient_check
from .linear import LogisticModel, fit_logistic
from .mlp import MLPModel, fit_mlp
from .trees import BoostedModel, ForestModel, TreeEnsemble, fit_boosting, fit_forest

_FITTERS = {
    Algorithm.LR: fit_logistic,
    Algorithm.RF: fit_forest,
    Algorithm.GBT: fit_boosting,
    Algorithm.MLP: fit_mlp,
}


def train(X, y, config: TrainConfig) -> TrainedModel:
    """Fit the configured learner; identical inputs and seed give an identical model."""
    X, y = validate_training_data(X, y)
    model = _FITTERS[config.algorithm](X, y, config.resolved(), config.seed)
    model.seed = config.seed
    model.data_hash = data_hash(X, y)
    return model


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    return model.predict_proba(X)


__all__ = [
    "Algorithm",
    "BoostedModel",
    "DEFAULT_PARAMS",
    "ForestModel",
    "LogisticModel",
    "MLPModel",
    "ModelFormatError",
    "TrainConfig",
    "TrainedModel",
    "TreeEnsemble",
    "gradient_check",
    "load_model",
    "model_from_dict",
    "predict_proba",
    "save_model",
    "train",
]
