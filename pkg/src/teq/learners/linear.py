from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.special import expit

from .base import Algorithm, TrainedModel, decode_array, encode_array, register, standardizer

logger = logging.getLogger(__name__)


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    z = X @ w + b
    return float(np.mean(softplus(z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    r = expit(X @ w + b) - y
    return X.T @ r / X.shape[0] + l2 * w, float(r.mean())


@register
class LogisticModel(TrainedModel):
    algorithm = Algorithm.LR

    def __init__(self, weights, bias, mean, scale, params, n_features, seed=0, data_hash="", loss_history=()):
        super().__init__(params, n_features, seed, data_hash)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.loss_history = list(loss_history)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def _predict(self, X):
        return expit(self.decision_function(X))

    def _state(self):
        return {
            "weights": encode_array(self.weights),
            "bias": self.bias,
            "mean": encode_array(self.mean),
            "scale": encode_array(self.scale),
        }

    @classmethod
    def _from_state(cls, state, **meta):
        return cls(
            decode_array(state["weights"]),
            state["bias"],
            decode_array(state["mean"]),
            decode_array(state["scale"]),
            **meta,
        )


def _design(X: np.ndarray):
    """CSR copy when at most a quarter of the entries are nonzero (one-hot heavy inputs)."""
    if X.size and np.count_nonzero(X) <= 0.25 * X.size:
        return sparse.csr_matrix(X)
    return X


def fit_logistic(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> LogisticModel:
    """Full-batch gradient descent on standardized inputs, zero init.

    Standardization is folded into the products, so ``X`` itself is never
    centered and one-hot columns can stay sparse:
    ``Z @ w = X @ (w / sd) - mu . (w / sd)``.
    """
    mu, sd = standardizer(X)
    A = _design(X)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    lr, l2 = params["learning_rate"], params["l2"]
    history = []
    for epoch in range(params["epochs"] + 1):
        v = w / sd
        z = A @ v + (b - mu @ v)
        history.append(float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)))
        if epoch == params["epochs"]:
            break
        r = expit(z) - y
        gw = (A.T @ r - mu * r.sum()) / sd / n + l2 * w
        w -= lr * gw
        b -= lr * float(r.mean())
    if any(b2 > a2 + 1e-12 for a2, b2 in zip(history, history[1:])):
        logger.warning("logistic regression training loss increased during descent")
    return LogisticModel(w, b, mu, sd, params, d, seed, loss_history=history)
