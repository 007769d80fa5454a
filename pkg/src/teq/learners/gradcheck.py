"""Finite-difference validation of the analytic loss gradients."""

from __future__ import annotations

import numpy as np

from .base import Algorithm
from .linear import logistic_grad, logistic_loss
from .mlp import init_params, mlp_grad, mlp_loss

# Components smaller than this are compared absolutely rather than relatively.
REL_FLOOR = 1e-8


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradient_check(
    family: Algorithm | str,
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    h: float = 1e-5,
    l2: float = 0.0,
    hidden: int = 8,
    params: dict | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters are randomly initialized from ``seed`` unless given. ``X`` may
    be a single point or a batch.
    """
    family = Algorithm.parse(family)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    rng = np.random.default_rng(seed)
    d = X.shape[1]

    if family is Algorithm.LR:
        if params is None:
            params = {"w": rng.normal(size=d), "b": np.array(rng.normal())}

        def loss(p):
            return logistic_loss(p["w"], float(p["b"]), X, y, l2)

        gw, gb = logistic_grad(params["w"], float(params["b"]), X, y, l2)
        analytic = {"w": gw, "b": np.array(gb)}
    elif family is Algorithm.MLP:
        if params is None:
            params = init_params(d, hidden, rng)

        def loss(p):
            return mlp_loss(p, X, y, l2)

        analytic = mlp_grad(params, X, y, l2)
    else:
        raise ValueError(f"{family.value} is not a differentiable family")

    worst = 0.0
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        numeric = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = loss({**params, name: value})
            flat[i] = orig - h
            minus = loss({**params, name: value})
            flat[i] = orig
            numeric.reshape(-1)[i] = (plus - minus) / (2 * h)
        worst = max(worst, _rel_err(np.asarray(analytic[name]).reshape(numeric.shape), numeric))
    return worst


def bias_gradient(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    """Closed-form d(loss)/d(bias) for logistic regression: mean(p - y)."""
    z = np.atleast_2d(X) @ w + b
    return float(np.mean(1.0 / (1.0 + np.exp(-z)) - np.atleast_1d(y)))
