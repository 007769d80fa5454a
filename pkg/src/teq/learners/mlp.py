"""One-hidden-layer ReLU network with a sigmoid output, trained with Adam."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .linear import _design
from .base import Algorithm, TrainedModel, decode_array, encode_array, register, standardizer


def init_params(d: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    a1 = 1.0 / np.sqrt(d)
    a2 = 1.0 / np.sqrt(hidden)
    return {
        "W1": rng.uniform(-a1, a1, size=(d, hidden)),
        "b1": rng.uniform(-a1, a1, size=hidden),
        "W2": rng.uniform(-a2, a2, size=hidden),
        "b2": np.array(rng.uniform(-a2, a2)),
    }


def forward(p: dict, X: np.ndarray):
    pre = X @ p["W1"] + p["b1"]
    hid = np.maximum(pre, 0.0)
    z = hid @ p["W2"] + p["b2"]
    return pre, hid, z


def mlp_loss(p: dict, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    _, _, z = forward(p, X)
    reg = 0.5 * l2 * (np.sum(p["W1"] ** 2) + np.sum(p["W2"] ** 2))
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + reg)


def mlp_grad(p: dict, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> dict[str, np.ndarray]:
    pre, hid, z = forward(p, X)
    n = X.shape[0]
    dz = (expit(z) - y) / n
    dhid = np.outer(dz, p["W2"]) * (pre > 0)
    return {
        "W1": X.T @ dhid + l2 * p["W1"],
        "b1": dhid.sum(axis=0),
        "W2": hid.T @ dz + l2 * p["W2"],
        "b2": np.array(dz.sum()),
    }


@register
class MLPModel(TrainedModel):
    algorithm = Algorithm.MLP

    def __init__(self, layers, mean, scale, params, n_features, seed=0, data_hash="", loss_history=()):
        super().__init__(params, n_features, seed, data_hash)
        self.layers = {k: np.asarray(v, dtype=np.float64) for k, v in layers.items()}
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.loss_history = list(loss_history)

    def _predict(self, X):
        _, _, z = forward(self.layers, (X - self.mean) / self.scale)
        return expit(z)

    def _state(self):
        state = {k: encode_array(v) for k, v in self.layers.items()}
        state["mean"] = encode_array(self.mean)
        state["scale"] = encode_array(self.scale)
        return state

    @classmethod
    def _from_state(cls, state, **meta):
        layers = {k: decode_array(state[k]) for k in ("W1", "b1", "W2", "b2")}
        return cls(layers, decode_array(state["mean"]), decode_array(state["scale"]), **meta)


def _views(flat: np.ndarray, d: int, hidden: int) -> dict[str, np.ndarray]:
    """Named parameter views into one flat vector."""
    a = d * hidden
    return {
        "W1": flat[:a].reshape(d, hidden),
        "b1": flat[a : a + hidden],
        "W2": flat[a + hidden : a + 2 * hidden],
        "b2": flat[a + 2 * hidden : a + 2 * hidden + 1].reshape(()),
    }


def _full_loss(p: dict, A, mu: np.ndarray, sd: np.ndarray, y: np.ndarray, l2: float) -> float:
    # standardization folded into the first layer so a sparse A stays sparse
    W1 = p["W1"] / sd[:, None]
    pre = A @ W1 + (p["b1"] - mu @ W1)
    z = np.maximum(pre, 0.0) @ p["W2"] + p["b2"]
    reg = 0.5 * l2 * (np.sum(p["W1"] ** 2) + np.sum(p["W2"] ** 2))
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + reg)


def fit_mlp(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> MLPModel:
    """Adam on shuffled mini-batches; full training loss recorded after each epoch."""
    rng = np.random.default_rng(seed)
    mu, sd = standardizer(X)
    A = _design(X)
    n, d = X.shape
    hidden = params["hidden"]
    init = init_params(d, hidden, rng)
    theta = np.concatenate([init[k].ravel() for k in ("W1", "b1", "W2", "b2")])
    p = _views(theta, d, hidden)
    grad = np.empty_like(theta)
    g = _views(grad, d, hidden)
    m = np.zeros_like(theta)
    v2 = np.zeros_like(theta)
    lr, bs, l2 = params["learning_rate"], params["batch_size"], params["l2"]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = [_full_loss(p, A, mu, sd, y, l2)]
    Z = (X - mu) / sd
    for _ in range(params["epochs"]):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            batch = perm[start : start + bs]
            gb = mlp_grad(p, Z[batch], y[batch], l2)
            for k in ("W1", "b1", "W2", "b2"):
                g[k][...] = gb[k]
            step += 1
            m *= beta1
            m += (1 - beta1) * grad
            v2 *= beta2
            v2 += (1 - beta2) * grad * grad
            theta -= (lr / (1.0 - beta1**step)) * m / (np.sqrt(v2 / (1.0 - beta2**step)) + eps)
        history.append(_full_loss(p, A, mu, sd, y, l2))
    layers = {k: np.array(v) for k, v in p.items()}
    return MLPModel(layers, mu, sd, params, d, seed, loss_history=history)
