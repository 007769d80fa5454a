from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

MODEL_FORMAT = "teq-model"
MODEL_VERSION = 1


class Algorithm(str, Enum):
    LR = "lr"
    RF = "rf"
    GBT = "gbt"
    MLP = "mlp"

    @classmethod
    def parse(cls, value: "str | Algorithm") -> "Algorithm":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


DEFAULT_PARAMS: dict[Algorithm, dict[str, Any]] = {
    Algorithm.LR: {"learning_rate": 0.1, "epochs": 500, "l2": 1e-4},
    Algorithm.RF: {"n_trees": 100, "max_features": "sqrt", "max_depth": None, "min_samples_split": 2, "bootstrap": True},
    Algorithm.GBT: {
        "n_rounds": 100,
        "max_depth": 6,
        "learning_rate": 0.3,
        "reg_lambda": 1.0,
        "gamma": 0.0,
        "min_child_weight": 1.0,
    },
    Algorithm.MLP: {"hidden": 64, "learning_rate": 0.01, "epochs": 50, "batch_size": 128, "l2": 0.0},
}


class ModelFormatError(ValueError):
    """Raised for corrupt, foreign or version-mismatched model documents."""


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        algo = Algorithm.parse(self.algorithm)
        object.__setattr__(self, "algorithm", algo)
        unknown = set(self.params) - set(DEFAULT_PARAMS[algo])
        if unknown:
            raise ValueError(f"unknown {algo.value} parameter(s): {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULT_PARAMS[self.algorithm], **self.params}


def data_hash(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(doc: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(doc["data"], validate=True)
        return np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad array payload: {exc}") from exc


class TrainedModel:
    """Common surface of every fitted learner: scores in [0, 1]."""

    algorithm: ClassVar[Algorithm]

    def __init__(self, params: dict, n_features: int, seed: int = 0, data_hash: str = ""):
        self.params = dict(params)
        self.n_features = int(n_features)
        self.seed = int(seed)
        self.data_hash = data_hash

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"{self.algorithm.value} model expects width {self.n_features}, got {X.shape}")
        return np.ascontiguousarray(X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = self._check_width(X)
        return np.clip(self._predict(X), 0.0, 1.0)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # serialization
    def _state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, state: dict, **meta) -> "TrainedModel":
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "algorithm": self.algorithm.value,
            "params": self.params,
            "meta": {"n_features": self.n_features, "seed": self.seed, "data_hash": self.data_hash},
            "state": self._state(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} width={self.n_features} seed={self.seed}>"


_REGISTRY: dict[Algorithm, type[TrainedModel]] = {}


def register(cls: type[TrainedModel]) -> type[TrainedModel]:
    _REGISTRY[cls.algorithm] = cls
    return cls


def model_from_dict(doc: Any) -> TrainedModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"model version {doc.get('version')!r} != {MODEL_VERSION}")
    try:
        cls = _REGISTRY[Algorithm.parse(doc["algorithm"])]
        meta = doc["meta"]
        return cls._from_state(
            doc["state"],
            params=doc["params"],
            n_features=meta["n_features"],
            seed=meta["seed"],
            data_hash=meta["data_hash"],
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model document: {exc}") from exc


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(model.dumps(), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt model file ({exc.msg})") from exc
    return model_from_dict(doc)


def validate_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"label count {y.shape} does not match {X.shape[0]} rows")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.isfinite(X).all():
        raise ValueError("non-finite value in training features")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    y = y.astype(np.float64)
    if y.min() == y.max():
        raise ValueError("training labels contain a single class")
    return X, y


def standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd
