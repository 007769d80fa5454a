"""Random forest (Gini) and second-order gradient-boosted trees."""

from __future__ import annotations

import math
import logging

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .base import Algorithm, TrainedModel, decode_array, encode_array, register

logger = logging.getLogger(__name__)

_FIELDS = ("feature", "threshold", "left", "right", "value")


class TreeEnsemble:
    """Flat concatenation of trees; child indices stay tree-local."""

    def __init__(self, trees: list[tuple[np.ndarray, ...]] | None = None, **arrays):
        if trees is not None:
            sizes = [t[0].size for t in trees]
            self.offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
            for i, name in enumerate(_FIELDS):
                dtype = np.float64 if name in ("threshold", "value") else np.int64
                parts = [np.asarray(t[i], dtype=dtype) for t in trees]
                setattr(self, name, np.concatenate(parts) if parts else np.zeros(0, dtype))
        else:
            self.offsets = np.asarray(arrays["offsets"], dtype=np.int64)
            for name in _FIELDS:
                setattr(self, name, arrays[name])

    @property
    def n_trees(self) -> int:
        return self.offsets.size - 1

    def tree(self, t: int) -> tuple[np.ndarray, ...]:
        lo, hi = self.offsets[t], self.offsets[t + 1]
        return tuple(getattr(self, name)[lo:hi] for name in _FIELDS)

    def raw_sum(self, X: np.ndarray) -> np.ndarray:
        return K.predict_trees(X, self.offsets, self.feature, self.threshold, self.left, self.right, self.value)

    def encode(self) -> dict:
        out = {name: encode_array(getattr(self, name)) for name in _FIELDS}
        out["offsets"] = encode_array(self.offsets)
        return out

    @classmethod
    def decode(cls, state: dict) -> "TreeEnsemble":
        arrays = {name: decode_array(state[name]) for name in (*_FIELDS, "offsets")}
        ens = cls(**arrays)
        n = ens.feature.size
        if ens.offsets[-1] != n or any(getattr(ens, f).size != n for f in _FIELDS):
            raise ValueError("inconsistent tree arrays")
        return ens


@register
class ForestModel(TrainedModel):
    algorithm = Algorithm.RF

    def __init__(self, trees: TreeEnsemble, params, n_features, seed=0, data_hash=""):
        super().__init__(params, n_features, seed, data_hash)
        self.trees = trees

    def _predict(self, X):
        return self.trees.raw_sum(X) / self.trees.n_trees

    def _state(self):
        return self.trees.encode()

    @classmethod
    def _from_state(cls, state, **meta):
        return cls(TreeEnsemble.decode(state), **meta)


@register
class BoostedModel(TrainedModel):
    algorithm = Algorithm.GBT

    def __init__(self, trees: TreeEnsemble, base_margin, params, n_features, seed=0, data_hash="", loss_history=()):
        super().__init__(params, n_features, seed, data_hash)
        self.trees = trees
        self.base_margin = float(base_margin)
        self.loss_history = list(loss_history)

    def decision_function(self, X):
        return self.base_margin + self.trees.raw_sum(X)

    def staged_margin(self, X) -> np.ndarray:
        """Margins after each boosting round, shaped ``(n_rounds + 1, n)``."""
        X = self._check_width(X)
        out = np.empty((self.trees.n_trees + 1, X.shape[0]))
        acc = np.full(X.shape[0], self.base_margin)
        out[0] = acc
        for t in range(self.trees.n_trees):
            f, thr, l, r, v = self.trees.tree(t)
            acc = acc + v[K.apply_tree(X, f, thr, l, r)]
            out[t + 1] = acc
        return out

    def _predict(self, X):
        return expit(self.decision_function(X))

    def _state(self):
        return {"trees": self.trees.encode(), "base_margin": self.base_margin}

    @classmethod
    def _from_state(cls, state, **meta):
        return cls(TreeEnsemble.decode(state["trees"]), state["base_margin"], **meta)


def column_index(X: np.ndarray, with_order: bool = False):
    """Per-column value ranks used by the split searches.

    Returns ``codes`` ``(d, n)`` dense ranks, the concatenated distinct values
    ``uniq`` with column offsets ``uoff`` and, if requested, the ascending
    order and sorted values of every column.
    """
    XT = np.ascontiguousarray(X.T)
    order = np.argsort(XT, axis=1)
    svals = np.take_along_axis(XT, order, axis=1)
    step = np.zeros(svals.shape, dtype=np.int32)
    np.cumsum(np.diff(svals, axis=1) > 0, axis=1, out=step[:, 1:])
    codes = np.empty_like(step)
    np.put_along_axis(codes, order, step, axis=1)
    counts = step[:, -1].astype(np.int64) + 1 if X.shape[0] else np.zeros(X.shape[1], np.int64)
    uoff = np.r_[0, np.cumsum(counts)].astype(np.int64)
    first = np.ones(svals.shape, dtype=bool)
    first[:, 1:] = np.diff(svals, axis=1) > 0
    uniq = svals[first]
    if with_order:
        return codes, uniq, uoff, order.astype(np.int32), svals
    return codes, uniq, uoff


def sparse_codes(codes: np.ndarray, uoff: np.ndarray):
    """Per column, the most frequent rank and the (row, rank) entries off it."""
    d, n = codes.shape
    dflt = np.zeros(d, dtype=np.int64)
    ptr = np.zeros(d + 1, dtype=np.int64)
    rows, vals = [], []
    for f in range(d):
        counts = np.bincount(codes[f], minlength=int(uoff[f + 1] - uoff[f]))
        dflt[f] = int(np.argmax(counts))
        r = np.flatnonzero(codes[f] != dflt[f])
        rows.append(r)
        vals.append(codes[f, r])
        ptr[f + 1] = ptr[f] + r.size
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
    return dflt, ptr, cat(rows, np.int64), cat(vals, np.int64)


def resolve_max_features(spec, d: int) -> int:
    if spec is None:
        return d
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(spec, float):
        return max(1, math.ceil(spec * d))
    return max(1, min(int(spec), d))


def fit_forest(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> ForestModel:
    n, d = X.shape
    mtry = resolve_max_features(params["max_features"], d)
    max_depth = -1 if params["max_depth"] is None else int(params["max_depth"])
    children = np.random.SeedSequence(seed).spawn(params["n_trees"])
    codes, uniq, uoff = column_index(X)
    trees = []
    for ss in children:
        rng = np.random.default_rng(ss)
        if params["bootstrap"]:
            counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
            rows = np.flatnonzero(counts)
            w = counts[rows].astype(np.float64)
        else:
            rows = np.arange(n)
            w = np.ones(n)
        tree_seed = int(rng.integers(0, 2**63 - 1))
        trees.append(
            K.grow_gini_tree(
                X, codes, uniq, uoff, rows.astype(np.int64), w, y[rows], mtry, max_depth,
                float(params["min_samples_split"]), tree_seed,
            )
        )
    return ForestModel(TreeEnsemble(trees), params, d, seed)


def fit_boosting(X: np.ndarray, y: np.ndarray, params: dict, seed: int) -> BoostedModel:
    codes, uniq, uoff, order, svals = column_index(X, with_order=True)
    dflt, nz_ptr, nz_row, nz_code = sparse_codes(codes, uoff)
    del codes
    eta = params["learning_rate"]
    margin = np.zeros(X.shape[0])
    history = [_logloss(margin, y)]
    trees = []
    for _ in range(params["n_rounds"]):
        p = expit(margin)
        grad = p - y
        hess = p * (1.0 - p)
        f, thr, l, r, v = K.grow_newton_tree(
            X, uniq, uoff, dflt, nz_ptr, nz_row, nz_code, order, svals, grad, hess, int(params["max_depth"]),
            float(params["reg_lambda"]), float(params["gamma"]), float(params["min_child_weight"]),
        )
        v = v * eta
        trees.append((f, thr, l, r, v))
        margin = margin + v[K.apply_tree(X, f, thr, l, r)]
        history.append(_logloss(margin, y))
    return BoostedModel(TreeEnsemble(trees), 0.0, params, X.shape[1], seed, loss_history=history)


def _logloss(margin: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))
