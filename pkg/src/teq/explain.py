"""Feature attribution: permutation importance and permutation-sampled Shapley values."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import metrics

Predictor = Callable[[np.ndarray], np.ndarray]


class ImportanceMethod(str, Enum):
    PERMUTATION = "permutation"
    SAMPLED_SHAPLEY = "sampled_shapley"


def as_predictor(model) -> Predictor:
    """Accept a fitted model (``predict_proba``) or a plain callable."""
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    if callable(model):
        return model
    raise TypeError("model must be callable or expose predict_proba")


@dataclass
class ImportanceReport:
    method: ImportanceMethod
    feature_names: tuple[str, ...]
    values: np.ndarray  # mean metric drop, or mean |attribution|
    spread: np.ndarray  # std over repeats, or std of |attribution| over points
    n_points: int
    n_samples: int  # repeats, or permutations per point
    metric: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.method = ImportanceMethod(self.method)
        self.feature_names = tuple(self.feature_names)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.spread = np.asarray(self.spread, dtype=np.float64)
        if self.values.shape != (len(self.feature_names),) or self.spread.shape != self.values.shape:
            raise ValueError("one value per feature name required")
        if not (np.isfinite(self.values).all() and np.isfinite(self.spread).all()):
            raise ValueError("non-finite attribution")

    def ranking(self) -> list[int]:
        return sorted(range(len(self.values)), key=lambda i: (-self.values[i], i))

    def top(self, k: int = 20) -> list[tuple[str, float]]:
        return [(self.feature_names[i], float(self.values[i])) for i in self.ranking()[:k]]

    def to_dict(self, top: int | None = None) -> dict:
        idx = self.ranking() if top is None else self.ranking()[:top]
        return {
            "method": self.method.value,
            "metric": self.metric,
            "n_points": self.n_points,
            "n_samples": self.n_samples,
            **self.extra,
            "features": [
                {"name": self.feature_names[i], "value": float(self.values[i]), "spread": float(self.spread[i])}
                for i in idx
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "value", "spread"])
        for r, i in enumerate(self.ranking(), 1):
            w.writerow([r, self.feature_names[i], f"{self.values[i]:.8g}", f"{self.spread[i]:.8g}"])
        return buf.getvalue()


_METRICS: dict[str, Callable] = {
    "roc_auc": metrics.roc_auc,
    "pr_auc": metrics.pr_auc,
}


def _names(names: Sequence[str] | None, d: int) -> tuple[str, ...]:
    if names is None:
        return tuple(f"f{j}" for j in range(d))
    if len(names) != d:
        raise ValueError(f"{len(names)} feature names for {d} columns")
    return tuple(names)


def permutation_importance(model, X, y, metric: str | Callable = "roc_auc", repeats: int = 5, seed: int = 0,
                           feature_names: Sequence[str] | None = None) -> ImportanceReport:
    """Mean drop in ``metric`` when one column is shuffled, over seeded repeats.

    Repeat ``r`` of column ``j`` draws its permutation from ``SeedSequence([seed, j, r])``,
    so results do not depend on the order in which columns are visited.
    Constant columns are skipped: shuffling them changes nothing.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    f = as_predictor(model)
    X = np.array(X, dtype=np.float64, copy=True)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one label per row")
    name = metric if isinstance(metric, str) else getattr(metric, "__name__", "metric")
    score = _METRICS[metric] if isinstance(metric, str) else metric
    base = score(f(X), y)  # raises when the metric is undefined on y
    n, d = X.shape
    drops = np.zeros((d, repeats))
    varying = np.flatnonzero(X.max(axis=0) > X.min(axis=0))
    for j in varying:
        col = X[:, j].copy()
        for r in range(repeats):
            perm = np.random.default_rng(np.random.SeedSequence([seed, int(j), r])).permutation(n)
            X[:, j] = col[perm]
            drops[j, r] = base - score(f(X), y)
        X[:, j] = col
    return ImportanceReport(ImportanceMethod.PERMUTATION, _names(feature_names, d), drops.mean(axis=1),
                            drops.std(axis=1), n, repeats, name, {"baseline": float(base)})


@dataclass(frozen=True)
class ShapleyEstimate:
    """Attributions for one point, plus the efficiency bookkeeping."""

    attributions: np.ndarray
    std_error: np.ndarray  # per feature
    f_point: float
    f_background_mean: float
    total_std_error: float  # of the summed attribution
    samples: int

    @property
    def total(self) -> float:
        return float(self.attributions.sum())

    @property
    def target(self) -> float:
        return self.f_point - self.f_background_mean

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        """Interval around the summed attribution at normal quantile ``z``."""
        h = z * self.total_std_error
        return self.total - h, self.total + h


def sampled_shapley(model, point, background, samples: int = 200, seed: int = 0,
                    batch_rows: int = 65536) -> ShapleyEstimate:
    """Monte Carlo Shapley values by permutation sampling with background imputation.

    Each sample pairs a random feature order with one background row and walks
    from that row to ``point`` one feature at a time; the change in output at
    each step is that feature's marginal contribution. Background rows are
    visited in a shuffled cycle (stratified), so when ``samples`` is a multiple
    of the background size the summed attribution equals
    ``f(point) - mean f(background)`` exactly. Otherwise the gap is a sampling
    error covered by the reported interval.
    """
    f = as_predictor(model)
    x = np.asarray(point, dtype=np.float64).ravel()
    B = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if B.shape[0] == 0 or B.size == 0:
        raise ValueError("empty background")
    if B.shape[1] != x.size:
        raise ValueError("background width differs from the point")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    d = x.size
    rng = np.random.default_rng(seed)
    cycle = rng.permutation(B.shape[0])
    bg_rows = np.array([cycle[s % B.shape[0]] for s in range(samples)])
    f_point = float(f(x[None, :])[0])
    f_bg = f(B)
    contrib = np.empty((samples, d))
    per_batch = max(1, batch_rows // (d + 1))
    for s0 in range(0, samples, per_batch):
        s1 = min(samples, s0 + per_batch)
        orders = np.stack([rng.permutation(d) for _ in range(s1 - s0)])
        Z = np.repeat(B[bg_rows[s0:s1]], d + 1, axis=0).reshape(s1 - s0, d + 1, d)
        # step k sets the first k features of the order to the point's values
        for k in range(1, d + 1):
            Z[:, k] = Z[:, k - 1]
            Z[np.arange(s1 - s0), k, orders[:, k - 1]] = x[orders[:, k - 1]]
        out = f(Z.reshape(-1, d)).reshape(s1 - s0, d + 1)
        steps = np.diff(out, axis=1)
        rows = np.arange(s1 - s0)[:, None]
        contrib[s0:s1][rows, orders] = steps
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / np.sqrt(samples)
    totals = contrib.sum(axis=1)  # = f(point) - f(background row)
    total_se = float(totals.std(ddof=1) / np.sqrt(samples))
    return ShapleyEstimate(phi, se, f_point, float(np.mean(f_bg)), total_se, samples)


def shapley_importance(model, points, background, samples: int = 200, seed: int = 0,
                       feature_names: Sequence[str] | None = None) -> ImportanceReport:
    """Mean absolute sampled-Shapley attribution over ``points``."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.shape[0] == 0:
        raise ValueError("no points to explain")
    ss = np.random.SeedSequence(seed).spawn(P.shape[0])
    phis = np.stack([
        sampled_shapley(model, P[i], background, samples, int(ss[i].generate_state(1)[0])).attributions
        for i in range(P.shape[0])
    ])
    a = np.abs(phis)
    return ImportanceReport(ImportanceMethod.SAMPLED_SHAPLEY, _names(feature_names, P.shape[1]), a.mean(axis=0),
                            a.std(axis=0), P.shape[0], samples, "mean_abs_attribution",
                            {"background_rows": int(np.atleast_2d(background).shape[0])})
