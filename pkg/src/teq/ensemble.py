"""Content/context ensembling, incident-level aggregation and zoo selection."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import metrics
from .learners import Algorithm, TrainConfig, TrainedModel, train

logger = logging.getLogger(__name__)


class EnsembleStrategy(str, Enum):
    AVERAGE = "average"
    MAX = "max"
    WEIGHTED_70_30 = "weighted_70_30"
    WEIGHTED_30_70 = "weighted_30_70"

    @property
    def weights(self) -> tuple[float, float] | None:
        """(content, context) weights for the weighted strategies."""
        return {
            EnsembleStrategy.WEIGHTED_70_30: (0.7, 0.3),
            EnsembleStrategy.WEIGHTED_30_70: (0.3, 0.7),
        }.get(self)


STRATEGIES = tuple(EnsembleStrategy)
ALGORITHMS = tuple(Algorithm)
TASKS = ("content", "context")


def _unit_interval(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} scores must lie in [0, 1]")
    return x


def ensemble_score(content, context, strategy: EnsembleStrategy | str):
    """Combine content and context scores; works elementwise on arrays."""
    strategy = EnsembleStrategy(strategy)
    a = _unit_interval(content, "content")
    b = _unit_interval(context, "context")
    if strategy is EnsembleStrategy.AVERAGE:
        out = (a + b) / 2.0
    elif strategy is EnsembleStrategy.MAX:
        out = np.maximum(a, b)
    else:
        wa, wb = strategy.weights
        out = wa * a + wb * b
    return float(out) if out.ndim == 0 else out


def incident_score(alert_scores: Sequence[float]) -> float:
    """Incident score: the maximum of its member alert scores."""
    s = np.asarray(alert_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("incident has no alert scores")
    return float(s.max())


@dataclass(frozen=True)
class IncidentIndex:
    """Row positions of each incident's alerts in an alert-ordered matrix.

    ``rows`` lists alert rows grouped by incident; incident ``k`` owns
    ``rows[offsets[k]:offsets[k+1]]``.
    """

    incident_ids: tuple[str, ...]
    rows: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def build(cls, incidents, row_of: dict[str, int]) -> "IncidentIndex":
        rows, offsets, ids, labels = [], [0], [], []
        for inc in incidents:
            rows.extend(row_of[a] for a in inc.alert_ids)
            offsets.append(len(rows))
            ids.append(inc.incident_id)
            labels.append(bool(inc.label))
        return cls(tuple(ids), np.asarray(rows, np.int64), np.asarray(offsets, np.int64), np.asarray(labels))

    def __len__(self) -> int:
        return len(self.incident_ids)

    def aggregate(self, alert_scores: np.ndarray) -> np.ndarray:
        """Max alert score per incident."""
        if len(self) == 0:
            return np.zeros(0)
        return np.maximum.reduceat(np.asarray(alert_scores)[self.rows], self.offsets[:-1])


@dataclass(frozen=True)
class Candidate:
    """One of the 72 scored zoo entries."""

    kind: str  # "content", "context" or "ensemble"
    content: Algorithm | None
    context: Algorithm | None
    strategy: EnsembleStrategy | None

    @property
    def name(self) -> str:
        if self.kind == "content":
            return f"content:{self.content.value}"
        if self.kind == "context":
            return f"context:{self.context.value}"
        return f"ensemble:{self.content.value}+{self.context.value}:{self.strategy.value}"

    @classmethod
    def parse(cls, name: str) -> "Candidate":
        kind, _, rest = name.partition(":")
        if kind == "content":
            return cls("content", Algorithm.parse(rest), None, None)
        if kind == "context":
            return cls("context", None, Algorithm.parse(rest), None)
        if kind == "ensemble":
            pair, _, strat = rest.partition(":")
            c, _, x = pair.partition("+")
            return cls("ensemble", Algorithm.parse(c), Algorithm.parse(x), EnsembleStrategy(strat))
        raise ValueError(f"bad candidate name {name!r}")

    def alert_scores(self, content_scores: dict, context_scores: dict) -> np.ndarray:
        if self.kind == "content":
            return content_scores[self.content]
        if self.kind == "context":
            return context_scores[self.context]
        return ensemble_score(content_scores[self.content], context_scores[self.context], self.strategy)


def enumerate_candidates() -> list[Candidate]:
    """Fixed order: content models, context models, then ensembles by
    (content algorithm, context algorithm, strategy)."""
    out = [Candidate("content", a, None, None) for a in ALGORITHMS]
    out += [Candidate("context", None, a, None) for a in ALGORITHMS]
    out += [
        Candidate("ensemble", c, x, s)
        for c in ALGORITHMS
        for x in ALGORITHMS
        for s in STRATEGIES
    ]
    return out


def model_seed(root: int, window: int, task: str, algo: Algorithm) -> int:
    """Stable per-model seed derived from the root seed."""
    key = [int(root), int(window), TASKS.index(task), ALGORITHMS.index(algo)]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint32)[0])


@dataclass
class ModelZoo:
    content_models: dict[Algorithm, TrainedModel]
    context_models: dict[Algorithm, TrainedModel]
    candidates: list[Candidate]
    metrics: list[dict]  # aligned with candidates
    train_seconds: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.candidates)

    def model_for(self, cand: Candidate) -> "ScoringModel":
        return ScoringModel(
            cand,
            self.content_models.get(cand.content) if cand.content else None,
            self.context_models.get(cand.context) if cand.context else None,
        )


@dataclass(frozen=True)
class ScoringModel:
    """A zoo candidate bound to its fitted submodels."""

    candidate: Candidate
    content: TrainedModel | None
    context: TrainedModel | None

    def alert_scores(self, X_content: np.ndarray | None, X_context: np.ndarray | None) -> np.ndarray:
        c = {self.candidate.content: self.content.predict_proba(X_content)} if self.content else {}
        x = {self.candidate.context: self.context.predict_proba(X_context)} if self.context else {}
        return self.candidate.alert_scores(c, x)


def train_base_models(X: np.ndarray, y: np.ndarray, task: str, seed: int, window: int = 0,
                      params: dict | None = None, algorithms: Sequence[Algorithm] = ALGORITHMS):
    """Fit one model per algorithm; returns (models, seconds per model)."""
    params = params or {}
    models, seconds = {}, {}
    for algo in algorithms:
        t0 = time.perf_counter()
        cfg = TrainConfig(algo, model_seed(seed, window, task, algo), params.get(algo.value, {}))
        models[algo] = train(X, y, cfg)
        seconds[f"{task}:{algo.value}"] = time.perf_counter() - t0
        logger.info("trained %s %s on %d rows in %.1fs", task, algo.value, X.shape[0], seconds[f"{task}:{algo.value}"])
    return models, seconds


def score_candidates(content_scores: dict, context_scores: dict, index: IncidentIndex,
                     candidates: Sequence[Candidate] | None = None) -> list[dict]:
    """Incident-level metric rows for every candidate."""
    labels = index.labels
    if labels.all() or not labels.any():
        raise ValueError("test incidents are single-class; ROC AUC is undefined")
    rows = []
    for cand in candidates or enumerate_candidates():
        inc = index.aggregate(cand.alert_scores(content_scores, context_scores))
        rows.append(metrics.summarize(inc, labels))
    return rows


def build_zoo(
    Xc_train: np.ndarray,
    Xx_train: np.ndarray,
    y_train: np.ndarray,
    Xc_test: np.ndarray,
    Xx_test: np.ndarray,
    test_index: IncidentIndex,
    seed: int = 0,
    window: int = 0,
    params: dict | None = None,
) -> ModelZoo:
    """Train 4 content + 4 context models and score all 72 candidates on the test incidents."""
    if not (test_index.labels.any() and not test_index.labels.all()):
        raise ValueError("test incidents are single-class; ROC AUC is undefined")
    cm, t1 = train_base_models(Xc_train, y_train, "content", seed, window, params)
    xm, t2 = train_base_models(Xx_train, y_train, "context", seed, window, params)
    cs = {a: m.predict_proba(Xc_test) for a, m in cm.items()}
    xs = {a: m.predict_proba(Xx_test) for a, m in xm.items()}
    cands = enumerate_candidates()
    rows = score_candidates(cs, xs, test_index, cands)
    return ModelZoo(cm, xm, cands, rows, {**t1, **t2})


@dataclass(frozen=True)
class SelectionReport:
    winner: str
    roc_auc: float
    pr_auc: float
    precision_at_90: float
    precision_at_95: float
    precision_at_99: float
    baseline_precision: float
    n_candidates: int
    n_test_incidents: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def select_best(candidates: Sequence[Candidate], rows: Sequence[dict], n_test_incidents: int = 0) -> tuple[int, SelectionReport]:
    """Highest ROC AUC; ties go to higher P-R AUC, then enumeration order."""
    if not rows:
        raise ValueError("empty zoo")
    for r in rows:
        if not np.isfinite(r["roc_auc"]):
            raise ValueError("candidate with undefined ROC AUC")
    best = 0
    for i, r in enumerate(rows):
        b = rows[best]
        if (r["roc_auc"], r["pr_auc"]) > (b["roc_auc"], b["pr_auc"]):
            best = i
    r = rows[best]
    return best, SelectionReport(
        winner=candidates[best].name,
        roc_auc=r["roc_auc"],
        pr_auc=r["pr_auc"],
        precision_at_90=r["precision_at_90"],
        precision_at_95=r["precision_at_95"],
        precision_at_99=r["precision_at_99"],
        baseline_precision=r["baseline_precision"],
        n_candidates=len(rows),
        n_test_incidents=n_test_incidents,
    )


METRIC_COLUMNS = ("roc_auc", "pr_auc", "precision_at_90", "precision_at_95", "precision_at_99", "baseline_precision")


def metrics_table_csv(candidates: Sequence[Candidate], rows: Sequence[dict]) -> str:
    """One CSV row per candidate with the incident-level metric columns."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model", "kind", "content", "context", "strategy") + METRIC_COLUMNS)
    for c, r in zip(candidates, rows):
        w.writerow(
            (
                c.name,
                c.kind,
                c.content.value if c.content else "",
                c.context.value if c.context else "",
                c.strategy.value if c.strategy else "",
                *(f"{r[k]:.6f}" for k in METRIC_COLUMNS),
            )
        )
    return buf.getvalue()
