"""Corpus preparation, per-window model zoos and the two decay experiments."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .alerts import Incident, RawAlert
from .context import ContextConfig, context_matrix
from .ensemble import (
    Candidate,
    IncidentIndex,
    ModelZoo,
    ScoringModel,
    SelectionReport,
    build_zoo,
    select_best,
)
from .featurize import FeatureSpec, FlatRecord, fit_feature_spec, flatten_document, transform_batch

logger = logging.getLogger(__name__)

MONTH = 30 * 86400


def content_record(alert: RawAlert) -> FlatRecord:
    """Flattened body plus the envelope's sensor and severity."""
    rec = flatten_document(alert.body)
    rec["alert.sensor"] = alert.sensor_id
    rec["alert.severity"] = alert.severity
    return rec


@dataclass
class Corpus:
    """A labeled stream with per-alert records and context features precomputed.

    Context features only look back, so computing them once over the whole
    stream gives every alert the same vector it would get in any prefix.
    """

    alerts: list[RawAlert]
    incidents: list[Incident]
    records: list[FlatRecord]
    context: np.ndarray
    labels: np.ndarray
    row_of: dict[str, int]
    context_config: ContextConfig

    @property
    def times(self) -> np.ndarray:
        return np.fromiter((a.event_time for a in self.alerts), dtype=np.int64, count=len(self.alerts))

    def incidents_in(self, rng: tuple[int, int]) -> list[Incident]:
        return [i for i in self.incidents if rng[0] <= i.anchor_time < rng[1]]

    def rows_for(self, incidents: Sequence[Incident]) -> np.ndarray:
        """Alert rows of the given incidents in stream order."""
        rows = [self.row_of[a] for inc in incidents for a in inc.alert_ids]
        return np.sort(np.asarray(rows, dtype=np.int64))


def prepare_corpus(alerts: list[RawAlert], incidents: list[Incident],
                   context_config: ContextConfig | None = None) -> Corpus:
    cfg = context_config or ContextConfig()
    row_of = {a.alert_id: i for i, a in enumerate(alerts)}
    labels = np.zeros(len(alerts), dtype=np.float64)
    for inc in incidents:
        if inc.label is None:
            raise ValueError(f"incident {inc.incident_id} has no label")
        if inc.label:
            for a in inc.alert_ids:
                labels[row_of[a]] = 1.0
    records = [content_record(a) for a in alerts]
    ctx = context_matrix(alerts, cfg)
    return Corpus(alerts, incidents, records, ctx, labels, row_of, cfg)


@dataclass
class WindowData:
    """Matrices for one train/test split; content encoded with ``spec``."""

    spec: FeatureSpec
    train_rows: np.ndarray
    test_rows: np.ndarray
    Xc_train: np.ndarray
    Xx_train: np.ndarray
    y_train: np.ndarray
    Xc_test: np.ndarray
    Xx_test: np.ndarray
    test_index: IncidentIndex
    test_incidents: list[Incident]


def encode_test(corpus: Corpus, spec: FeatureSpec, test_range: tuple[int, int]):
    incs = corpus.incidents_in(test_range)
    rows = corpus.rows_for(incs)
    local = {corpus.alerts[r].alert_id: k for k, r in enumerate(rows)}
    index = IncidentIndex.build(incs, local)
    Xc = transform_batch([corpus.records[r] for r in rows], spec)
    return rows, Xc, corpus.context[rows], index, incs


def window_data(corpus: Corpus, train_range: tuple[int, int], test_range: tuple[int, int],
                rare_threshold: int = 50) -> WindowData:
    train_incs = corpus.incidents_in(train_range)
    train_rows = corpus.rows_for(train_incs)
    if train_rows.size == 0:
        raise ValueError("empty training range")
    train_records = [corpus.records[r] for r in train_rows]
    spec = fit_feature_spec(train_records, rare_threshold)
    Xc_train = transform_batch(train_records, spec)
    rows, Xc, Xx, index, incs = encode_test(corpus, spec, test_range)
    return WindowData(spec, train_rows, rows, Xc_train, corpus.context[train_rows], corpus.labels[train_rows],
                      Xc, Xx, index, incs)


@dataclass
class WindowResult:
    index: int
    train_range: tuple[int, int]
    test_range: tuple[int, int]
    data: WindowData
    zoo: ModelZoo
    winner_index: int
    selection: SelectionReport
    seconds: float

    @property
    def winner(self) -> Candidate:
        return self.zoo.candidates[self.winner_index]

    def winner_model(self) -> ScoringModel:
        return self.zoo.model_for(self.winner)

    def winner_alert_scores(self) -> np.ndarray:
        return self.winner_model().alert_scores(self.data.Xc_test, self.data.Xx_test)


def run_window(corpus: Corpus, k: int, train_range, test_range, seed: int,
               rare_threshold: int = 50, params: dict | None = None) -> WindowResult:
    t0 = time.perf_counter()
    data = window_data(corpus, train_range, test_range, rare_threshold)
    zoo = build_zoo(data.Xc_train, data.Xx_train, data.y_train, data.Xc_test, data.Xx_test,
                    data.test_index, seed=seed, window=k, params=params)
    best, report = select_best(zoo.candidates, zoo.metrics, len(data.test_index))
    secs = time.perf_counter() - t0
    logger.info("window %d: %d train alerts, winner %s (ROC AUC %.4f) in %.1fs",
                k, data.train_rows.size, report.winner, report.roc_auc, secs)
    return WindowResult(k, tuple(train_range), tuple(test_range), data, zoo, best, report, secs)


@dataclass(frozen=True)
class Timeline:
    """Fixed-length months starting at ``start``."""

    start: int
    months: int
    month_seconds: int = MONTH

    def month(self, m: int) -> tuple[int, int]:
        if not 1 <= m <= self.months:
            raise ValueError(f"month {m} outside 1..{self.months}")
        lo = self.start + (m - 1) * self.month_seconds
        return lo, lo + self.month_seconds

    def span(self, first: int, last: int) -> tuple[int, int]:
        return self.month(first)[0], self.month(last)[1]

    def windows(self, train_months: int = 5, n_windows: int = 3) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Sliding (train, test) ranges: train months ``k..k+train_months-1``, test the next."""
        need = train_months + n_windows
        if self.months < need:
            raise ValueError(f"insufficient span: need {need} months, have {self.months}")
        return [
            (self.span(1 + k, train_months + k), self.month(train_months + 1 + k))
            for k in range(n_windows)
        ]

    @classmethod
    def covering(cls, alerts: Sequence[RawAlert], month_seconds: int = MONTH, start: int | None = None) -> "Timeline":
        if not alerts:
            raise ValueError("no alerts")
        s = alerts[0].event_time if start is None else start
        span = alerts[-1].event_time - s + 1
        return cls(s, int(span // month_seconds), month_seconds)


@dataclass
class MonthResult:
    scenario: str  # "fixed" or "retrain"
    test_month: int
    winner: str
    metrics: dict
    n_incidents: int
    incident_scores: np.ndarray | None = field(default=None, repr=False, compare=False)
    labels: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "test_month": self.test_month, "winner": self.winner,
                "n_incidents": self.n_incidents, **self.metrics}


@dataclass
class DecayReport:
    train_months: int
    rows: list[MonthResult] = field(default_factory=list)

    def series(self, scenario: str, key: str = "roc_auc") -> list[float]:
        return [r.metrics[key] for r in self.rows if r.scenario == scenario]

    def to_dict(self) -> dict:
        return {"train_months": self.train_months, "rows": [r.to_dict() for r in self.rows]}


def _month_row(scenario: str, month: int, winner: str, inc_scores: np.ndarray, index: IncidentIndex) -> MonthResult:
    return MonthResult(scenario, month, winner, metrics.summarize(inc_scores, index.labels), len(index),
                       inc_scores, index.labels)


def selected_row(scenario: str, month: int, res: WindowResult) -> MonthResult:
    """Row for a window's own test month; metrics are the ones selection saw."""
    scores = res.data.test_index.aggregate(res.winner_alert_scores())
    return MonthResult(scenario, month, res.selection.winner, _selection_metrics(res.selection),
                       len(res.data.test_index), scores, res.data.test_index.labels)


def run_fixed_decay(corpus: Corpus, timeline: Timeline, seed: int, train_months: int = 5, n_test: int = 3,
                    first: WindowResult | None = None, rare_threshold: int = 50,
                    params: dict | None = None) -> tuple[DecayReport, WindowResult]:
    """Select once on the first test month, then score the frozen winner on later months."""
    wins = timeline.windows(train_months, n_test)
    if first is None:
        first = run_window(corpus, 0, *wins[0], seed, rare_threshold, params)
    report = DecayReport(train_months)
    report.rows.append(selected_row("fixed", train_months + 1, first))
    model = first.winner_model()
    for k in range(1, n_test):
        _, Xc, Xx, index, _ = encode_test(corpus, first.data.spec, wins[k][1])
        scores = index.aggregate(model.alert_scores(Xc, Xx))
        report.rows.append(_month_row("fixed", train_months + 1 + k, first.selection.winner, scores, index))
    return report, first


def run_sliding_retraining(corpus: Corpus, timeline: Timeline, seed: int, train_months: int = 5,
                           n_test: int = 3, first: WindowResult | None = None, rare_threshold: int = 50,
                           params: dict | None = None) -> tuple[DecayReport, list[WindowResult]]:
    """Rebuild and reselect the zoo for every (train, next month) window."""
    wins = timeline.windows(train_months, n_test)
    report = DecayReport(train_months)
    results = []
    for k, (tr, te) in enumerate(wins):
        if k == 0 and first is not None:
            res = first
        else:
            res = run_window(corpus, k, tr, te, seed, rare_threshold, params)
        results.append(res)
        report.rows.append(selected_row("retrain", train_months + 1 + k, res))
    return report, results


def _selection_metrics(sel: SelectionReport) -> dict:
    return {k: getattr(sel, k) for k in
            ("roc_auc", "pr_auc", "baseline_precision", "precision_at_90", "precision_at_95", "precision_at_99")}
