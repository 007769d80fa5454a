"""Triage simulations: queue prioritization, suppression, within-incident ordering."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .metrics import metric_curve

HOUR = 3600
DEFAULT_SLICES = (HOUR, 4 * HOUR, 24 * HOUR, 744 * HOUR)


class OrderingPolicy(str, Enum):
    BASELINE = "baseline"  # chronological stand-in for analyst order
    SEVERITY = "severity"
    TEQ = "teq"


@dataclass(frozen=True)
class QueuedIncident:
    incident_id: str
    created_time: int
    queue_time: float
    label: bool
    severity: float
    score: float


@dataclass(frozen=True)
class QueueSlice:
    duration: int
    start: int
    members: tuple[QueuedIncident, ...]

    def __post_init__(self):
        for m in self.members:
            if not self.start <= m.created_time < self.start + self.duration:
                raise ValueError(f"{m.incident_id} created outside its slice")
            if m.queue_time < 0:
                raise ValueError(f"{m.incident_id} has a negative queue time")


def policy_order(members: Sequence[QueuedIncident], policy: OrderingPolicy | str) -> list[int]:
    """Indices of ``members`` in service order; ties go to the oldest incident."""
    policy = OrderingPolicy(policy)
    idx = range(len(members))
    if policy is OrderingPolicy.BASELINE:
        key = lambda i: (members[i].created_time, i)
    elif policy is OrderingPolicy.SEVERITY:
        key = lambda i: (-members[i].severity, members[i].created_time, i)
    else:
        key = lambda i: (-members[i].score, members[i].created_time, i)
    return sorted(idx, key=key)


def assign_queue_times(members: Sequence[QueuedIncident], order: Sequence[int]) -> np.ndarray:
    """Give the k-th ranked incident the k-th smallest observed queue time."""
    times = np.sort(np.array([m.queue_time for m in members], dtype=np.float64))
    out = np.empty(len(members))
    out[np.asarray(order, dtype=np.int64)] = times
    return out


def simulate_queue_times(qslice: QueueSlice, policy: OrderingPolicy | str) -> float | None:
    """Mean assigned queue time over actionable incidents; ``None`` if there are none."""
    members = qslice.members
    if not members:
        raise ValueError("empty slice")
    actionable = np.array([m.label for m in members], dtype=bool)
    if not actionable.any():
        return None
    assigned = assign_queue_times(members, policy_order(members, policy))
    return float(assigned[actionable].mean())


def make_slices(incidents: Sequence[QueuedIncident], duration: int, start: int | None = None) -> list[QueueSlice]:
    """Disjoint consecutive slices from ``start``; empty slices are skipped."""
    if not incidents:
        return []
    if duration <= 0:
        raise ValueError("slice duration must be positive")
    t0 = min(m.created_time for m in incidents) if start is None else start
    buckets: dict[int, list[QueuedIncident]] = {}
    for m in incidents:
        if m.created_time < t0:
            raise ValueError(f"{m.incident_id} precedes the first slice")
        buckets.setdefault((m.created_time - t0) // duration, []).append(m)
    return [
        QueueSlice(duration, t0 + k * duration, tuple(sorted(v, key=lambda m: m.created_time)))
        for k, v in sorted(buckets.items())
    ]


@dataclass
class QueueResult:
    duration: int
    n_slices: int
    n_used: int
    means: dict[str, float]  # mean of per-slice means, per policy

    def savings(self, policy: str, against: str = OrderingPolicy.BASELINE.value) -> float:
        base = self.means[against]
        return float("nan") if base == 0 else 1.0 - self.means[policy] / base

    def to_dict(self) -> dict:
        return {
            "slice_seconds": self.duration,
            "slices": self.n_slices,
            "slices_with_actionable": self.n_used,
            "mean_actionable_queue_time": dict(self.means),
            "savings_vs_baseline": {p: self.savings(p) for p in self.means},
        }


def queue_experiment(incidents: Sequence[QueuedIncident], duration: int, start: int | None = None) -> QueueResult:
    slices = make_slices(incidents, duration, start)
    per: dict[str, list[float]] = {p.value: [] for p in OrderingPolicy}
    used = 0
    for s in slices:
        vals = {p.value: simulate_queue_times(s, p) for p in OrderingPolicy}
        if vals[OrderingPolicy.BASELINE.value] is None:
            continue  # no actionable incidents: excluded from the aggregate
        used += 1
        for p, v in vals.items():
            per[p].append(v)
    means = {p: (float(np.mean(v)) if v else float("nan")) for p, v in per.items()}
    return QueueResult(duration, len(slices), used, means)


# ---- suppression --------------------------------------------------------

def select_threshold_at_recall(scores, labels, target_recall: float = 0.95) -> tuple[float, float]:
    """Largest threshold whose recall (score >= t) reaches the target.

    Returns ``(threshold, recall_at_threshold)``.
    """
    if not 0.0 < target_recall <= 1.0:
        raise ValueError("target_recall must be in (0, 1]")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if not y.any():
        raise ValueError("no positive labels; recall undefined")
    curve = metric_curve(s, y)
    ok = np.flatnonzero(curve.recall >= target_recall - 1e-12)
    k = ok[0]  # thresholds are descending, so the first hit is the largest
    return float(curve.thresholds[k]), float(curve.recall[k])


@dataclass
class SuppressionResult:
    threshold: float
    retained: list[str]
    suppressed: list[str]
    counts: dict
    daily: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, **self.counts, "daily": self.daily}


def suppress_incidents(incidents: Sequence[QueuedIncident], threshold: float, day_start: int | None = None) -> SuppressionResult:
    """Retain incidents scoring at or above ``threshold``; suppress the rest."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    retained, suppressed = [], []
    tp_kept = fp_supp = fn_supp = fp_kept = 0
    days: dict[int, dict] = {}
    t0 = (min((m.created_time for m in incidents), default=0) if day_start is None else day_start)
    for m in incidents:
        keep = m.score >= threshold
        (retained if keep else suppressed).append(m.incident_id)
        d = days.setdefault((m.created_time - t0) // 86400, {"retained": 0, "suppressed": 0,
                                                            "fp_suppressed": 0, "tp_suppressed": 0})
        if keep:
            d["retained"] += 1
            tp_kept += m.label
            fp_kept += not m.label
        else:
            d["suppressed"] += 1
            d["fp_suppressed"] += not m.label
            d["tp_suppressed"] += m.label
            fp_supp += not m.label
            fn_supp += m.label
    n_pos = tp_kept + fn_supp
    n_neg = fp_kept + fp_supp
    counts = {
        "total": len(incidents),
        "retained": len(retained),
        "suppressed": len(suppressed),
        "tp_retained": tp_kept,
        "tp_suppressed": fn_supp,
        "fp_suppressed": fp_supp,
        "fp_retained": fp_kept,
        "recall": tp_kept / n_pos if n_pos else float("nan"),
        "fp_suppression_rate": fp_supp / n_neg if n_neg else float("nan"),
    }
    daily = [{"day": int(k), **v} for k, v in sorted(days.items())]
    return SuppressionResult(threshold, retained, suppressed, counts, daily)


# ---- within-incident ordering --------------------------------------------

@dataclass(frozen=True)
class AlertRanking:
    incident_id: str
    order: tuple[str, ...]  # alert ids, highest score first
    top_alert: str
    top_chronological_position: int  # 1-based
    evidence_alert: str | None
    evidence_rank: int | None  # 1-based position under score order
    evidence_chronological: int | None


def rank_alerts_within_incident(alert_ids: Sequence[str], scores: dict[str, float] | Sequence[float],
                                evidence: str | None = None, incident_id: str = "") -> AlertRanking:
    """Order an incident's (chronological) alerts by descending score, stable on ties."""
    ids = list(alert_ids)
    if isinstance(scores, dict):
        missing = [a for a in ids if a not in scores]
        if missing:
            raise ValueError(f"missing score for alert(s) {missing[:3]}")
        vals = [float(scores[a]) for a in ids]
    else:
        vals = [float(s) for s in scores]
        if len(vals) != len(ids):
            raise ValueError("one score per alert required")
    order = sorted(range(len(ids)), key=lambda i: (-vals[i], i))
    ranked = tuple(ids[i] for i in order)
    ev_rank = ev_chrono = None
    if evidence is not None:
        if evidence not in ids:
            raise ValueError(f"evidence alert {evidence} not in incident")
        ev_rank = ranked.index(evidence) + 1
        ev_chrono = ids.index(evidence) + 1
    return AlertRanking(incident_id, ranked, ranked[0], order[0] + 1, evidence, ev_rank, ev_chrono)


def inspection_summary(rankings: Sequence[AlertRanking], min_alerts: int = 1) -> dict:
    """Mean alerts inspected until the evidence alert, score order vs chronological."""
    rows = [r for r in rankings if r.evidence_rank is not None and len(r.order) >= min_alerts]
    if not rows:
        return {"incidents": 0, "teq": float("nan"), "chronological": float("nan"), "reduction": float("nan")}
    teq = float(np.mean([r.evidence_rank for r in rows]))
    chrono = float(np.mean([r.evidence_chronological for r in rows]))
    return {"incidents": len(rows), "teq": teq, "chronological": chrono, "reduction": 1.0 - teq / chrono}


@dataclass
class TriageReport:
    queue: list[QueueResult]
    suppression: SuppressionResult
    target_recall: float
    validation_recall: float
    threshold_leakage: bool
    within_incident: dict
    within_incident_multi: dict
    model: str = ""
    test_range: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "test_range": list(self.test_range) if self.test_range else None,
            "queue": [q.to_dict() for q in self.queue],
            "suppression": {
                "target_recall": self.target_recall,
                "fit_recall": self.validation_recall,
                "threshold_leakage": self.threshold_leakage,
                **self.suppression.to_dict(),
            },
            "within_incident": {"all": self.within_incident, "multi_alert": self.within_incident_multi},
        }

    def queue_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pols = [p.value for p in OrderingPolicy]
        w.writerow(["slice_seconds"] + [f"mean_{p}" for p in pols] + [f"savings_{p}" for p in pols])
        for q in self.queue:
            w.writerow([q.duration] + [f"{q.means[p]:.3f}" for p in pols] + [f"{q.savings(p):.6f}" for p in pols])
        return buf.getvalue()

    def daily_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["day", "retained", "suppressed", "fp_suppressed", "tp_suppressed"]
        w.writerow(cols)
        for d in self.suppression.daily:
            w.writerow([d[c] for c in cols])
        return buf.getvalue()
