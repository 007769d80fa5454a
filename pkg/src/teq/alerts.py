"""Alert/incident data model, JSONL ingestion, incident grouping and time splits."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

INCIDENT_WINDOW = 24 * 3600
ENVELOPE_KEYS = ("alert_id", "event_time", "customer_id", "machine_id", "sensor_id", "severity", "body")


class IngestError(ValueError):
    """A record-level ingestion failure, tagged with its 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
        self.reason = message


class LabelRule(str, Enum):
    MANUAL_REMEDIATION = "manual_remediation"
    CONTAINED_TRUE_POSITIVE = "contained_true_positive"
    FALSE_ALERT = "false_alert"

    @property
    def actionable(self) -> bool:
        return self is LabelRule.MANUAL_REMEDIATION


@dataclass(frozen=True, slots=True)
class RawAlert:
    alert_id: str
    event_time: int
    customer_id: str
    machine_id: str
    sensor_id: str
    severity: float
    body: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not all((self.customer_id, self.machine_id, self.sensor_id)):
            raise ValueError(f"alert {self.alert_id!r}: empty entity id")
        if not math.isfinite(self.severity) or self.severity < 0:
            raise ValueError(f"alert {self.alert_id!r}: severity must be finite and >= 0")

    def to_record(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "event_time": format_time(self.event_time),
            "customer_id": self.customer_id,
            "machine_id": self.machine_id,
            "sensor_id": self.sensor_id,
            "severity": self.severity,
            "body": self.body,
        }


@dataclass(frozen=True)
class Incident:
    incident_id: str
    machine_id: str
    customer_id: str
    alert_ids: tuple[str, ...]
    anchor_time: int
    last_time: int
    label: bool | None = None
    resolution: LabelRule | None = None
    queue_time: float | None = None

    @property
    def created_time(self) -> int:
        return self.anchor_time

    def __len__(self) -> int:
        return len(self.alert_ids)


@dataclass(frozen=True)
class DatasetSplit:
    """Half-open ``[start, end)`` train and test ranges in epoch seconds."""

    train_range: tuple[int, int]
    test_range: tuple[int, int]

    def __post_init__(self):
        for name, (lo, hi) in (("train", self.train_range), ("test", self.test_range)):
            if hi <= lo:
                raise ValueError(f"{name} range is empty: [{lo}, {hi})")
        if self.train_range[1] > self.test_range[0]:
            raise ValueError(
                f"train range ends at {self.train_range[1]} after test start {self.test_range[0]}"
            )


@dataclass
class SplitPart:
    alerts: list[RawAlert]
    incidents: list[Incident]


def parse_time(value: Any) -> int:
    """Epoch seconds from an int/float or an ISO-8601 string (naive means UTC)."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise ValueError("non-finite timestamp")
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise ValueError(f"unsupported timestamp {value!r}")


def format_time(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def alert_from_record(rec: Any) -> RawAlert:
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    missing = [k for k in ENVELOPE_KEYS if k not in rec]
    if missing:
        raise ValueError(f"missing envelope field(s): {', '.join(missing)}")
    body = rec["body"]
    if body is None:
        body = {}
    if not isinstance(body, dict):
        raise ValueError("body must be an object")
    sev = rec["severity"]
    if isinstance(sev, bool) or not isinstance(sev, (int, float)):
        raise ValueError(f"severity must be a number, got {sev!r}")
    return RawAlert(
        alert_id=str(rec["alert_id"]),
        event_time=parse_time(rec["event_time"]),
        customer_id=str(rec["customer_id"]),
        machine_id=str(rec["machine_id"]),
        sensor_id=str(rec["sensor_id"]),
        severity=float(sev),
        body=body,
    )


class AlertReader:
    """Iterate a line-delimited alert file in stream order.

    ``on_error="skip"`` drops bad lines (malformed JSON, missing envelope
    fields, time inversions) and records them in ``errors``; ``"abort"``
    raises :class:`IngestError` at the first one.
    """

    def __init__(self, path: str | Path, on_error: str = "skip"):
        if on_error not in ("skip", "abort"):
            raise ValueError(f"on_error must be 'skip' or 'abort', not {on_error!r}")
        self.path = Path(path)
        self.on_error = on_error
        self.errors: list[IngestError] = []

    @property
    def skipped(self) -> int:
        return len(self.errors)

    def _fail(self, lineno: int, message: str) -> None:
        err = IngestError(lineno, message)
        if self.on_error == "abort":
            raise err
        self.errors.append(err)
        logger.debug("skipping %s", err)

    def __iter__(self) -> Iterator[RawAlert]:
        last_time: int | None = None
        last_line = 0
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    alert = alert_from_record(json.loads(line))
                except (ValueError, TypeError) as exc:
                    self._fail(lineno, str(exc))
                    continue
                if last_time is not None and alert.event_time < last_time:
                    self._fail(
                        lineno,
                        f"time inversion: {format_time(alert.event_time)} precedes "
                        f"{format_time(last_time)} on line {last_line}",
                    )
                    continue
                last_time, last_line = alert.event_time, lineno
                yield alert


def load_alerts(path: str | Path, on_error: str = "skip") -> list[RawAlert]:
    reader = AlertReader(path, on_error=on_error)
    alerts = list(reader)
    if reader.skipped:
        logger.warning("%s: skipped %d malformed record(s)", path, reader.skipped)
    return alerts


def write_alerts(alerts: Iterable[RawAlert], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for a in alerts:
            fh.write(json.dumps(a.to_record(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def group_incidents(alerts: Iterable[RawAlert], window: int = INCIDENT_WINDOW) -> list[Incident]:
    """Group a time-ordered alert stream into per-machine anchor windows.

    An alert joins its machine's open incident while
    ``event_time <= anchor_time + window``; the anchor is the first alert's
    time and never moves, so incidents span at most ``window`` seconds.
    """
    open_by_machine: dict[str, list] = {}
    done: list[list] = []
    prev = None
    seq = 0
    for a in alerts:
        if prev is not None and a.event_time < prev:
            raise ValueError(f"alerts not time-ordered at {a.alert_id!r}")
        prev = a.event_time
        cur = open_by_machine.get(a.machine_id)
        if cur is not None and a.event_time <= cur[0] + window:
            cur[2].append(a.alert_id)
            cur[3] = a.event_time
            continue
        if cur is not None:
            done.append(cur)
        # anchor_time, customer, ids, last_time, machine, creation order
        open_by_machine[a.machine_id] = [a.event_time, a.customer_id, [a.alert_id], a.event_time, a.machine_id, seq]
        seq += 1
    done.extend(open_by_machine.values())
    done.sort(key=lambda g: g[5])
    return [
        Incident(
            incident_id=f"INC-{g[2][0]}",
            machine_id=g[4],
            customer_id=g[1],
            alert_ids=tuple(g[2]),
            anchor_time=g[0],
            last_time=g[3],
        )
        for g in done
    ]


def label_incidents(incidents: Sequence[Incident], records: dict[str, dict]) -> list[Incident]:
    """Attach label/resolution/queue_time from an incident label table."""
    out = []
    for inc in incidents:
        rec = records.get(inc.incident_id)
        if rec is None:
            out.append(inc)
            continue
        resolution = rec.get("resolution")
        resolution = LabelRule(resolution) if resolution is not None else None
        label = rec.get("label")
        if label is None and resolution is not None:
            label = resolution.actionable
        qt = rec.get("queue_time")
        out.append(
            replace(
                inc,
                label=None if label is None else bool(label),
                resolution=resolution,
                queue_time=None if qt is None else float(qt),
            )
        )
    return out


def read_incident_labels(path: str | Path) -> dict[str, dict]:
    records = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "incident_id" not in rec:
                raise IngestError(lineno, "missing incident_id")
            records[rec["incident_id"]] = rec
    return records


def write_incident_labels(incidents: Iterable[Incident], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inc in incidents:
            rec = {
                "incident_id": inc.incident_id,
                "label": inc.label,
                "resolution": inc.resolution.value if inc.resolution else None,
                "queue_time": inc.queue_time,
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def propagate_labels(incidents: Iterable[Incident]) -> dict[str, bool]:
    """Alert-level labels inherited from their incidents."""
    labels: dict[str, bool] = {}
    for inc in incidents:
        if inc.label is None:
            raise ValueError(f"incident {inc.incident_id} has no label")
        for aid in inc.alert_ids:
            labels[aid] = inc.label
    return labels


def _in(ts: int, rng: tuple[int, int]) -> bool:
    return rng[0] <= ts < rng[1]


def time_split(
    alerts: Sequence[RawAlert],
    split: DatasetSplit,
    incidents: Sequence[Incident] | None = None,
) -> tuple[SplitPart, SplitPart]:
    """Chronological train/test partition.

    Without incidents, alerts are assigned by ``event_time``. With incidents,
    each incident goes to the range holding its anchor and carries all of its
    alerts along, even those that fall past the range end.
    """
    if incidents is None:
        train = [a for a in alerts if _in(a.event_time, split.train_range)]
        test = [a for a in alerts if _in(a.event_time, split.test_range)]
        return SplitPart(train, []), SplitPart(test, [])

    parts = []
    for rng in (split.train_range, split.test_range):
        incs = [inc for inc in incidents if _in(inc.anchor_time, rng)]
        wanted = {aid for inc in incs for aid in inc.alert_ids}
        parts.append(SplitPart([a for a in alerts if a.alert_id in wanted], incs))
    return parts[0], parts[1]
