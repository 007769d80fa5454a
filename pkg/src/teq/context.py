"""Look-back context features over customer/machine/sensor activity.

For an alert ``a`` at time ``t`` and window ``w``, every predicate is evaluated
over the alerts that precede ``a`` in stream order (``a`` included) whose
event time lies in ``(t - w, t]``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .alerts import RawAlert

DEFAULT_WINDOWS = (60, 120, 300, 600, 3600, 7200, 43200, 86400, 604800)


class Predicate(str, Enum):
    CUSTOMER_ALERTS = "customer_alerts"
    MACHINE_ALERTS = "machine_alerts"
    SENSOR_ALERTS = "sensor_alerts"
    MACHINE_MEAN_SEVERITY = "machine_mean_severity"
    SENSOR_MEAN_SEVERITY = "sensor_mean_severity"
    CUSTOMER_DISTINCT_SENSORS = "customer_distinct_sensors"
    CUSTOMER_DISTINCT_MACHINES = "customer_distinct_machines"
    SENSOR_DISTINCT_MACHINES = "sensor_distinct_machines"
    SENSOR_DISTINCT_CUSTOMERS = "sensor_distinct_customers"
    CUSTOMER_SENSOR_ALERTS = "customer_sensor_alerts"


PREDICATES = tuple(Predicate)
COUNT_PREDICATES = tuple(p for p in PREDICATES if "severity" not in p.value)


@dataclass(frozen=True)
class ContextConfig:
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    predicates: tuple[Predicate, ...] = PREDICATES

    def __post_init__(self):
        w = tuple(int(x) for x in self.windows)
        if not w or any(x <= 0 for x in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError(f"windows must be positive and strictly increasing: {self.windows}")
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "predicates", tuple(Predicate(p) for p in self.predicates))

    @property
    def width(self) -> int:
        return len(self.windows) * len(self.predicates)

    @property
    def feature_names(self) -> list[str]:
        return [f"{p.value}_{w}s" for p in self.predicates for w in self.windows]

    def column(self, predicate: Predicate, window: int) -> int:
        return self.predicates.index(predicate) * len(self.windows) + self.windows.index(window)


# Severities are summed exactly as integers scaled by 2**1074 (every finite
# double is an integer multiple of 2**-1074) so that add/evict never drifts.
_SEV_SHIFT = 1074


def _exact(x: float) -> int:
    num, den = x.as_integer_ratio()
    return num << (_SEV_SHIFT - (den.bit_length() - 1))


class _WindowState:
    """Counters for one look-back window; ids are dense ints."""

    __slots__ = (
        "w", "queue", "cust", "mach", "sens", "cs", "sm", "cm",
        "mach_sev", "sens_sev", "cust_nsens", "cust_nmach", "sens_nmach", "sens_ncust",
    )

    def __init__(self, w: int):
        self.w = w
        self.queue: deque = deque()
        for name in ("cust", "mach", "sens", "cs", "sm", "cm", "mach_sev", "sens_sev",
                     "cust_nsens", "cust_nmach", "sens_nmach", "sens_ncust"):
            setattr(self, name, {})

    def add(self, ev: tuple) -> None:
        t, c, m, s, cs, sm, cm, sev = ev
        self.queue.append(ev)
        self.cust[c] = self.cust.get(c, 0) + 1
        self.mach[m] = self.mach.get(m, 0) + 1
        self.sens[s] = self.sens.get(s, 0) + 1
        self.mach_sev[m] = self.mach_sev.get(m, 0) + sev
        self.sens_sev[s] = self.sens_sev.get(s, 0) + sev
        n = self.cs.get(cs, 0)
        self.cs[cs] = n + 1
        if n == 0:
            self.cust_nsens[c] = self.cust_nsens.get(c, 0) + 1
            self.sens_ncust[s] = self.sens_ncust.get(s, 0) + 1
        n = self.sm.get(sm, 0)
        self.sm[sm] = n + 1
        if n == 0:
            self.sens_nmach[s] = self.sens_nmach.get(s, 0) + 1
        n = self.cm.get(cm, 0)
        self.cm[cm] = n + 1
        if n == 0:
            self.cust_nmach[c] = self.cust_nmach.get(c, 0) + 1

    def evict_until(self, t: int) -> None:
        cutoff = t - self.w
        q = self.queue
        while q and q[0][0] <= cutoff:
            _, c, m, s, cs, sm, cm, sev = q.popleft()
            self.cust[c] -= 1
            self.mach[m] -= 1
            self.sens[s] -= 1
            self.mach_sev[m] -= sev
            self.sens_sev[s] -= sev
            self.cs[cs] -= 1
            if self.cs[cs] == 0:
                self.cust_nsens[c] -= 1
                self.sens_ncust[s] -= 1
            self.sm[sm] -= 1
            if self.sm[sm] == 0:
                self.sens_nmach[s] -= 1
            self.cm[cm] -= 1
            if self.cm[cm] == 0:
                self.cust_nmach[c] -= 1

    def values(self, ev: tuple) -> dict:
        _, c, m, s, cs, _, _, _ = ev
        nm, ns = self.mach[m], self.sens[s]
        return {
            Predicate.CUSTOMER_ALERTS: self.cust[c],
            Predicate.MACHINE_ALERTS: nm,
            Predicate.SENSOR_ALERTS: ns,
            Predicate.MACHINE_MEAN_SEVERITY: self.mach_sev[m] / (nm << _SEV_SHIFT) if nm else 0.0,
            Predicate.SENSOR_MEAN_SEVERITY: self.sens_sev[s] / (ns << _SEV_SHIFT) if ns else 0.0,
            Predicate.CUSTOMER_DISTINCT_SENSORS: self.cust_nsens[c],
            Predicate.CUSTOMER_DISTINCT_MACHINES: self.cust_nmach[c],
            Predicate.SENSOR_DISTINCT_MACHINES: self.sens_nmach[s],
            Predicate.SENSOR_DISTINCT_CUSTOMERS: self.sens_ncust[s],
            Predicate.CUSTOMER_SENSOR_ALERTS: self.cs[cs],
        }


class _Interner(dict):
    def __missing__(self, key):
        self[key] = v = len(self)
        return v


def compute_context_stream(
    alerts: Iterable[RawAlert], config: ContextConfig | None = None
) -> Iterator[np.ndarray]:
    """Yield one context vector per alert, in stream order.

    Vectors are laid out predicate-major, windows ascending within each
    predicate. Raises ``ValueError`` if event times go backwards.
    """
    config = config or ContextConfig()
    states = [_WindowState(w) for w in config.windows]
    ids = _Interner()
    preds = config.predicates
    width = config.width
    last = None
    for a in alerts:
        t = a.event_time
        if last is not None and t < last:
            raise ValueError(f"time regression at alert {a.alert_id!r}")
        last = t
        c, m, s = ids["c", a.customer_id], ids["m", a.machine_id], ids["s", a.sensor_id]
        ev = (t, c, m, s, ids["cs", c, s], ids["sm", s, m], ids["cm", c, m], _exact(a.severity))
        vec = np.empty(width)
        nw = len(states)
        for k, st in enumerate(states):
            st.evict_until(t)
            st.add(ev)
            vals = st.values(ev)
            for i, p in enumerate(preds):
                vec[i * nw + k] = vals[p]
        yield vec


def context_matrix(alerts: Sequence[RawAlert], config: ContextConfig | None = None) -> np.ndarray:
    config = config or ContextConfig()
    out = np.empty((len(alerts), config.width))
    for i, vec in enumerate(compute_context_stream(alerts, config)):
        out[i] = vec
    return out


def _exact_mean(values: Iterable[float]) -> float:
    """Correctly rounded mean of doubles (0.0 when empty)."""
    vals = [Fraction(v) for v in values]
    return float(sum(vals, Fraction(0)) / len(vals)) if vals else 0.0


def brute_force_context(
    alerts: Sequence[RawAlert], index: int, config: ContextConfig | None = None
) -> np.ndarray:
    """Reference implementation: rescan the prefix ``alerts[:index+1]``."""
    config = config or ContextConfig()
    if not 0 <= index < len(alerts):
        raise IndexError(f"index {index} out of range for {len(alerts)} alerts")
    a = alerts[index]
    t = a.event_time
    prefix = alerts[: index + 1]
    out = np.empty(config.width)
    nw = len(config.windows)
    for k, w in enumerate(config.windows):
        win = [b for b in prefix if t - w < b.event_time <= t]
        on_cust = [b for b in win if b.customer_id == a.customer_id]
        on_mach = [b for b in win if b.machine_id == a.machine_id]
        by_sens = [b for b in win if b.sensor_id == a.sensor_id]
        vals = {
            Predicate.CUSTOMER_ALERTS: len(on_cust),
            Predicate.MACHINE_ALERTS: len(on_mach),
            Predicate.SENSOR_ALERTS: len(by_sens),
            Predicate.MACHINE_MEAN_SEVERITY: _exact_mean(b.severity for b in on_mach),
            Predicate.SENSOR_MEAN_SEVERITY: _exact_mean(b.severity for b in by_sens),
            Predicate.CUSTOMER_DISTINCT_SENSORS: len({b.sensor_id for b in on_cust}),
            Predicate.CUSTOMER_DISTINCT_MACHINES: len({b.machine_id for b in on_cust}),
            Predicate.SENSOR_DISTINCT_MACHINES: len({b.machine_id for b in by_sens}),
            Predicate.SENSOR_DISTINCT_CUSTOMERS: len({b.customer_id for b in by_sens}),
            Predicate.CUSTOMER_SENSOR_ALERTS: sum(1 for b in on_cust if b.sensor_id == a.sensor_id),
        }
        for i, p in enumerate(config.predicates):
            out[i * nw + k] = vals[p]
    return out
