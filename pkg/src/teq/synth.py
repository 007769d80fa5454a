"""Seeded synthetic SOC alert stream with planted attacks, storms and drift.

The generator works in *episodes*: an attack on one machine, an antivirus
catch that was contained, a burst of identical false positives across a
customer's estate ("storm"), or isolated background noise. Episodes emit
alerts whose bodies follow per-sensor schemas with sparse optional fields.
After grouping the merged stream into incidents, an incident is actionable
iff it contains at least one alert from an attack episode.

A drift shock (``drift_day``) retires the original attack recipe, introduces
a new one with unseen vocabulary and a new body field, and adds a benign
admin-tooling archetype that reuses the old attack vocabulary.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .alerts import (
    Incident,
    LabelRule,
    RawAlert,
    format_time,
    group_incidents,
    write_alerts,
    write_incident_labels,
)

DAY = 86400
DEFAULT_START = 1672531200  # 2023-01-01T00:00:00Z

FAMILIES = ("edr", "av", "netfw", "ids", "auth", "proxy", "email", "cloud")

ARCHETYPES = ("attack_a", "attack_b", "contained", "storm", "chatty", "noise", "admin_tooling")
ACTIONABLE = frozenset({"attack_a", "attack_b"})


def _names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i:02d}" for i in range(n)]


# Categorical vocabularies; the first entries are the common ones.
VOCAB: dict[str, list[str]] = {
    "process": [
        "svchost.exe", "chrome.exe", "outlook.exe", "explorer.exe", "teams.exe",
        "java.exe", "python.exe", "msedge.exe", "winword.exe", "excel.exe",
        "cmd.exe", "powershell.exe", "wscript.exe", "notepad.exe", "onedrive.exe",
    ] + _names("app", 10),
    "parent": ["explorer.exe", "services.exe", "cmd.exe", "winword.exe", "svchost.exe", "userinit.exe"]
    + _names("launcher", 4),
    "os": ["win10", "win11", "server2019", "server2022", "ubuntu22", "macos13"],
    "country": ["US", "GB", "DE", "FR", "NL", "IN", "BR", "JP"] + _names("cc", 8),
    "protocol": ["tcp", "udp", "icmp"],
    "direction": ["inbound", "outbound", "lateral"],
    "verdict": ["clean", "suspicious", "spam", "phish"],
    "attachment": ["none", "pdf", "docx", "xlsm", "zip", "iso", "html"],
    "auth_method": ["password", "kerberos", "ntlm", "saml", "oauth"],
    "auth_result": ["success", "failure", "locked"],
    "url_category": ["business", "news", "social", "streaming", "uncategorized", "newly_registered", "file_sharing"],
    "http_method": ["GET", "POST", "PUT", "CONNECT"],
    "cloud_service": ["storage", "compute", "iam", "keyvault", "functions"],
    "api_call": ["ListBuckets", "GetObject", "CreateUser", "AssumeRole", "PutPolicy", "DeleteTrail"]
    + _names("Api", 4),
    "region": ["us-east", "us-west", "eu-west", "eu-central", "ap-south"],
    "engine": ["9.1", "9.2", "9.3", "10.0"],
    "threat_family": ["emotet", "qakbot", "agenttesla", "redline", "formbook", "lokibot", "pua_bundler", "coinminer"]
    + _names("heur", 4),
    "category": ["policy", "trojan", "exploit", "scan", "dos", "info_leak"],
    "tag": ["prod", "dev", "vip", "server", "laptop", "kiosk"],
}

BENIGN_RULES = {f: _names(f"{f}_rule", 8) for f in FAMILIES}
SUPPORT_A = ["encoded_command", "suspicious_powershell", "unusual_logon", "new_service_install", "internal_port_scan"]
SMOKING_A = ["lsass_memory_access", "credential_dumping", "shadow_copy_delete"]
SUPPORT_B = ["lolbin_execution", "script_host_spawn", "token_replay"]
SMOKING_B = ["dll_sideload", "wmi_persistence", "oauth_consent_abuse"]
ATTACK_PROC_A = ["rundll32.exe", "procdump.exe", "vssadmin.exe"]
ATTACK_PROC_B = ["mshta.exe", "regsvr32.exe", "msbuild.exe"]
TECHNIQUES_A = ["T1003", "T1490", "T1059"]
ADMIN_PARENT = "ccmexec.exe"

# (path, kind, vocabulary or numeric recipe). Kinds: cat, num, bool, hash, id, array.
SCHEMAS: dict[str, list[tuple[str, str, Any]]] = {
    "edr": [
        ("rule.name", "rule", None),
        ("process.name", "cat", "process"),
        ("process.parent", "cat", "parent"),
        ("process.cmdline_len", "num", (4.0, 0.8)),
        ("process.integrity", "cat", ["low", "medium", "high", "system"]),
        ("process_guid", "id", None),
        ("file.signed", "bool", 0.8),
        ("file.sha256", "hash", None),
        ("host.os", "cat", "os"),
        ("user.is_admin", "bool", 0.2),
        ("tags", "array", "tag"),
        ("rule.technique", "cat", ["T1204", "T1547", "T1021", "T1105"]),
        ("event.timestamp", "id", None),
    ],
    "av": [
        ("rule.name", "rule", None),
        ("threat.name", "hash", None),
        ("threat.family", "cat", "threat_family"),
        ("action", "cat", ["detected", "blocked", "quarantined", "allowed"]),
        ("file.path_depth", "num", (1.6, 0.4)),
        ("file.sha256", "hash", None),
        ("scan.engine", "cat", "engine"),
        ("host.os", "cat", "os"),
    ],
    "netfw": [
        ("rule.name", "rule", None),
        ("network.dst_port", "port", None),
        ("network.protocol", "cat", "protocol"),
        ("network.direction", "cat", "direction"),
        ("network.bytes_out", "num", (8.0, 2.0)),
        ("geo.country", "cat", "country"),
        ("action", "cat", ["allowed", "blocked"]),
        ("sessionId", "id", None),
    ],
    "ids": [
        ("rule.name", "rule", None),
        ("signature.category", "cat", "category"),
        ("network.dst_port", "port", None),
        ("payload.size", "num", (6.0, 1.5)),
        ("network.direction", "cat", "direction"),
        ("flow.packets", "num", (3.0, 1.0)),
    ],
    "auth": [
        ("rule.name", "rule", None),
        ("auth.method", "cat", "auth_method"),
        ("auth.result", "cat", "auth_result"),
        ("auth.failures", "count", 1.5),
        ("user.is_admin", "bool", 0.15),
        ("geo.country", "cat", "country"),
        ("logon_epoch", "id", None),
    ],
    "proxy": [
        ("rule.name", "rule", None),
        ("url.category", "cat", "url_category"),
        ("http.status", "cat_num", [200, 204, 301, 302, 403, 404, 500]),
        ("http.method", "cat", "http_method"),
        ("network.bytes_in", "num", (9.0, 2.0)),
        ("url.domain", "hash", None),
    ],
    "email": [
        ("rule.name", "rule", None),
        ("email.verdict", "cat", "verdict"),
        ("attachment.type", "cat", "attachment"),
        ("sender.reputation", "num", (3.0, 0.6)),
        ("email.recipients", "count", 2.0),
        ("messageGuid", "id", None),
    ],
    "cloud": [
        ("rule.name", "rule", None),
        ("cloud.service", "cat", "cloud_service"),
        ("api.call", "cat", "api_call"),
        ("cloud.region", "cat", "region"),
        ("auth.mfa", "bool", 0.7),
        ("geo.country", "cat", "country"),
        ("request_uuid", "id", None),
    ],
}

# Fields added to every schema with a high missing ratio (sparse columns).
SPARSE_FIELDS = [("ext.field_%02d" % i, "cat", [f"v{j}" for j in range(3 + i % 3)]) for i in range(12)]

# Incident-share mixture before the shock; "storm" is counted per machine hit.
BASE_MIX = {"attack": 0.10, "contained": 0.07, "storm": 0.45, "chatty": 0.06, "noise": 0.32}
ADMIN_SHARE = 0.06  # taken out of "noise" after the shock
MEAN_ALERTS = {"attack": 4.0, "contained": 2.0, "storm": 1.0, "chatty": 4.5, "noise": 1.4, "admin_tooling": 3.0}
QUIET_SHARE = 0.15  # attacks with no distinctive alert
LATERAL_MEAN_HOSTS = 3 + 7 * 0.5  # machines hit per post-shock attack
LATERAL_SHARE = 0.6  # of post-shock attack starts


@dataclass
class SynthConfig:
    """Generator parameters; everything derives from ``seed``."""

    seed: int = 20230101
    months: int = 8
    month_days: int = 30
    alerts: int = 50_000
    customers: int = 100
    zipf_exponent: float = 1.2
    machines: int = 3000
    sensors: int = 24
    positive_fraction: float = 0.10
    drift_day: float | None = 170.0
    label_noise: float = 0.0
    sparse_missing: tuple[float, float] = (0.6, 0.97)
    storm_mean_size: float = 20.0
    queue_mu: float = math.log(1800.0)
    queue_sigma: float = 1.0
    start: int = DEFAULT_START

    def __post_init__(self):
        if self.months < 1 or self.month_days < 1:
            raise ValueError("months and month_days must be positive")
        if self.alerts < 10:
            raise ValueError("alerts must be at least 10")
        if self.customers < 1 or self.machines < self.customers:
            raise ValueError("need at least one customer and one machine per customer")
        if self.sensors < len(FAMILIES):
            raise ValueError(f"need at least {len(FAMILIES)} sensors (one per family)")
        if not 0.0 < self.positive_fraction < 0.5:
            raise ValueError("positive_fraction must be in (0, 0.5); attack archetypes need positives")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must be in [0, 0.5)")
        if self.drift_day is not None and not 0 < self.drift_day < self.months * self.month_days:
            raise ValueError("drift_day must fall inside the generated span")
        lo, hi = self.sparse_missing
        if not 0.5 < lo <= hi < 1.0:
            raise ValueError("sparse_missing must satisfy 0.5 < lo <= hi < 1")
        self.sparse_missing = (float(lo), float(hi))

    @property
    def span(self) -> int:
        return self.months * self.month_days * DAY

    def month_range(self, month: int) -> tuple[int, int]:
        """``[start, end)`` of the 1-based month."""
        lo = self.start + (month - 1) * self.month_days * DAY
        return lo, lo + self.month_days * DAY

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown synth option(s): {', '.join(unknown)}")
        doc = dict(doc)
        if "sparse_missing" in doc:
            doc["sparse_missing"] = tuple(doc["sparse_missing"])
        return cls(**doc)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sparse_missing"] = list(self.sparse_missing)
        return out


@dataclass(frozen=True)
class GroundTruth:
    incident_id: str
    label: bool
    archetype: str
    evidence_alert_id: str | None
    queue_time: float

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticDataset:
    alerts: list[RawAlert]
    incidents: list[Incident]
    truth: dict[str, GroundTruth]
    config: SynthConfig
    summary: dict = field(default_factory=dict)
    episodes: list[dict] = field(default_factory=list, repr=False)  # archetype and start time


def zipf_weights(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    return w / w.sum()


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation with at least one unit per slot."""
    n = weights.size
    raw = weights * (total - n)
    base = np.floor(raw).astype(np.int64)
    short = (total - n) - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base + 1


class _Uniforms:
    """Buffered U[0,1) draws; far cheaper than one generator call per field."""

    def __init__(self, rng: np.random.Generator, size: int = 1 << 16):
        self.rng = rng
        self.size = size
        self.buf = rng.random(size).tolist()
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == self.size:
            self.buf = self.rng.random(self.size).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u

    def below(self, n: int) -> int:
        return min(int(self() * n), n - 1)

    def weighted(self, cdf: list[float]) -> int:
        return min(bisect.bisect_right(cdf, self() * cdf[-1]), len(cdf) - 1)


class _Sensor:
    __slots__ = ("sensor_id", "family", "fields", "rule_weights")

    def __init__(self, sensor_id, family, missing, rule_weights):
        self.sensor_id = sensor_id
        self.family = family
        self.fields = [(p, k, spec, missing[p]) for p, k, spec in SCHEMAS[family] + SPARSE_FIELDS]
        self.rule_weights = rule_weights


class _Builder:
    """Stateful episode/alert emitter; one instance per generation run."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        rng = self.rng
        self.u = _Uniforms(np.random.default_rng([cfg.seed, 2]))
        self.cust_w = zipf_weights(cfg.customers, cfg.zipf_exponent)
        self.customers = [f"cust-{i:03d}" for i in range(cfg.customers)]
        counts = _allocate(cfg.machines, self.cust_w)
        self.machines: list[list[str]] = []
        k = 0
        for c in counts:
            self.machines.append([f"host-{j:05d}" for j in range(k, k + int(c))])
            k += int(c)
        self.sensors: list[_Sensor] = []
        for i in range(cfg.sensors):
            fam = FAMILIES[i % len(FAMILIES)]
            missing = {}
            for path, kind, _ in SCHEMAS[fam]:
                missing[path] = 0.0 if path == "rule.name" else float(rng.uniform(0.0, 0.15))
            lo, hi = cfg.sparse_missing
            for path, _, _ in SPARSE_FIELDS:
                missing[path] = float(rng.uniform(lo, hi))
            cdf = np.cumsum(zipf_weights(len(BENIGN_RULES[fam]), 1.0)).tolist()
            self.sensors.append(_Sensor(f"sensor-{i:02d}", fam, missing, cdf))
        self.by_family = {f: [s for s in self.sensors if s.family == f] for f in FAMILIES}
        self.cust_cdf = np.cumsum(self.cust_w).tolist()
        self.drift_t = None if cfg.drift_day is None else cfg.start + cfg.drift_day * DAY
        self.vocab_cdf = {k: np.cumsum(zipf_weights(len(v), 1.1)).tolist() for k, v in VOCAB.items()}
        self.events: list[tuple] = []  # (time, seq, sensor, machine, customer, severity, body, episode)
        self.episodes: list[dict] = []
        self.seq = 0

    # ---- values ---------------------------------------------------------
    def pick(self, vocab) -> str:
        if isinstance(vocab, str):
            return VOCAB[vocab][self.u.weighted(self.vocab_cdf[vocab])]
        return vocab[self.u.below(len(vocab))]

    def field_value(self, kind: str, spec: Any):
        u = self.u
        if kind == "cat":
            return self.pick(spec)
        if kind == "num":
            mu, sigma = spec
            return round(math.exp(mu + sigma * _normal(u)), 1)
        if kind == "count":
            return _poisson(u, spec)
        if kind == "bool":
            return u() < spec
        if kind == "hash":
            return "%013x" % int(u() * 2**52)
        if kind == "id":
            return 10**9 + int(u() * 9 * 10**9)
        if kind == "port":
            if u() < 0.85:
                return _PORTS[u.below(len(_PORTS))]
            return 1024 + u.below(64512)
        if kind == "cat_num":
            return spec[u.below(len(spec))]
        if kind == "array":
            k = u.below(3)
            return sorted({self.pick(spec) for _ in range(k)})
        raise ValueError(kind)

    def body(self, sensor: _Sensor, rule: str, overrides: dict, t: float) -> dict:
        flat: dict = {}
        u = self.u
        for path, kind, spec, miss in sensor.fields:
            if path in overrides:
                value = overrides[path]
            elif kind == "rule":
                value = rule
            elif u() < miss:
                continue
            else:
                value = self.field_value(kind, spec)
            flat[path] = value
        for path, value in overrides.items():
            if path not in flat:
                flat[path] = value
        if self.drift_t is not None and t >= self.drift_t:
            flat["detector.version"] = "v2"
        return _nest(flat)

    def emit(self, t: float, sensor: _Sensor, machine: str, customer: str, severity: float,
             rule: str, overrides: dict, episode: int, evidence: bool = False) -> None:
        t = int(t)
        if t >= self.cfg.start + self.cfg.span:
            return
        body = self.body(sensor, rule, overrides, t)
        self.events.append((t, self.seq, sensor.sensor_id, machine, customer, round(severity, 2), body, episode, evidence))
        self.seq += 1

    def _v2_false_positive(self, sensor: _Sensor, t: float):
        """After the shock the new detector rules also fire on benign activity."""
        if self.drift_t is None or t < self.drift_t or sensor.family not in ("edr", "cloud") or self.u() >= 0.3:
            return None
        ov = {"script.amsi_verdict": "suspicious"}
        if self.u() < 0.5:
            ov["process.name"] = self.pick(ATTACK_PROC_B)
        return self.pick(SUPPORT_B), ov

    # ---- episodes -------------------------------------------------------
    def _new_episode(self, archetype: str, t: float) -> int:
        self.episodes.append({"archetype": archetype, "time": t})
        return len(self.episodes) - 1

    def _customer(self) -> int:
        return self.u.weighted(self.cust_cdf)

    def _machine(self, c: int) -> str:
        ms = self.machines[c]
        return ms[int(self.rng.integers(len(ms)))]

    def _sensor(self, families) -> _Sensor:
        fam = families[int(self.rng.integers(len(families)))]
        pool = self.by_family[fam]
        return pool[int(self.rng.integers(len(pool)))]

    def attack(self, t: float) -> None:
        """Hands-on-keyboard intrusion on one machine with one planted smoking gun."""
        rng = self.rng
        u = self.u
        ep = self._new_episode("attack_a", t)
        c = self._customer()
        m = self._machine(c)
        if u() < QUIET_SHARE:
            self._quiet(t, c, m, ep)
            return
        k = 2 + int(rng.binomial(6, 1.0 / 3.0))
        gun = int(rng.integers(k))
        stealth = u() < 0.3
        times = t + np.cumsum(np.r_[0.0, rng.exponential(2700.0, k - 1)])
        times = np.minimum(times, t + 20 * 3600)
        for j in range(k):
            if j == gun:
                sensor = self._sensor(("edr",))
                rule = self.pick(SMOKING_A)
                ov = {"process.name": self.pick(ATTACK_PROC_A), "rule.technique": self.pick(TECHNIQUES_A),
                      "file.signed": False, "process.integrity": "high"}
                if stealth:
                    rule = self.pick(SUPPORT_A)
                    ov = {}
                self.emit(times[j], sensor, m, self.customers[c], rng.uniform(3.5, 8.5), rule, ov, ep, evidence=True)
            else:
                sensor = self._sensor(("edr", "ids", "auth", "netfw", "proxy"))
                rule = self.pick(SUPPORT_A) if u() < 0.5 else self.pick(BENIGN_RULES[sensor.family])
                ov = {}
                if sensor.family == "edr" and u() < 0.5:
                    ov["process.name"] = "powershell.exe"
                if sensor.family == "netfw":
                    ov["network.direction"] = "lateral"
                self.emit(times[j], sensor, m, self.customers[c], rng.uniform(1.5, 6.5), rule, ov, ep)

    def _quiet(self, t: float, c: int, m: str, ep: int) -> None:
        # low-and-slow: looks like ordinary noise apart from a weak tilt to SUPPORT_A
        rng = self.rng
        k = 1 + int(rng.binomial(2, 0.3))
        for j in range(k):
            sensor = self.sensors[self.u.below(len(self.sensors))]
            if self.u() < 0.35 and sensor.family in ("edr", "ids", "auth", "netfw", "proxy"):
                rule = self.pick(SUPPORT_A)
            else:
                rule = BENIGN_RULES[sensor.family][self.u.weighted(sensor.rule_weights)]
            self.emit(t + j * rng.exponential(3600.0), sensor, m, self.customers[c], rng.uniform(1.0, 7.0), rule, {}, ep)

    def lateral_attack(self, t: float) -> None:
        """Post-shock recipe: fast spread over several machines of one estate."""
        rng = self.rng
        u = self.u
        ep = self._new_episode("attack_b", t)
        c = self._customer()
        pool = self.machines[c]
        hosts = min(3 + int(rng.binomial(7, 0.5)), len(pool))
        hit = rng.choice(len(pool), size=hosts, replace=False)
        for mi in hit:
            m = pool[int(mi)]
            t0 = t + rng.uniform(0.0, 1200.0)
            k = 1 + int(u() < 0.4)
            gun_at = 1 if k == 2 and u() < 0.8 else -1  # arrival first, payload later
            for j in range(k):
                sensor = self._sensor(("edr", "cloud"))
                gun = j == gun_at
                rule = self.pick(SMOKING_B if gun else SUPPORT_B)
                ov = {"script.amsi_verdict": self.pick(["suspicious", "malicious"]), "rule.technique": _DROP}
                if u() < 0.6:
                    ov["process.name"] = self.pick(ATTACK_PROC_B)
                self.emit(t0 + j * rng.uniform(300.0, 1200.0), sensor, m, self.customers[c],
                          rng.uniform(2.0, 7.5), rule, ov, ep, evidence=gun)

    def chatty(self, t: float) -> None:
        """A misbehaving host: repeated benign alerts over several hours."""
        rng = self.rng
        u = self.u
        ep = self._new_episode("chatty", t)
        c = self._customer()
        m = self._machine(c)
        k = 2 + int(rng.binomial(8, 0.3))
        sensors = [self.sensors[u.below(len(self.sensors))] for _ in range(2)]
        times = t + np.cumsum(np.r_[0.0, rng.exponential(2400.0, k - 1)])
        times = np.minimum(times, t + 20 * 3600)
        for j in range(k):
            sensor = sensors[u.below(2)]
            fp = self._v2_false_positive(sensor, times[j])
            if fp is not None:
                self.emit(times[j], sensor, m, self.customers[c], rng.uniform(2.0, 7.5), fp[0], fp[1], ep)
                continue
            if u() < 0.2 and sensor.family in ("edr", "ids", "auth", "netfw", "proxy"):
                rule = self.pick(SUPPORT_A)
            else:
                rule = BENIGN_RULES[sensor.family][self.u.weighted(sensor.rule_weights)]
            self.emit(times[j], sensor, m, self.customers[c], rng.uniform(1.0, 7.5), rule, {}, ep)

    def admin_tooling(self, t: float) -> None:
        rng = self.rng
        ep = self._new_episode("admin_tooling", t)
        c = self._customer()
        m = self._machine(c)
        k = 2 + int(rng.binomial(4, 0.25))
        times = t + np.cumsum(np.r_[0.0, rng.exponential(900.0, k - 1)])
        for j in range(k):
            sensor = self._sensor(("edr",))
            rule = self.pick(SMOKING_A if j == 0 else SUPPORT_A)
            ov = {"process.name": self.pick(ATTACK_PROC_A), "process.parent": ADMIN_PARENT,
                  "file.signed": True, "rule.technique": self.pick(TECHNIQUES_A), "user.is_admin": True}
            self.emit(times[j], sensor, m, self.customers[c], rng.uniform(4.0, 8.5), rule, ov, ep)

    def contained(self, t: float) -> None:
        rng = self.rng
        ep = self._new_episode("contained", t)
        c = self._customer()
        m = self._machine(c)
        k = 1 + int(rng.binomial(2, 0.5))
        fam = self.pick("threat_family")
        for j in range(k):
            sensor = self._sensor(("av",))
            ov = {"action": self.pick(["blocked", "quarantined"]), "threat.family": fam}
            self.emit(t + 30 * j + int(rng.integers(0, 30)), sensor, m, self.customers[c],
                      rng.uniform(5.5, 10.0), self.pick(BENIGN_RULES["av"][:6]), ov, ep)

    def noise(self, t: float) -> None:
        rng = self.rng
        ep = self._new_episode("noise", t)
        c = self._customer()
        m = self._machine(c)
        k = 1 + int(rng.binomial(2, 0.2))
        for j in range(k):
            sensor = self.sensors[int(rng.integers(len(self.sensors)))]
            tj = t + j * rng.exponential(3600.0)
            fp = self._v2_false_positive(sensor, tj)
            if fp is not None:
                self.emit(tj, sensor, m, self.customers[c], rng.uniform(2.0, 7.5), fp[0], fp[1], ep)
                continue
            if self.u() < 0.2 and sensor.family in ("edr", "ids", "auth", "netfw", "proxy"):
                rule = self.pick(SUPPORT_A)
            else:
                rule = BENIGN_RULES[sensor.family][self.u.weighted(sensor.rule_weights)]
            self.emit(tj, sensor, m, self.customers[c], rng.uniform(1.0, 7.0), rule, {}, ep)

    def storm(self, t: float) -> None:
        rng = self.rng
        ep = self._new_episode("storm", t)
        c = self._customer()
        sensor = self.sensors[int(rng.integers(len(self.sensors)))]
        rule = BENIGN_RULES[sensor.family][int(rng.integers(len(BENIGN_RULES[sensor.family])))]
        sev = rng.uniform(2.0, 8.0)
        size = 1 + int(rng.geometric(1.0 / self.cfg.storm_mean_size))
        pool = self.machines[c]
        hit = rng.choice(len(pool), size=min(size, len(pool)), replace=False)
        dur = rng.uniform(120.0, 1800.0)
        offsets = np.sort(rng.uniform(0.0, dur, hit.size))
        shared = {}
        for path, kind, spec in SCHEMAS[sensor.family]:
            if kind in ("cat", "cat_num") and rng.random() < 0.5:
                shared[path] = self.field_value(kind, spec)
        for j, mi in enumerate(hit):
            self.emit(t + offsets[j], sensor, pool[int(mi)], self.customers[c], sev, rule, dict(shared), ep)


_PORTS = [443, 80, 53, 22, 3389, 445, 8080, 25]


def _normal(u: _Uniforms) -> float:
    # Box-Muller, one variate per call
    return math.sqrt(-2.0 * math.log(1.0 - u())) * math.cos(2.0 * math.pi * u())


def _poisson(u: _Uniforms, lam: float) -> int:
    # inversion; only used with small means
    k = 0
    p = math.exp(-lam)
    c = p
    x = u()
    while x > c and k < 1000:
        k += 1
        p *= lam / k
        c += p
    return k


class _DropMarker:
    def __repr__(self):
        return "DROP"


_DROP = _DropMarker()


_SPLIT_CACHE: dict[str, list[str]] = {}


def _nest(flat: dict) -> dict:
    """Dotted-path mapping to a nested document; ``_DROP`` values are omitted."""
    doc: dict = {}
    for path, value in flat.items():
        if value is _DROP:
            continue
        keys = _SPLIT_CACHE.get(path)
        if keys is None:
            keys = _SPLIT_CACHE[path] = path.split(".")
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return doc


def _incident_rates(cfg: SynthConfig) -> dict[str, float]:
    """Expected episode starts per day for the pre-shock mixture."""
    mix = dict(BASE_MIX)
    mix["noise"] += mix["attack"] - cfg.positive_fraction
    mix["attack"] = cfg.positive_fraction
    alerts_per_inc = sum(mix[k] * MEAN_ALERTS[k] for k in mix)
    days = cfg.months * cfg.month_days
    inc_per_day = cfg.alerts / alerts_per_inc / days
    rates = {k: mix[k] * inc_per_day for k in mix}
    rates["storm"] /= cfg.storm_mean_size  # one storm hits many machines
    return rates


def generate(cfg: SynthConfig) -> SyntheticDataset:
    """Generate alerts, labeled incidents and ground truth in memory."""
    b = _Builder(cfg)
    rng = b.rng
    rates = _incident_rates(cfg)
    days = cfg.months * cfg.month_days
    drift_t = None if cfg.drift_day is None else cfg.start + cfg.drift_day * DAY
    starts = []
    for kind in ("attack", "contained", "storm", "chatty", "noise"):
        n = int(rng.poisson(rates[kind] * days))
        ts = np.sort(rng.uniform(cfg.start, cfg.start + cfg.span, n))
        starts.extend((float(x), kind) for x in ts)
    starts.sort(key=lambda s: (s[0], s[1]))
    for t, kind in starts:
        drifted = drift_t is not None and t >= drift_t
        if kind == "attack":
            if not drifted or b.u() >= LATERAL_SHARE:
                b.attack(t)
            elif b.u() < 1.0 / LATERAL_MEAN_HOSTS:
                b.lateral_attack(t)
        elif kind == "contained":
            b.contained(t)
        elif kind == "storm":
            b.storm(t)
        elif kind == "chatty":
            b.chatty(t)
        elif drifted and b.u() < ADMIN_SHARE / BASE_MIX["noise"]:
            b.admin_tooling(t)
        else:
            b.noise(t)

    b.events.sort(key=lambda e: (e[0], e[1]))
    alerts = []
    episode_of: dict[str, int] = {}
    evidence: set[str] = set()
    for i, (t, _, sid, m, c, sev, body, ep, is_gun) in enumerate(b.events):
        aid = f"A{i:07d}"
        alerts.append(RawAlert(aid, t, c, m, sid, float(sev), body))
        episode_of[aid] = ep
        if is_gun:
            evidence.add(aid)

    incidents = group_incidents(alerts)
    qrng = np.random.default_rng([cfg.seed, 1])
    labeled = []
    truth = {}
    for inc in incidents:
        arches = [b.episodes[episode_of[a]]["archetype"] for a in inc.alert_ids]
        attack_ids = [a for a, ar in zip(inc.alert_ids, arches) if ar in ACTIONABLE]
        positive = bool(attack_ids)
        if positive:
            archetype = next(ar for ar in arches if ar in ACTIONABLE)
            guns = [a for a in attack_ids if a in evidence]
            ev = guns[0] if guns else attack_ids[0]
            rule = LabelRule.MANUAL_REMEDIATION
        else:
            archetype = arches[0]
            ev = None
            rule = LabelRule.CONTAINED_TRUE_POSITIVE if "contained" in arches else LabelRule.FALSE_ALERT
        label = positive
        if cfg.label_noise and qrng.random() < cfg.label_noise:
            label = not label
            rule = LabelRule.MANUAL_REMEDIATION if label else LabelRule.FALSE_ALERT
        qt = round(float(qrng.lognormal(cfg.queue_mu, cfg.queue_sigma)), 1)
        labeled.append(Incident(inc.incident_id, inc.machine_id, inc.customer_id, inc.alert_ids,
                                inc.anchor_time, inc.last_time, label, rule, qt))
        truth[inc.incident_id] = GroundTruth(inc.incident_id, label, archetype, ev, qt)

    summary = summarize_dataset(cfg, alerts, labeled, [e["archetype"] for e in b.episodes])
    return SyntheticDataset(alerts, labeled, truth, cfg, summary, b.episodes)


def summarize_dataset(cfg: SynthConfig, alerts, incidents, episode_archetypes) -> dict:
    per_cust: dict[str, int] = {}
    for a in alerts:
        per_cust[a.customer_id] = per_cust.get(a.customer_id, 0) + 1
    top = max(per_cust.values()) if per_cust else 0
    return {
        "alerts": len(alerts),
        "incidents": len(incidents),
        "positive_incidents": sum(1 for i in incidents if i.label),
        "positive_alerts": sum(len(i) for i in incidents if i.label),
        "episodes": {k: episode_archetypes.count(k) for k in ARCHETYPES},
        "top_customer_share": top / max(len(alerts), 1),
        "first_time": format_time(alerts[0].event_time) if alerts else None,
        "last_time": format_time(alerts[-1].event_time) if alerts else None,
    }


def write_dataset(ds: SyntheticDataset, out_dir: str | Path) -> dict[str, Path]:
    """Write ``alerts.jsonl``, ``incidents.jsonl``, ``ground_truth.jsonl`` and ``dataset.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "alerts": out / "alerts.jsonl",
        "incidents": out / "incidents.jsonl",
        "ground_truth": out / "ground_truth.jsonl",
        "dataset": out / "dataset.json",
    }
    write_alerts(ds.alerts, paths["alerts"])
    write_incident_labels(ds.incidents, paths["incidents"])
    with paths["ground_truth"].open("w", encoding="utf-8") as fh:
        for inc in ds.incidents:
            fh.write(json.dumps(ds.truth[inc.incident_id].to_record(), sort_keys=True, separators=(",", ":")) + "\n")
    meta = {
        "format": "teq-dataset",
        "version": 1,
        "config": ds.config.to_dict(),
        "months": [list(ds.config.month_range(m)) for m in range(1, ds.config.months + 1)],
        "summary": ds.summary,
    }
    paths["dataset"].write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return paths


def generate_dataset(cfg: SynthConfig, out_dir: str | Path) -> dict[str, Path]:
    return write_dataset(generate(cfg), out_dir)


def read_ground_truth(path: str | Path) -> dict[str, GroundTruth]:
    out = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["incident_id"]] = GroundTruth(**rec)
    return out
