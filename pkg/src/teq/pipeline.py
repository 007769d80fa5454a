"""Config loading, stage orchestration and the run directory."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import re
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__, metrics
from .alerts import group_incidents, label_incidents, load_alerts, read_incident_labels
from .context import ContextConfig, context_matrix
from .ensemble import metrics_table_csv
from .experiment import (
    Corpus,
    DecayReport,
    Timeline,
    WindowResult,
    content_record,
    encode_test,
    run_fixed_decay,
    run_window,
    selected_row,
)
from .explain import permutation_importance, shapley_importance
from .featurize import fit_feature_spec
from .learners import Algorithm, TrainConfig
from .synth import SynthConfig, generate_dataset, read_ground_truth
from .triage import (
    DEFAULT_SLICES,
    QueuedIncident,
    TriageReport,
    inspection_summary,
    queue_experiment,
    rank_alerts_within_incident,
    select_threshold_at_recall,
    suppress_incidents,
)

logger = logging.getLogger(__name__)

STAGES = ("synth", "ingest", "featurize", "context", "zoo", "select", "triage", "decay", "explain")


class ConfigError(ValueError):
    """Invalid pipeline configuration; raised before any work starts."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_duration(value: Any) -> int:
    """``3600``, ``"3600"``, ``"60m"``, ``"1h"`` or ``"1d"`` to seconds."""
    if isinstance(value, bool):
        raise ValueError(f"bad duration {value!r}")
    if isinstance(value, (int, float)):
        secs = int(value)
    else:
        m = re.fullmatch(r"\s*(\d+)\s*([smhd]?)\s*", str(value))
        if not m:
            raise ValueError(f"bad duration {value!r}")
        secs = int(m.group(1)) * _UNITS[m.group(2) or "s"]
    if secs <= 0:
        raise ValueError(f"duration must be positive: {value!r}")
    return secs


def _section(doc: dict, key: str, allowed: set[str]) -> dict:
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{key}: unknown key(s) {sorted(extra)}")
    return sec


@dataclass(frozen=True)
class ZooConfig:
    train_months: int = 5
    windows: int = 3
    rare_threshold: int = 50
    params: dict = field(default_factory=dict)  # algorithm -> overrides


@dataclass(frozen=True)
class TriageConfig:
    slices: tuple[int, ...] = DEFAULT_SLICES
    target_recall: float = 0.95


@dataclass(frozen=True)
class ExplainConfig:
    methods: tuple[str, ...] = ("permutation", "shapley")
    rows: int = 600
    repeats: int = 3
    points: int = 10
    background: int = 20
    samples: int = 40
    top: int = 30


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    run_dir: Path
    dataset_path: Path
    generate: bool
    synth: SynthConfig
    context: ContextConfig = ContextConfig()
    zoo: ZooConfig = ZooConfig()
    triage: TriageConfig = TriageConfig()
    explain: ExplainConfig = ExplainConfig()
    source: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, doc: Any, base_dir: str | Path = ".") -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        extra = set(doc) - {"seed", "run_dir", "dataset", "synth", "context", "zoo", "triage", "explain"}
        if extra:
            raise ConfigError(f"unknown top-level key(s) {sorted(extra)}")
        base = Path(base_dir)
        try:
            seed = int(doc.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {doc.get('seed')!r}") from None

        ds = _section(doc, "dataset", {"path", "generate"})
        if not ds.get("path"):
            raise ConfigError("dataset.path is required")
        generate = bool(ds.get("generate", False))
        dpath = base / str(ds["path"])
        if not generate and not (dpath / "alerts.jsonl").is_file():
            raise ConfigError(f"dataset.path {dpath} has no alerts.jsonl and dataset.generate is false")

        sy = dict(_section(doc, "synth", set(SynthConfig.__dataclass_fields__)))
        sy.setdefault("seed", seed)
        try:
            synth = SynthConfig.from_dict(sy)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"synth: {exc}") from None

        cx = _section(doc, "context", {"windows"})
        try:
            context = ContextConfig(tuple(parse_duration(w) for w in cx["windows"])) if "windows" in cx else ContextConfig()
        except ValueError as exc:
            raise ConfigError(f"context: {exc}") from None

        zo = _section(doc, "zoo", {"train_months", "windows", "rare_threshold", "params"})
        params = zo.get("params") or {}
        for algo, over in params.items():
            try:
                TrainConfig(Algorithm.parse(algo), 0, dict(over or {}))
            except ValueError as exc:
                raise ConfigError(f"zoo.params.{algo}: {exc}") from None
        zoo = ZooConfig(int(zo.get("train_months", 5)), int(zo.get("windows", 3)),
                        int(zo.get("rare_threshold", 50)),
                        {Algorithm.parse(a).value: dict(o or {}) for a, o in params.items()})
        if zoo.train_months < 1 or zoo.windows < 1 or zoo.rare_threshold < 1:
            raise ConfigError("zoo: train_months, windows and rare_threshold must be >= 1")
        if generate and synth.months < zoo.train_months + zoo.windows:
            raise ConfigError(f"synth.months={synth.months} too short for {zoo.train_months}+{zoo.windows} months")

        tr = _section(doc, "triage", {"slices", "target_recall"})
        try:
            slices = tuple(parse_duration(s) for s in tr.get("slices", DEFAULT_SLICES))
        except ValueError as exc:
            raise ConfigError(f"triage.slices: {exc}") from None
        target = float(tr.get("target_recall", 0.95))
        if not 0.0 < target <= 1.0:
            raise ConfigError("triage.target_recall must be in (0, 1]")

        ex = _section(doc, "explain", set(ExplainConfig.__dataclass_fields__))
        methods = tuple(ex.get("methods", ExplainConfig.methods))
        bad = set(methods) - {"permutation", "shapley"}
        if bad:
            raise ConfigError(f"explain.methods: unknown {sorted(bad)}")
        explain = ExplainConfig(methods, **{k: int(v) for k, v in ex.items() if k != "methods"})
        if min(explain.rows, explain.repeats, explain.points, explain.background, explain.top) < 1 or explain.samples < 2:
            raise ConfigError("explain: counts must be positive (samples >= 2)")

        run_dir = base / str(doc.get("run_dir", "runs/default"))
        return cls(seed, run_dir, dpath, generate, synth, context, zoo, TriageConfig(slices, target), explain, doc)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "run_dir": str(self.run_dir),
            "dataset": {"path": str(self.dataset_path), "generate": self.generate},
            "synth": self.synth.to_dict(),
            "context": {"windows": list(self.context.windows)},
            "zoo": {"train_months": self.zoo.train_months, "windows": self.zoo.windows,
                    "rare_threshold": self.zoo.rare_threshold, "params": self.zoo.params},
            "triage": {"slices": list(self.triage.slices), "target_recall": self.triage.target_recall},
            "explain": {**self.explain.__dict__, "methods": list(self.explain.methods)},
        }


def default_config_path() -> Path:
    return Path(str(resources.files("teq") / "configs" / "default.yaml"))


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read and validate a YAML config; relative paths resolve against the working directory."""
    p = Path(path) if path else default_config_path()
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
    doc = doc or {}
    for dotted, value in (overrides or {}).items():
        node = doc
        *parents, leaf = dotted.split(".")
        for k in parents:
            node = node.setdefault(k, {})
        node[leaf] = value
    return PipelineConfig.from_dict(doc)


# ---- helpers ---------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, doc: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_labeled_dataset(path: str | Path):
    """Alerts, labeled incidents, ground truth (or ``None``) and the month timeline."""
    path = Path(path)
    alerts = load_alerts(path / "alerts.jsonl", on_error="abort")
    incidents = label_incidents(group_incidents(alerts), read_incident_labels(path / "incidents.jsonl"))
    unlabeled = [i.incident_id for i in incidents if i.label is None]
    if unlabeled:
        raise ValueError(f"{len(unlabeled)} incident(s) without labels, e.g. {unlabeled[0]}")
    gt = path / "ground_truth.jsonl"
    truth = read_ground_truth(gt) if gt.is_file() else None
    meta = path / "dataset.json"
    if meta.is_file():
        doc = json.loads(meta.read_text(encoding="utf-8"))
        months = doc["months"]
        timeline = Timeline(int(months[0][0]), len(months), int(months[0][1] - months[0][0]))
    else:
        timeline = Timeline.covering(alerts)
    return alerts, incidents, truth, timeline


# ---- the run ---------------------------------------------------------------

class Run:
    """Lazily executed stages over one dataset; windows are cached by index."""

    def __init__(self, config: PipelineConfig, out_dir: str | Path | None = None):
        self.config = config
        self.out = Path(out_dir) if out_dir is not None else config.run_dir
        self.timings: dict[str, float] = {}
        self.outputs: list[Path] = []
        self._corpus: Corpus | None = None
        self._records = None
        self._context = None
        self._raw = None
        self._windows: dict[int, WindowResult] = {}
        self._custom: dict[int, tuple] = {}

    # stage plumbing
    def stage(self, name: str, fn: Callable, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def emit(self, rel: str, doc_or_text) -> Path:
        p = self.out / rel
        self.outputs.append(p)
        return write_text(p, doc_or_text) if isinstance(doc_or_text, str) else write_json(p, doc_or_text)

    # data
    def synth(self) -> None:
        cfg = self.config
        if cfg.generate:
            self.stage("synth", generate_dataset, cfg.synth, cfg.dataset_path)

    @property
    def raw(self):
        if self._raw is None:
            # stage commands run alone; make the data they would otherwise miss
            if self.config.generate and not (Path(self.config.dataset_path) / "alerts.jsonl").exists():
                self.synth()
            self._raw =self.stage("ingest", load_labeled_dataset, self.config.dataset_path)
        return self._raw

    @property
    def timeline(self) -> Timeline:
        return self.raw[3]

    @property
    def truth(self):
        return self.raw[2]

    def featurize(self):
        if self._records is None:
            alerts = self.raw[0]
            self._records = self.stage("featurize", lambda: [content_record(a) for a in alerts])
        return self._records

    def context(self) -> np.ndarray:
        if self._context is None:
            self._context = self.stage("context", context_matrix, self.raw[0], self.config.context)
        return self._context

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            alerts, incidents = self.raw[0], self.raw[1]
            records, ctx = self.featurize(), self.context()
            row_of = {a.alert_id: i for i, a in enumerate(alerts)}
            labels = np.zeros(len(alerts))
            for inc in incidents:
                if inc.label:
                    labels[[row_of[a] for a in inc.alert_ids]] = 1.0
            self._corpus = Corpus(alerts, incidents, records, ctx, labels, row_of, self.config.context)
        return self._corpus

    def window_ranges(self):
        z = self.config.zoo
        return self.stage("zoo", self.timeline.windows, z.train_months, z.windows)

    def set_window(self, k: int, train_range: tuple[int, int], test_range: tuple[int, int]) -> None:
        """Pin window ``k`` to explicit ranges instead of the sliding layout."""
        self._custom[k] = (train_range, test_range)
        self._windows.pop(k, None)

    def window(self, k: int) -> WindowResult:
        if k not in self._windows:
            tr, te = self._custom[k] if k in self._custom else self.window_ranges()[k]
            z = self.config.zoo
            self._windows[k] = self.stage("zoo", run_window, self.corpus, k, tr, te, self.config.seed,
                                          z.rare_threshold, z.params)
        return self._windows[k]

    # reports
    def write_features(self) -> None:
        corpus = self.corpus
        tr, _ = self.window_ranges()[0]
        recs = [corpus.records[r] for r in corpus.rows_for(corpus.incidents_in(tr))]
        spec = self.stage("featurize", fit_feature_spec, recs, self.config.zoo.rare_threshold)
        self.emit("features/feature_spec.json", spec.dumps() + "\n")
        ctx = corpus.context
        self.emit("features/context_summary.json", {
            "width": int(ctx.shape[1]),
            "rows": int(ctx.shape[0]),
            "windows_seconds": list(self.config.context.windows),
            "columns": [
                {"name": n, "mean": float(ctx[:, j].mean()), "max": float(ctx[:, j].max()),
                 "nonzero_fraction": float((ctx[:, j] != 0).mean())}
                for j, n in enumerate(self.config.context.feature_names)
            ],
        })

    def write_window(self, k: int) -> None:
        res = self.window(k)
        self.emit(f"zoo/window_{k}/metrics.csv", metrics_table_csv(res.zoo.candidates, res.zoo.metrics))
        self.emit(f"zoo/window_{k}/selection.json", {
            "window": k,
            "train_range": list(res.train_range),
            "test_range": list(res.test_range),
            "train_alerts": int(res.data.train_rows.size),
            "content_width": int(res.data.spec.width),
            **res.selection.to_dict(),
        })
        model = res.winner_model()
        for task, sub in (("content", model.content), ("context", model.context)):
            if sub is not None:
                self.emit(f"zoo/window_{k}/winner_{task}_{sub.algorithm.value}.json", sub.dumps() + "\n")
        self.emit(f"zoo/window_{k}/feature_spec.json", res.data.spec.dumps() + "\n")

    def decay(self) -> tuple[DecayReport, DecayReport]:
        z = self.config.zoo
        first = self.window(0)
        fixed, _ = self.stage("decay", run_fixed_decay, self.corpus, self.timeline, self.config.seed,
                              z.train_months, z.windows, first, z.rare_threshold, z.params)
        retrain = DecayReport(z.train_months)
        for k in range(z.windows):
            retrain.rows.append(self.stage("decay", selected_row, "retrain", z.train_months + 1 + k, self.window(k)))
        return fixed, retrain

    def write_decay(self, modes=("fixed", "retrain")) -> dict:
        fixed, retrain = self.decay() if "retrain" in modes else (self.decay_fixed_only(), None)
        reports = {"fixed": fixed, "retrain": retrain}
        doc = {"train_months": self.config.zoo.train_months, "pr_auc_method": "average_precision",
               "precision_at_recall": "max precision at recall >= target"}
        lines = ["scenario,test_month,winner,n_incidents,roc_auc,pr_auc,baseline_precision,"
                 "precision_at_90,precision_at_95,precision_at_99"]
        for mode in modes:
            rep = reports[mode]
            doc[mode] = [r.to_dict() for r in rep.rows]
            for r in rep.rows:
                m = r.metrics
                lines.append(f"{mode},{r.test_month},{r.winner},{r.n_incidents},{m['roc_auc']:.6f},{m['pr_auc']:.6f},"
                             f"{m['baseline_precision']:.6f},{m['precision_at_90']:.6f},{m['precision_at_95']:.6f},"
                             f"{m['precision_at_99']:.6f}")
                self.emit(f"decay/curves/{mode}_month_{r.test_month}.csv", metrics.curve_csv(r.incident_scores, r.labels))
        self.emit("decay/decay_report.json", doc)
        self.emit("decay/decay.csv", "\n".join(lines) + "\n")
        return doc

    def decay_fixed_only(self) -> DecayReport:
        z = self.config.zoo
        rep, _ = self.stage("decay", run_fixed_decay, self.corpus, self.timeline, self.config.seed,
                            z.train_months, z.windows, self.window(0), z.rare_threshold, z.params)
        return rep

    # triage
    def _queued(self, res: WindowResult, rng: tuple[int, int]):
        corpus = self.corpus
        rows, Xc, Xx, index, incs = encode_test(corpus, res.data.spec, rng)
        alert_scores = res.winner_model().alert_scores(Xc, Xx)
        inc_scores = index.aggregate(alert_scores)
        queued = [
            QueuedIncident(i.incident_id, i.anchor_time, float(i.queue_time), bool(i.label),
                           max(corpus.alerts[corpus.row_of[a]].severity for a in i.alert_ids), float(s))
            for i, s in zip(incs, inc_scores)
        ]
        local = {corpus.alerts[r].alert_id: j for j, r in enumerate(rows)}
        return queued, alert_scores, local, incs

    def triage(self) -> TriageReport:
        return self.stage("triage", self._triage)

    def _triage(self) -> TriageReport:
        cfg = self.config.triage
        n = self.config.zoo.windows
        wins = self.window_ranges()
        if n >= 2:
            # freshest model whose selection month can serve as an unseen validation set
            res = self.window(n - 2)
            val, _, _, _ = self._queued(res, wins[n - 2][1])
            test_range, leakage = wins[n - 1][1], False
            test, alert_scores, local, incs = self._queued(res, test_range)
        else:
            res = self.window(0)
            test_range, leakage = wins[0][1], True
            test, alert_scores, local, incs = self._queued(res, test_range)
            val = test
        threshold, fit_recall = select_threshold_at_recall([q.score for q in val], [q.label for q in val],
                                                           cfg.target_recall)
        supp = suppress_incidents(test, threshold, day_start=test_range[0])
        queue = [queue_experiment(test, d, test_range[0]) for d in cfg.slices]
        ranks = []
        truth = self.truth or {}
        for inc in incs:
            gt = truth.get(inc.incident_id)
            ev = gt.evidence_alert_id if gt is not None else None
            if ev is not None:
                ranks.append(rank_alerts_within_incident(inc.alert_ids, [alert_scores[local[a]] for a in inc.alert_ids],
                                                         ev, inc.incident_id))
        return TriageReport(queue, supp, cfg.target_recall, fit_recall, leakage,
                            inspection_summary(ranks), inspection_summary(ranks, min_alerts=2),
                            res.selection.winner, tuple(test_range))

    def write_triage(self) -> dict:
        rep = self.triage()
        doc = rep.to_dict()
        self.emit("triage/triage_report.json", doc)
        self.emit("triage/queue.csv", rep.queue_csv())
        self.emit("triage/suppression_daily.csv", rep.daily_csv())
        return doc

    # explain
    def explain(self) -> dict:
        return self.stage("explain", self._explain)

    def _explain(self) -> dict:
        ex = self.config.explain
        k = self.config.zoo.windows - 1
        res = self.window(k)
        model = res.winner_model()
        d = res.data
        blocks, names = [], []
        if model.content is not None:
            blocks.append(("content", d.Xc_test, d.Xc_train))
            names += [f"content:{n}" for n in d.spec.feature_names]
        if model.context is not None:
            blocks.append(("context", d.Xx_test, d.Xx_train))
            names += [f"context:{n}" for n in self.config.context.feature_names]
        widths = [b[1].shape[1] for b in blocks]
        cut = np.cumsum(widths)[:-1]

        def predict(Z: np.ndarray) -> np.ndarray:
            parts = dict(zip([b[0] for b in blocks], np.split(Z, cut, axis=1)))
            return model.alert_scores(parts.get("content"), parts.get("context"))

        X_test = np.hstack([b[1] for b in blocks])
        X_train = np.hstack([b[2] for b in blocks])
        y = self.corpus.labels[d.test_rows]
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 7]))
        doc = {"window": k, "model": res.selection.winner, "test_range": list(res.test_range)}
        if "permutation" in ex.methods:
            rows = np.sort(rng.choice(X_test.shape[0], size=min(ex.rows, X_test.shape[0]), replace=False))
            rep = permutation_importance(predict, X_test[rows], y[rows], "roc_auc", ex.repeats, self.config.seed, names)
            doc["permutation"] = rep.to_dict(top=ex.top)
            self.emit("explain/permutation.csv", rep.to_csv())
        if "shapley" in ex.methods:
            pos = np.flatnonzero(y > 0)
            pool = pos if pos.size else np.arange(X_test.shape[0])
            pts = np.sort(rng.choice(pool, size=min(ex.points, pool.size), replace=False))
            bg = np.sort(rng.choice(X_train.shape[0], size=min(ex.background, X_train.shape[0]), replace=False))
            rep = shapley_importance(predict, X_test[pts], X_train[bg], ex.samples, self.config.seed, names)
            doc["shapley"] = rep.to_dict(top=ex.top)
            self.emit("explain/shapley.csv", rep.to_csv())
        self.emit("explain/importance_report.json", doc)
        return doc

    # manifest
    def write_manifest(self, stages: list[str]) -> Path:
        import numba
        import scipy

        inputs = {}
        if self.config.dataset_path.is_dir():
            for f in sorted(self.config.dataset_path.glob("*.json*")):
                inputs[f.name] = sha256_file(f)
        outs = {str(p.relative_to(self.out)): sha256_file(p) for p in sorted(set(self.outputs))}
        cfg = self.config.to_dict()
        manifest = {
            "package": "artifact",
            "version": __version__,
            "python": platform.python_version(),
            "libraries": {"numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
                          "pyyaml": yaml.__version__},
            "seed": self.config.seed,
            "config": cfg,
            "config_sha256": hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
            "stages": stages,
            "inputs": inputs,
            "outputs": outs,
        }
        write_json(self.out / "timings.json", {k: round(v, 3) for k, v in self.timings.items()})
        return write_json(self.out / "manifest.json", manifest)


@dataclass
class PipelineResult:
    run_dir: Path
    reports: dict
    timings: dict
    manifest: Path


def run_pipeline(config: PipelineConfig | str | Path | None = None, run_dir: str | Path | None = None) -> PipelineResult:
    """synth -> featurize -> context -> zoo/select -> triage -> decay -> explain, then the manifest."""
    if not isinstance(config, PipelineConfig):
        config = load_config(config)
    if run_dir is not None:
        config = replace(config, run_dir=Path(run_dir))
    run = Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    run.synth()
    run.corpus  # ingest, featurize, context
    run.write_features()
    for k in range(config.zoo.windows):
        run.stage("select", run.write_window, k)
    reports = {"triage": run.write_triage(), "decay": run.write_decay(), "explain": run.explain()}
    run.timings["total"] = time.perf_counter() - t0
    manifest = run.write_manifest(list(STAGES))
    logger.info("pipeline finished in %.1fs; outputs under %s", run.timings["total"], run.out)
    return PipelineResult(run.out, reports, dict(run.timings), manifest)
