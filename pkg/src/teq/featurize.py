"""Schema-free featurization of semi-structured alert bodies.

Bodies are flattened to dotted paths, profiled, and compiled into a
:class:`FeatureSpec`: numeric columns are ``-1``-filled and standardized,
string columns are folded (``missing_val`` / ``rare_val``) and one-hot
encoded. Columns named like identifiers or timestamps are dropped, as are
string columns whose folded values carry no retained vocabulary.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

SPEC_FORMAT = "teq-feature-spec"
SPEC_VERSION = 1

MISSING_VAL = "missing_val"
RARE_VAL = "rare_val"
RESERVED = (MISSING_VAL, RARE_VAL)
MISSING_NUMERIC = -1.0

IDENTIFIER_TOKENS = frozenset({"id", "time", "epoch", "date", "guid", "uuid", "timestamp"})
DEFAULT_RARE_THRESHOLD = 50
DEFAULT_MAX_DEPTH = 64


class _Missing:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()

FlatRecord = dict  # dotted path -> int | float | str | MISSING


class FlattenError(ValueError):
    pass


def _canonical(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def flatten_document(body: Mapping, max_depth: int = DEFAULT_MAX_DEPTH) -> FlatRecord:
    """Flatten a nested document into ``{"a.b.c": scalar}``.

    Arrays become their canonical compact JSON string; ``null`` becomes
    :data:`MISSING`; booleans become ``"true"``/``"false"``. Empty objects
    contribute no keys.
    """
    out: FlatRecord = {}

    def walk(node: Mapping, prefix: str, depth: int) -> None:
        if depth > max_depth:
            raise FlattenError(f"document deeper than {max_depth} levels at {prefix!r}")
        for key, value in node.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            if isinstance(value, Mapping):
                walk(value, path, depth + 1)
            elif isinstance(value, (list, tuple)):
                out[path] = _canonical(list(value))
            elif value is None:
                out[path] = MISSING
            elif isinstance(value, bool):
                out[path] = "true" if value else "false"
            elif isinstance(value, (int, float, str)):
                out[path] = value
            else:
                out[path] = str(value)

    walk(body, "", 1)
    return out


_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")
_SEP = re.compile(r"[^A-Za-z0-9]+")


def name_tokens(path: str) -> list[str]:
    tokens = []
    for chunk in _SEP.split(path):
        if chunk:
            tokens.extend(t.lower() for t in _CAMEL.split(chunk) if t)
    return tokens


def is_identifier_name(path: str) -> bool:
    return any(t in IDENTIFIER_TOKENS for t in name_tokens(path))


def parse_number(value: Any) -> float | None:
    """Finite float for numbers and numeric strings, else ``None``."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        x = float(value)
    elif isinstance(value, str):
        try:
            x = float(value)
        except ValueError:
            return None
    else:
        return None
    return x if math.isfinite(x) else None


def _as_string(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, float) and value.is_integer():
        return repr(value)
    return str(value)


@dataclass
class ColumnProfile:
    path: str
    observed: int = 0
    missing: int = 0
    numeric: int = 0
    values: Counter = field(default_factory=Counter)

    def add(self, value: Any) -> None:
        self.observed += 1
        if value is MISSING:
            self.missing += 1
            return
        if parse_number(value) is not None:
            self.numeric += 1
        self.values[_as_string(value)] += 1

    @property
    def present(self) -> int:
        return self.observed - self.missing

    @property
    def is_numeric(self) -> bool:
        return self.present > 0 and self.numeric == self.present


def profile_columns(records: Sequence[FlatRecord]) -> dict[str, ColumnProfile]:
    profiles: dict[str, ColumnProfile] = {}
    for rec in records:
        for p, v in rec.items():
            prof = profiles.get(p)
            if prof is None:
                prof = profiles[p] = ColumnProfile(p)
            prof.add(v)
    n = len(records)
    for prof in profiles.values():
        # absent keys are missing too
        prof.missing += n - prof.observed
        prof.observed = n
    return {p: profiles[p] for p in sorted(profiles)}


@dataclass(frozen=True)
class NumericColumn:
    path: str
    mean: float
    std: float


@dataclass(frozen=True)
class CategoricalColumn:
    path: str
    vocabulary: tuple[str, ...]
    # folded fit-time frequencies, aligned with categories
    counts: tuple[int, ...]

    @property
    def categories(self) -> tuple[str, ...]:
        return self.vocabulary + RESERVED

    @property
    def width(self) -> int:
        return len(self.vocabulary) + len(RESERVED)


@dataclass(frozen=True)
class FeatureSpec:
    numeric: tuple[NumericColumn, ...]
    categorical: tuple[CategoricalColumn, ...]
    dropped: tuple[tuple[str, str], ...]
    rare_threshold: int
    n_records: int

    @property
    def width(self) -> int:
        return len(self.numeric) + sum(c.width for c in self.categorical)

    @property
    def feature_names(self) -> list[str]:
        names = [c.path for c in self.numeric]
        for c in self.categorical:
            names.extend(f"{c.path}={cat}" for cat in c.categories)
        return names

    def block_slices(self) -> list[slice]:
        """Column slices of each one-hot block in the output vector."""
        out, pos = [], len(self.numeric)
        for c in self.categorical:
            out.append(slice(pos, pos + c.width))
            pos += c.width
        return out

    def to_dict(self) -> dict:
        return {
            "format": SPEC_FORMAT,
            "version": SPEC_VERSION,
            "rare_threshold": self.rare_threshold,
            "n_records": self.n_records,
            "numeric": [{"path": c.path, "mean": c.mean, "std": c.std} for c in self.numeric],
            "categorical": [
                {"path": c.path, "vocabulary": list(c.vocabulary), "counts": list(c.counts)}
                for c in self.categorical
            ],
            "dropped": [{"path": p, "reason": r} for p, r in self.dropped],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSpec":
        if doc.get("format") != SPEC_FORMAT:
            raise ValueError(f"not a feature spec document (format={doc.get('format')!r})")
        if doc.get("version") != SPEC_VERSION:
            raise ValueError(f"unsupported feature spec version {doc.get('version')!r}")
        return cls(
            numeric=tuple(NumericColumn(c["path"], float(c["mean"]), float(c["std"])) for c in doc["numeric"]),
            categorical=tuple(
                CategoricalColumn(c["path"], tuple(c["vocabulary"]), tuple(int(n) for n in c["counts"]))
                for c in doc["categorical"]
            ),
            dropped=tuple((d["path"], d["reason"]) for d in doc["dropped"]),
            rare_threshold=int(doc["rare_threshold"]),
            n_records=int(doc["n_records"]),
        )

    @classmethod
    def loads(cls, text: str) -> "FeatureSpec":
        return cls.from_dict(json.loads(text))


def fit_feature_spec(
    records: Sequence[FlatRecord], rare_threshold: int = DEFAULT_RARE_THRESHOLD
) -> FeatureSpec:
    """Profile flattened records and freeze the column layout.

    A string value is kept in its column's vocabulary when its training
    frequency is at least ``rare_threshold``; everything else folds to
    ``rare_val``.
    """
    if not records:
        raise ValueError("cannot fit a feature spec on zero records")
    if rare_threshold < 1:
        raise ValueError("rare_threshold must be >= 1")

    numeric, categorical, dropped = [], [], []
    for path, prof in profile_columns(records).items():
        if is_identifier_name(path):
            dropped.append((path, "identifier-name"))
            continue
        if prof.is_numeric:
            vals = np.full(prof.observed, MISSING_NUMERIC)
            i = 0
            for rec in records:
                v = rec.get(path, MISSING)
                if v is not MISSING:
                    vals[i] = parse_number(v)
                i += 1
            mean, std = float(vals.mean()), float(vals.std())
            numeric.append(NumericColumn(path, mean, std))
            continue
        vocab = sorted(v for v, n in prof.values.items() if n >= rare_threshold)
        rare = prof.present - sum(prof.values[v] for v in vocab)
        folded = {v: prof.values[v] for v in vocab}
        if prof.missing:
            folded[MISSING_VAL] = prof.missing
        if rare:
            folded[RARE_VAL] = rare
        # a column that can only say missing/rare (or one thing) carries no signal
        if not vocab or len(folded) <= 1:
            dropped.append((path, "degenerate-vocabulary"))
            continue
        counts = tuple(prof.values[v] for v in vocab) + (prof.missing, rare)
        categorical.append(CategoricalColumn(path, tuple(vocab), counts))
    return FeatureSpec(
        numeric=tuple(numeric),
        categorical=tuple(categorical),
        dropped=tuple(dropped),
        rare_threshold=rare_threshold,
        n_records=len(records),
    )


def _scale(col: NumericColumn) -> tuple[float, float]:
    if col.std > 0:
        return col.mean, col.std
    return 0.0, 1.0


def transform_batch(records: Sequence[FlatRecord], spec: FeatureSpec) -> np.ndarray:
    """Encode records row-wise into a ``(len(records), spec.width)`` matrix."""
    n = len(records)
    out = np.zeros((n, spec.width), dtype=np.float64)
    for j, col in enumerate(spec.numeric):
        raw = np.fromiter(
            (_numeric_or_missing(r.get(col.path, MISSING)) for r in records), dtype=np.float64, count=n
        )
        offset, scale = _scale(col)
        out[:, j] = (raw - offset) / scale
    for col, sl in zip(spec.categorical, spec.block_slices()):
        index = {v: k for k, v in enumerate(col.vocabulary)}
        missing_pos, rare_pos = len(col.vocabulary), len(col.vocabulary) + 1
        pos = np.fromiter(
            (_category_pos(r.get(col.path, MISSING), index, missing_pos, rare_pos) for r in records),
            dtype=np.int64,
            count=n,
        )
        out[np.arange(n), sl.start + pos] = 1.0
    return out


def _numeric_or_missing(value: Any) -> float:
    if value is MISSING:
        return MISSING_NUMERIC
    x = parse_number(value)
    # non-numeric values in a numeric column are treated as missing
    return MISSING_NUMERIC if x is None else x


def _category_pos(value: Any, index: dict, missing_pos: int, rare_pos: int) -> int:
    if value is MISSING:
        return missing_pos
    return index.get(_as_string(value), rare_pos)


def transform_record(record: FlatRecord, spec: FeatureSpec) -> np.ndarray:
    return transform_batch([record], spec)[0]


def validate_vectors(X: np.ndarray, spec: FeatureSpec) -> None:
    """Raise if ``X`` violates width, finiteness, or one-hot validity."""
    if X.ndim != 2 or X.shape[1] != spec.width:
        raise ValueError(f"expected width {spec.width}, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    for col, sl in zip(spec.categorical, spec.block_slices()):
        block = X[:, sl]
        if not (np.isin(block, (0.0, 1.0)).all() and (block.sum(axis=1) == 1).all()):
            raise ValueError(f"invalid one-hot block for {col.path}")


def flatten_all(bodies: Iterable[Mapping], max_depth: int = DEFAULT_MAX_DEPTH) -> list[FlatRecord]:
    return [flatten_document(b, max_depth) for b in bodies]
