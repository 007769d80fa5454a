import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teq.featurize import (
    MISSING,
    FeatureSpec,
    FlattenError,
    fit_feature_spec,
    flatten_document,
    is_identifier_name,
    transform_batch,
    transform_record,
    validate_vectors,
)


def test_flatten_examples():
    assert flatten_document({"a": {"b": 1}}) == {"a.b": 1}
    assert flatten_document({"tags": ["x", "y"]}) == {"tags": '["x","y"]'}
    assert flatten_document({}) == {}
    assert flatten_document({"n": None, "f": True}) == {"n": MISSING, "f": "true"}


def test_flatten_array_canonical():
    a = flatten_document({"t": [{"b": 1, "a": 2}]})
    b = flatten_document({"t": [{"a": 2, "b": 1}]})
    assert a == b


def test_flatten_depth_guard():
    doc = leaf = {}
    for _ in range(70):
        leaf["k"] = {}
        leaf = leaf["k"]
    leaf["v"] = 1
    with pytest.raises(FlattenError):
        flatten_document(doc)
    assert flatten_document(doc, max_depth=100)


def test_identifier_tokens():
    assert is_identifier_name("session_id")
    assert is_identifier_name("proc.startTime")
    assert not is_identifier_name("incident_count")
    assert not is_identifier_name("proc.valid")


def test_rare_fold_example():
    recs = [{"proc.name": "cmd"}, {"proc.name": "cmd"}, {"proc.name": "ps"}]
    spec = fit_feature_spec(recs, rare_threshold=2)
    (col,) = spec.categorical
    assert col.vocabulary == ("cmd",)
    X = transform_batch(recs, spec)
    # layout: cmd, missing_val, rare_val
    assert X.tolist() == [[1, 0, 0], [1, 0, 0], [0, 0, 1]]


def test_identifier_and_degenerate_drops():
    recs = [{"session_id": f"s{i}", "odd": f"u{i}", "k": "a" if i % 2 else "b"} for i in range(6)]
    spec = fit_feature_spec(recs, rare_threshold=2)
    reasons = dict(spec.dropped)
    assert reasons["session_id"] == "identifier-name"
    # every value unique: only rare_val survives folding
    assert reasons["odd"] == "degenerate-vocabulary"
    assert [c.path for c in spec.categorical] == ["k"]


def test_zero_records():
    with pytest.raises(ValueError):
        fit_feature_spec([])


def _two_column_corpus():
    return [
        {"size": 10, "proc": "cmd"},
        {"size": 30, "proc": "cmd"},
        {"proc": "ps"},
        {"size": 20, "proc": "ps"},
    ]


def test_hand_encoding():
    recs = _two_column_corpus()
    spec = fit_feature_spec(recs, rare_threshold=2)
    vals = np.array([10.0, 30.0, -1.0, 20.0])
    mean, std = vals.mean(), vals.std()
    assert spec.feature_names == ["size", "proc=cmd", "proc=ps", "proc=missing_val", "proc=rare_val"]
    v = transform_record(recs[1], spec)
    np.testing.assert_allclose(v, [(30 - mean) / std, 1, 0, 0, 0])
    # unseen path ignored, unseen string -> rare_val
    assert np.array_equal(transform_record({**recs[1], "new.path": 5}, spec), v)
    np.testing.assert_allclose(transform_record({"proc": "bash"}, spec), [(-1 - mean) / std, 0, 0, 0, 1])
    np.testing.assert_allclose(transform_record({}, spec), [(-1 - mean) / std, 0, 0, 1, 0])


def test_constant_numeric_passthrough():
    spec = fit_feature_spec([{"x": 4, "p": s} for s in "aabb"], rare_threshold=1)
    assert transform_record({"x": 4}, spec)[0] == 4.0


def test_batch_shapes_and_permutation(rng):
    recs = [{"a": str(rng.integers(4)), "b": float(rng.normal())} for _ in range(50)]
    spec = fit_feature_spec(recs, rare_threshold=3)
    assert transform_batch([], spec).shape == (0, spec.width)
    X = transform_batch(recs, spec)
    perm = rng.permutation(len(recs))
    assert np.array_equal(transform_batch([recs[i] for i in perm], spec), X[perm])


def test_spec_round_trip():
    spec = fit_feature_spec(_two_column_corpus(), rare_threshold=1)
    text = spec.dumps()
    assert FeatureSpec.loads(text).dumps() == text


def test_fit_reproduces_counts():
    recs = [{"p": v} for v in "aaabbbbcz"] + [{}]
    spec = fit_feature_spec(recs, rare_threshold=3)
    (col,) = spec.categorical
    X = transform_batch(recs, spec)
    assert tuple(int(n) for n in X.sum(axis=0)) == col.counts


_values = st.one_of(st.none(), st.booleans(), st.integers(-5, 5), st.sampled_from(["x", "y", "z", "w"]))
_docs = st.dictionaries(st.sampled_from(["a", "b", "c.d", "e"]), _values, max_size=4)


@settings(max_examples=60, deadline=None)
@given(st.lists(_docs, min_size=1, max_size=40), st.lists(_docs, max_size=20))
def test_onehot_validity_property(train, other):
    spec = fit_feature_spec(train, rare_threshold=2)
    X = transform_batch(train + other, spec)
    validate_vectors(X, spec)
