import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teq.alerts import (
    DatasetSplit,
    IngestError,
    Incident,
    LabelRule,
    RawAlert,
    load_alerts,
    AlertReader,
    group_incidents,
    label_incidents,
    propagate_labels,
    time_split,
)

from conftest import make_alert, random_stream

H = 3600


def _line(i, t, body=None, **kw):
    rec = {"alert_id": f"a{i}", "event_time": t, "customer_id": "c", "machine_id": "m",
           "sensor_id": "s", "severity": 2.5, "body": {"x": i} if body is None else body}
    rec.update(kw)
    return json.dumps(rec)


def test_load_three_lines(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text("\n".join(_line(i, 100 + i) for i in range(3)) + "\n")
    alerts = load_alerts(p)
    assert [a.alert_id for a in alerts] == ["a0", "a1", "a2"]
    assert alerts[1].body == {"x": 1}


def test_empty_body(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text(_line(0, "2023-01-01T00:00:00Z", body={}) + "\n")
    (a,) = load_alerts(p)
    assert a.body == {} and a.event_time == 1672531200


def test_inversion_abort_names_line(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text(_line(0, 200) + "\n" + _line(1, 100) + "\n")
    with pytest.raises(IngestError) as exc:
        load_alerts(p, on_error="abort")
    assert exc.value.lineno == 2
    assert "inversion" in str(exc.value)


def test_skip_counts_bad_lines(tmp_path):
    p = tmp_path / "a.jsonl"
    bad_env = json.dumps({"alert_id": "z", "event_time": 5})
    p.write_text("\n".join([_line(0, 10), "{not json", bad_env, _line(3, 5), _line(4, 20)]) + "\n")
    reader = AlertReader(p)
    assert [a.alert_id for a in reader] == ["a0", "a4"]
    assert [e.lineno for e in reader.errors] == [2, 3, 4]


def test_missing_envelope_abort(tmp_path):
    p = tmp_path / "a.jsonl"
    p.write_text(json.dumps({"alert_id": "z"}) + "\n")
    with pytest.raises(IngestError, match="line 1"):
        load_alerts(p, on_error="abort")


def test_raw_alert_validation():
    with pytest.raises(ValueError):
        RawAlert("a", 0, "", "m", "s", 1.0)
    with pytest.raises(ValueError):
        RawAlert("a", 0, "c", "m", "s", -1.0)


def test_group_anchor_rule():
    alerts = [make_alert(0, 0), make_alert(1, 23 * H), make_alert(2, 25 * H)]
    incs = group_incidents(alerts)
    assert [i.alert_ids for i in incs] == [("a00000", "a00001"), ("a00002",)]
    assert incs[0].anchor_time == 0 and incs[0].last_time == 23 * H


def test_group_boundary_inclusive_and_anchor_fixed():
    # 24h exactly still joins; the anchor does not slide with later members
    alerts = [make_alert(0, 0), make_alert(1, 20 * H), make_alert(2, 24 * H), make_alert(3, 24 * H + 1)]
    incs = group_incidents(alerts)
    assert [len(i) for i in incs] == [3, 1]


def test_group_singleton_and_machines():
    assert len(group_incidents([make_alert(0, 5)])) == 1
    incs = group_incidents([make_alert(0, 5, machine="a"), make_alert(1, 5, machine="b")])
    assert sorted(i.machine_id for i in incs) == ["a", "b"]


def test_group_rejects_unordered():
    with pytest.raises(ValueError):
        group_incidents([make_alert(0, 10), make_alert(1, 5)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_group_partition_property(seed):
    alerts = random_stream(200, seed, span=5 * 86400, machines=6)
    incs = group_incidents(alerts)
    ids = [a for i in incs for a in i.alert_ids]
    assert sorted(ids) == sorted(a.alert_id for a in alerts)
    by_id = {a.alert_id: a for a in alerts}
    for inc in incs:
        members = [by_id[a] for a in inc.alert_ids]
        assert {m.machine_id for m in members} == {inc.machine_id}
        assert inc.last_time - inc.anchor_time <= 86400


def _incident(k, n, label):
    return Incident(f"i{k}", "m", "c", tuple(f"i{k}-a{j}" for j in range(n)), 0, 0, label)


def test_propagate_counts():
    labels = propagate_labels([_incident(0, 2, True), _incident(1, 5, False)])
    assert sum(labels.values()) == 2 and len(labels) == 7
    assert propagate_labels([]) == {}
    assert all(propagate_labels([_incident(0, 3, True)]).values())


def test_propagate_unlabeled_raises():
    with pytest.raises(ValueError):
        propagate_labels([_incident(0, 1, None)])


def test_label_rules():
    incs = label_incidents([_incident(0, 1, None), _incident(1, 1, None)],
                           {"i0": {"resolution": "contained_true_positive"},
                            "i1": {"resolution": "manual_remediation", "queue_time": 60}})
    assert incs[0].label is False and incs[1].label is True and incs[1].queue_time == 60.0
    assert not LabelRule.FALSE_ALERT.actionable


def test_split_overlap_raises():
    with pytest.raises(ValueError):
        DatasetSplit((0, 100), (50, 200))


def test_split_matches_filter():
    alerts = random_stream(3000, 3, span=180 * 86400)
    month = 30 * 86400
    split = DatasetSplit((0, 5 * month), (5 * month, 6 * month))
    train, test = time_split(alerts, split)
    assert [a.alert_id for a in train.alerts] == [a.alert_id for a in alerts if a.event_time < 5 * month]
    assert len(test.alerts) == sum(1 for a in alerts if 5 * month <= a.event_time)
    everything, empty = time_split(alerts, DatasetSplit((0, 6 * month), (6 * month, 7 * month)))
    assert len(everything.alerts) == len(alerts) and not empty.alerts


def test_split_incident_follows_anchor():
    alerts = [make_alert(0, 90), make_alert(1, 110), make_alert(2, 300, machine="x")]
    incs = group_incidents(alerts)
    train, test = time_split(alerts, DatasetSplit((0, 100), (100, 400)), incs)
    assert [a.alert_id for a in train.alerts] == ["a00000", "a00001"]
    assert [i.machine_id for i in test.incidents] == ["x"]
