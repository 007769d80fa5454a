import filecmp

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from teq.alerts import AlertReader, read_incident_labels
from teq.synth import ACTIONABLE, SynthConfig, generate, generate_dataset, read_ground_truth, zipf_weights


@pytest.fixture(scope="module")
def small():
    return generate(SynthConfig(seed=11, alerts=6000, machines=600, drift_day=None))


def test_same_seed_byte_identical(tmp_path):
    cfg = SynthConfig(seed=3, alerts=2000, machines=300)
    a = generate_dataset(cfg, tmp_path / "a")
    b = generate_dataset(cfg, tmp_path / "b")
    for key in a:
        assert filecmp.cmp(a[key], b[key], shallow=False)
    c = generate_dataset(SynthConfig(seed=4, alerts=2000, machines=300), tmp_path / "c")
    assert not filecmp.cmp(a["alerts"], c["alerts"], shallow=False)


def test_ingests_cleanly(tmp_path):
    paths = generate_dataset(SynthConfig(seed=5, alerts=3000, machines=300), tmp_path)
    reader = AlertReader(paths["alerts"], on_error="abort")
    alerts = list(reader)
    assert reader.skipped == 0 and len(alerts) > 2000
    labels = read_incident_labels(paths["incidents"])
    truth = read_ground_truth(paths["ground_truth"])
    assert set(labels) == set(truth)


def test_evidence_invariants(small):
    members = {inc.incident_id: set(inc.alert_ids) for inc in small.incidents}
    for gt in small.truth.values():
        if gt.evidence_alert_id is None:
            assert not gt.label
        else:
            assert gt.label and gt.archetype in ACTIONABLE
            assert gt.evidence_alert_id in members[gt.incident_id]
    assert any(gt.label for gt in small.truth.values())


def test_sparse_fields(small):
    counts = {}
    for a in small.alerts:
        for k in a.body.get("ext", {}):
            counts[k] = counts.get(k, 0) + 1
    assert counts and all(n / len(small.alerts) < 0.5 for n in counts.values())


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(positive_fraction=0.0)
    with pytest.raises(ValueError):
        SynthConfig(drift_day=1000.0)
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"bogus": 1})


@pytest.mark.slow
def test_drift_free_mixture_and_zipf():
    cfg = SynthConfig(drift_day=None)
    ds = generate(cfg)
    kinds = sorted({e["archetype"] for e in ds.episodes})
    table = np.zeros((cfg.months, len(kinds)))
    month = cfg.month_days * 86400
    for e in ds.episodes:
        table[int((e["time"] - cfg.start) // month), kinds.index(e["archetype"])] += 1
    assert table.sum() >= 10_000
    assert chi2_contingency(table)[1] > 0.01
    expected = zipf_weights(cfg.customers, cfg.zipf_exponent)[0]
    assert abs(ds.summary["top_customer_share"] / expected - 1) <= 0.10
