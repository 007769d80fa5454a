import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teq.metrics import curve_csv, metric_curve, pr_auc, precision_at_recall, roc_auc, summarize


def pair_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size)


def test_trivial_auc():
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 0]) == 0.5


def test_auc_single_class():
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_matches_pairs_and_monotone(seed):
    rng = np.random.default_rng(seed)
    s = np.round(rng.random(300), 2)  # rounding forces ties
    y = rng.integers(0, 2, 300)
    y[:2] = [0, 1]
    assert abs(roc_auc(s, y) - pair_auc(s, y)) < 1e-12
    assert roc_auc(s, y) == pytest.approx(roc_auc(np.exp(3 * s) - 7, y), abs=1e-12)


def test_ap_hand_set():
    # ranked: .9(+) .8(-) .7(+) .6(-) .5(-) .4(+)
    s = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
    y = [1, 0, 1, 0, 0, 1]
    assert pr_auc(s, y) == pytest.approx((1 + 2 / 3 + 3 / 6) / 3)
    assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0


def test_ap_random_equals_prevalence():
    rng = np.random.default_rng(2)
    y = rng.random(10_000) < 0.2
    assert abs(pr_auc(rng.random(10_000), y) - y.mean()) < 0.02


def test_precision_at_recall_example():
    s = [0.9, 0.7, 0.5, 0.8, 0.6]
    y = [1, 1, 1, 0, 0]
    assert precision_at_recall(s, y, 0.66) == pytest.approx(2 / 3)
    assert precision_at_recall(s, y, 1e-9) == 1.0
    assert precision_at_recall([0.9, 0.1], [1, 0], 1.0) == 1.0
    with pytest.raises(ValueError):
        precision_at_recall(s, y, 0.0)


def test_precision_at_recall_nonincreasing():
    rng = np.random.default_rng(3)
    s, y = rng.random(500), rng.random(500) < 0.3
    vals = [precision_at_recall(s, y, r) for r in np.linspace(0.01, 1, 60)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_curve_counts():
    c = metric_curve([0.9, 0.9, 0.5, 0.1], [1, 0, 1, 0])
    assert c.thresholds.tolist() == [0.9, 0.5, 0.1]
    assert c.tp.tolist() == [1, 2, 2] and c.fp.tolist() == [1, 1, 2]
    assert (c.tp + c.fn == 2).all() and (c.fp + c.tn == 2).all()
    text = curve_csv([0.9, 0.9, 0.5, 0.1], [1, 0, 1, 0])
    assert text.splitlines()[0] == "threshold,tp,fp,tn,fn,fpr,recall,precision" and len(text.splitlines()) == 4


def test_summarize_keys():
    row = summarize([0.9, 0.2, 0.4], [1, 0, 0])
    assert set(row) == {"roc_auc", "pr_auc", "baseline_precision", "precision_at_90", "precision_at_95",
                        "precision_at_99"}
