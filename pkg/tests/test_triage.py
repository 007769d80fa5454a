import itertools

import numpy as np
import pytest

from teq.triage import (
    AlertRanking,
    QueuedIncident,
    QueueSlice,
    assign_queue_times,
    inspection_summary,
    make_slices,
    queue_experiment,
    rank_alerts_within_incident,
    select_threshold_at_recall,
    simulate_queue_times,
    suppress_incidents,
)


def q(i, t, qt, label, score, severity=0.0):
    return QueuedIncident(f"i{i}", t, qt, label, severity, score)


def test_hand_traced_savings():
    members = (q(0, 0, 600, False, 0.1), q(1, 10, 1200, False, 0.2), q(2, 20, 1800, True, 0.9))
    s = QueueSlice(3600, 0, members)
    base = simulate_queue_times(s, "baseline")
    teq = simulate_queue_times(s, "teq")
    assert (base, teq) == (1800, 600)
    assert 1 - teq / base == pytest.approx(2 / 3)


def test_all_actionable_invariant(rng):
    members = tuple(q(i, i, float(rng.integers(1, 1000)), True, float(rng.random()), float(rng.random()))
                    for i in range(8))
    s = QueueSlice(100, 0, members)
    vals = {simulate_queue_times(s, p) for p in ("baseline", "severity", "teq")}
    assert len(vals) == 1


def test_no_actionable_is_none():
    s = QueueSlice(100, 0, (q(0, 1, 5, False, 0.5),))
    assert simulate_queue_times(s, "teq") is None


def test_oracle_is_optimal(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        labels = rng.random(n) < 0.5
        members = tuple(q(i, i, float(rng.integers(1, 50)), bool(labels[i]), float(labels[i])) for i in range(n))
        s = QueueSlice(100, 0, members)
        got = simulate_queue_times(s, "teq")
        if got is None:
            continue
        best = min(assign_queue_times(members, p)[labels].mean() for p in itertools.permutations(range(n)))
        assert got == pytest.approx(best)


def test_slices():
    incs = [q(i, t, 1, True, 0.5) for i, t in enumerate([0, 10, 3599, 3600, 9000])]
    sl = make_slices(incs, 3600)
    assert [len(s.members) for s in sl] == [3, 1, 1]
    assert [s.start for s in sl] == [0, 3600, 7200]
    with pytest.raises(ValueError):
        QueueSlice(10, 0, (q(0, 10, 1, True, 0.5),))


def test_queue_experiment_excludes_empty(rng):
    incs = [q(0, 0, 10, False, 0.1), q(1, 5, 20, True, 0.9), q(2, 4000, 30, False, 0.3)]
    res = queue_experiment(incs, 3600)
    assert res.n_slices == 2 and res.n_used == 1
    assert res.means["teq"] == 10 and res.savings("teq") == pytest.approx(0.5)


def test_threshold_examples():
    s = [0.9, 0.8, 0.7, 0.2, 0.6, 0.1]
    y = [1, 1, 1, 1, 0, 0]
    assert select_threshold_at_recall(s, y, 0.75) == (0.7, 0.75)
    assert select_threshold_at_recall(s, y, 1.0)[0] == 0.2
    sep = select_threshold_at_recall([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0], 0.95)
    assert sep == (0.8, 1.0)
    with pytest.raises(ValueError):
        select_threshold_at_recall([0.1, 0.2], [0, 0])


def test_suppression_partition(rng):
    incs = [q(i, int(rng.integers(0, 5 * 86400)), 1, bool(rng.random() < 0.2), float(rng.random()))
            for i in range(300)]
    res = suppress_incidents(incs, 0.4)
    assert sorted(res.retained + res.suppressed) == sorted(i.incident_id for i in incs)
    c = res.counts
    assert c["tp_retained"] + c["tp_suppressed"] + c["fp_retained"] + c["fp_suppressed"] == 300
    assert sum(d["suppressed"] for d in res.daily) == c["suppressed"]
    assert suppress_incidents(incs, 0.0).counts["suppressed"] == 0
    assert suppress_incidents(incs, 1.0).counts["retained"] == 0


def test_rank_within_incident():
    r = rank_alerts_within_incident(["a", "b", "c"], [0.1, 0.9, 0.3], evidence="c")
    assert r.order == ("b", "c", "a") and r.top_chronological_position == 2
    assert (r.evidence_rank, r.evidence_chronological) == (2, 3)
    tie = rank_alerts_within_incident(["a", "b", "c"], {"a": 0.5, "b": 0.5, "c": 0.5})
    assert tie.order == ("a", "b", "c")
    with pytest.raises(ValueError):
        rank_alerts_within_incident(["a"], [0.1], evidence="z")


def test_planted_gun_reduces_inspection(rng):
    rankings = []
    for i in range(300):
        n = int(rng.integers(2, 8))
        scores = rng.random(n) * 0.8
        gun = int(rng.integers(n))
        scores[gun] = 0.95
        ids = [f"{i}-{j}" for j in range(n)]
        rankings.append(rank_alerts_within_incident(ids, scores, ids[gun], f"i{i}"))
    summ = inspection_summary(rankings)
    assert summ["teq"] == 1.0 < summ["chronological"]
    assert inspection_summary([])["incidents"] == 0
