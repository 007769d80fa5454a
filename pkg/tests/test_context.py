import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teq.context import (
    COUNT_PREDICATES,
    ContextConfig,
    Predicate,
    brute_force_context,
    compute_context_stream,
    context_matrix,
)

from conftest import make_alert, random_stream


def test_first_alert():
    cfg = ContextConfig()
    (v,) = context_matrix([make_alert(0, 100, severity=3.5)], cfg)
    for p in cfg.predicates:
        for w in cfg.windows:
            want = 3.5 if "severity" in p.value else 1.0
            assert v[cfg.column(p, w)] == want
    assert np.array_equal(v, brute_force_context([make_alert(0, 100, severity=3.5)], 0, cfg))


def test_two_alerts_90s_apart():
    cfg = ContextConfig()
    X = context_matrix([make_alert(0, 0), make_alert(1, 90)], cfg)
    assert X[1, cfg.column(Predicate.MACHINE_ALERTS, 60)] == 1
    for w in cfg.windows[1:]:
        assert X[1, cfg.column(Predicate.MACHINE_ALERTS, w)] == 2


def test_window_edge_is_open():
    cfg = ContextConfig(windows=(60,))
    X = context_matrix([make_alert(0, 0), make_alert(1, 60)], cfg)
    assert X[1, cfg.column(Predicate.MACHINE_ALERTS, 60)] == 1


def test_distinct_predicates_hand_trace():
    cfg = ContextConfig(windows=(1000,))
    alerts = [
        make_alert(0, 0, machine="m1", sensor="s1", customer="c1", severity=1),
        make_alert(1, 1, machine="m2", sensor="s1", customer="c1", severity=2),
        make_alert(2, 2, machine="m3", sensor="s1", customer="c2", severity=4),
        make_alert(3, 3, machine="m1", sensor="s2", customer="c1", severity=8),
    ]
    X = context_matrix(alerts, cfg)
    col = lambda p: cfg.column(p, 1000)
    assert X[2, col(Predicate.SENSOR_DISTINCT_CUSTOMERS)] == 2
    assert X[2, col(Predicate.SENSOR_DISTINCT_MACHINES)] == 3
    assert X[2, col(Predicate.SENSOR_MEAN_SEVERITY)] == pytest.approx(7 / 3)
    assert X[3, col(Predicate.CUSTOMER_DISTINCT_MACHINES)] == 2
    assert X[3, col(Predicate.CUSTOMER_DISTINCT_SENSORS)] == 2
    assert X[3, col(Predicate.MACHINE_MEAN_SEVERITY)] == 4.5
    assert X[3, col(Predicate.CUSTOMER_SENSOR_ALERTS)] == 1
    assert X[3, col(Predicate.CUSTOMER_ALERTS)] == 3


def test_time_regression_raises():
    with pytest.raises(ValueError):
        list(compute_context_stream([make_alert(0, 10), make_alert(1, 9)]))


def test_bad_windows():
    with pytest.raises(ValueError):
        ContextConfig(windows=(60, 60))
    with pytest.raises(ValueError):
        ContextConfig(windows=())


def test_default_width():
    assert ContextConfig().width == 90 and len(ContextConfig().feature_names) == 90


def test_large_window_covers_history():
    alerts = random_stream(50, 1, span=1000)
    cfg = ContextConfig(windows=(10**9,))
    v = brute_force_context(alerts, 49, cfg)
    same_cust = sum(a.customer_id == alerts[49].customer_id for a in alerts)
    assert v[cfg.column(Predicate.CUSTOMER_ALERTS, 10**9)] == same_cust


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 120))
def test_stream_equals_rescan(seed, n):
    alerts = random_stream(n, seed, span=4000, customers=3, machines=6, sensors=4)
    cfg = ContextConfig(windows=(30, 300, 1200, 86400))
    X = context_matrix(alerts, cfg)
    for i in range(n):
        np.testing.assert_array_equal(X[i], brute_force_context(alerts, i, cfg))


def test_count_monotone_in_window():
    alerts = random_stream(400, 9, span=20000)
    cfg = ContextConfig()
    X = context_matrix(alerts, cfg)
    nw = len(cfg.windows)
    for p in COUNT_PREDICATES:
        k = cfg.predicates.index(p)
        block = X[:, k * nw:(k + 1) * nw]
        assert (np.diff(block, axis=1) >= 0).all()
