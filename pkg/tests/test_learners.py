import numpy as np
import pytest

from teq.learners import (
    Algorithm,
    ForestModel,
    LogisticModel,
    ModelFormatError,
    TrainConfig,
    TreeEnsemble,
    gradient_check,
    load_model,
    save_model,
    train,
)
from teq.learners.gradcheck import bias_gradient
from teq.learners.linear import logistic_grad

FAST = {
    "rf": {"n_trees": 15},
    "gbt": {"n_rounds": 15, "max_depth": 3},
    "mlp": {"hidden": 8, "epochs": 10},
    "lr": {"epochs": 200},
}


def _blobs(rng, n=200):
    X = np.vstack([rng.normal(-3, 1, size=(n // 2, 2)), rng.normal(3, 1, size=(n // 2, 2))])
    y = np.r_[np.zeros(n // 2), np.ones(n // 2)]
    return X, y


def _task(rng, n=600, d=6):
    X = rng.normal(size=(n, d))
    y = (X[:, 0] - 0.5 * X[:, 1] + 0.3 * rng.normal(size=n) > 0).astype(float)
    return X, y


def test_lr_separable(rng):
    X, y = _blobs(rng)
    m = train(X, y, TrainConfig("lr", 0))
    assert ((m.predict_proba(X) >= 0.5) == y).all()


def test_single_tree_xor():
    X = np.tile([[0, 0], [0, 1], [1, 0], [1, 1]], (50, 1)).astype(float)
    y = np.logical_xor(X[:, 0], X[:, 1]).astype(float)
    m = train(X, y, TrainConfig("rf", 0, {"n_trees": 1, "max_features": None, "bootstrap": False, "max_depth": 2}))
    assert ((m.predict_proba(X) >= 0.5) == y).all()


def test_zero_weight_lr():
    m = LogisticModel(np.zeros(3), 0.0, np.zeros(3), np.ones(3), {}, 3)
    assert np.all(m.predict_proba(np.random.default_rng(0).normal(size=(5, 3))) == 0.5)


def _stump(left_value, right_value):
    # split on feature 0 at 0.5; nodes: root, left leaf, right leaf
    return (np.array([0, -1, -1]), np.array([0.5, 0, 0]), np.array([1, -1, -1]),
            np.array([2, -1, -1]), np.array([0.0, left_value, right_value]))


def test_hand_built_forest_vote():
    forest = ForestModel(TreeEnsemble([_stump(1.0, 0.0), _stump(1.0, 0.0), _stump(0.0, 1.0)]), {}, 1)
    np.testing.assert_allclose(forest.predict_proba(np.array([[0.0], [1.0]])), [2 / 3, 1 / 3])


def test_memorizing_forest(rng):
    X, y = _task(rng, 300)
    m = train(X, y, TrainConfig("rf", 1, {"n_trees": 25}))
    p = m.predict_proba(X)
    assert np.mean(np.abs(p - y)) < 0.15


@pytest.mark.parametrize("algo", ["lr", "rf", "gbt", "mlp"])
def test_learns_and_is_deterministic(rng, algo):
    X, y = _task(rng)
    a = train(X, y, TrainConfig(algo, 7, FAST[algo]))
    b = train(X, y, TrainConfig(algo, 7, FAST[algo]))
    assert a.dumps() == b.dumps()
    p = a.predict_proba(X)
    assert ((p >= 0) & (p <= 1)).all()
    assert np.mean((p >= 0.5) == y) > 0.8


@pytest.mark.parametrize("algo", ["lr", "rf", "gbt", "mlp"])
def test_round_trip(tmp_path, rng, algo):
    X, y = _task(rng)
    m = train(X, y, TrainConfig(algo, 3, FAST[algo]))
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    Z = rng.normal(size=(1000, X.shape[1]))
    assert np.array_equal(back.predict_proba(Z), m.predict_proba(Z))
    assert back.dumps() == m.dumps()


def test_round_trip_100_trees(tmp_path, rng):
    X, y = _task(rng, 400)
    m = train(X, y, TrainConfig("rf", 5))
    assert m.trees.n_trees == 100
    save_model(m, tmp_path / "f.json")
    Z = rng.normal(size=(1000, X.shape[1]))
    assert np.array_equal(load_model(tmp_path / "f.json").predict_proba(Z), m.predict_proba(Z))


def test_lr_weights_round_trip(tmp_path, rng):
    X, y = _task(rng)
    m = train(X, y, TrainConfig("lr", 0, FAST["lr"]))
    save_model(m, tmp_path / "lr.json")
    back = load_model(tmp_path / "lr.json")
    assert np.array_equal(back.weights, m.weights) and back.bias == m.bias


def test_truncated_file(tmp_path, rng):
    X, y = _task(rng)
    save_model(train(X, y, TrainConfig("lr", 0, FAST["lr"])), tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "bad.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "bad.json")
    (tmp_path / "foreign.json").write_text('{"format": "other"}')
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "foreign.json")


def test_train_errors(rng):
    X, y = _task(rng)
    with pytest.raises(ValueError):
        train(X, np.zeros(len(y)), TrainConfig("lr"))
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        train(bad, y, TrainConfig("rf"))
    m = train(X, y, TrainConfig("lr", 0, FAST["lr"]))
    with pytest.raises(ValueError):
        m.predict_proba(X[:, :3])
    with pytest.raises(ValueError):
        TrainConfig("gbt", 0, {"depth": 3})


def test_gradchecks(rng):
    for i in range(20):
        X = rng.normal(size=(1, 7))
        y = rng.integers(0, 2, size=1).astype(float)
        assert gradient_check("lr", X, y, seed=i) < 1e-6
        assert gradient_check("mlp", X, y, seed=i, hidden=5) < 1e-4
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 2, size=30).astype(float)
    assert gradient_check("lr", X, y, seed=1, l2=0.1) < 1e-6
    assert gradient_check("mlp", X, y, seed=1, l2=0.1) < 1e-4


def test_zero_input_bias_gradient():
    w = np.array([0.3, -1.2])
    X = np.zeros((1, 2))
    gw, gb = logistic_grad(w, 0.4, X, np.array([1.0]), 0.0)
    p = 1 / (1 + np.exp(-0.4))
    assert np.all(gw == 0) and gb == pytest.approx(p - 1.0)
    assert bias_gradient(X, np.array([1.0]), w, 0.4) == pytest.approx(p - 1.0)


def test_tree_scale_invariance(rng):
    X, y = _task(rng)
    Xs = X * np.array([1, 10, 0.1, 3, 100, 7]) + 5
    for algo in ("rf", "gbt"):
        a = train(X, y, TrainConfig(algo, 2, FAST[algo])).predict_proba(X)
        b = train(Xs, y, TrainConfig(algo, 2, FAST[algo])).predict_proba(Xs)
        np.testing.assert_allclose(a, b)


def test_gbt_loss_monotone(rng):
    X, y = _task(rng)
    m = train(X, y, TrainConfig("gbt", 0, FAST["gbt"]))
    h = np.asarray(m.loss_history)
    assert len(h) == 16 and h[0] == pytest.approx(np.log(2))  # initial loss at margin 0
    assert (np.diff(h) <= 1e-12).all()
    assert np.allclose(m.staged_margin(X)[-1], m.decision_function(X))


def test_not_differentiable():
    with pytest.raises(ValueError):
        gradient_check(Algorithm.RF, np.ones((1, 2)), np.ones(1))
