import numpy as np
import pytest

from teq.explain import ImportanceReport, permutation_importance, sampled_shapley, shapley_importance
from teq.learners import TrainConfig, train


def _planted(rng, n=800):
    X = rng.normal(size=(n, 4))
    y = (X[:, 0] + 0.2 * rng.normal(size=n) > 0).astype(float)
    X[:, 2] = y  # oracle column
    X[:, 3] = 1.0  # constant column
    return X, y


def test_oracle_and_noise_columns(rng):
    X, y = _planted(rng)
    model = train(X[:, [2]], y, TrainConfig("lr", 0, {"epochs": 100}))
    f = lambda Z: model.predict_proba(Z[:, [2]])
    rep = permutation_importance(f, X, y, repeats=5, seed=3)
    assert rep.ranking()[0] == 2
    assert rep.values[0] == 0 and rep.values[1] == 0 and rep.values[3] == 0


def test_noise_column_within_band(rng):
    X, y = _planted(rng)
    model = train(X[:, :2], y, TrainConfig("lr", 0, {"epochs": 200}))
    rep = permutation_importance(model.predict_proba, X[:, :2], y, repeats=10, seed=1)
    assert rep.values[0] > 0.2
    assert abs(rep.values[1]) <= 3 * rep.spread[1] + 0.01


def test_permutation_deterministic_and_errors(rng):
    X, y = _planted(rng, 200)
    f = lambda Z: 1 / (1 + np.exp(-Z[:, 0]))
    a = permutation_importance(f, X, y, seed=9)
    b = permutation_importance(f, X, y, seed=9)
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        permutation_importance(f, X, y, repeats=0)
    with pytest.raises(ValueError):
        permutation_importance(f, X, np.zeros(len(y)))


def test_constant_model_zero_attributions(rng):
    est = sampled_shapley(lambda Z: np.full(Z.shape[0], 0.3), rng.normal(size=5), rng.normal(size=(10, 5)), 20)
    assert np.all(est.attributions == 0)


def test_linear_closed_form_exact_with_full_cycles(rng):
    w = np.array([1.0, -2.0, 0.5, 3.0])
    B = rng.normal(size=(25, 4))
    x = rng.normal(size=4)
    est = sampled_shapley(lambda Z: Z @ w, x, B, samples=500, seed=2)
    # for a linear model every order gives w_i (x_i - b_i); averaging over full cycles is exact
    np.testing.assert_allclose(est.attributions, w * (x - B.mean(axis=0)), atol=1e-12)
    assert est.total == pytest.approx(est.target, abs=1e-12)


def test_shapley_errors_and_determinism(rng):
    f = lambda Z: Z.sum(axis=1)
    x, B = rng.normal(size=3), rng.normal(size=(4, 3))
    with pytest.raises(ValueError):
        sampled_shapley(f, x, np.empty((0, 3)))
    with pytest.raises(ValueError):
        sampled_shapley(f, x, B, samples=1)
    a = sampled_shapley(f, x, B, 30, seed=4)
    b = sampled_shapley(f, x, B, 30, seed=4)
    assert np.array_equal(a.attributions, b.attributions)


def test_interaction_efficiency_in_ci(rng):
    f = lambda Z: np.tanh(Z[:, 0] * Z[:, 1]) + Z[:, 2] ** 2
    B = rng.normal(size=(30, 3))
    hits = 0
    for i in range(40):
        est = sampled_shapley(f, rng.normal(size=3), B, samples=47, seed=i)
        lo, hi = est.ci()
        hits += lo <= est.target <= hi
    assert hits >= 34


def test_report(rng):
    f = lambda Z: 1 / (1 + np.exp(-Z @ np.array([2.0, 0.0, -1.0])))
    rep = shapley_importance(f, rng.normal(size=(5, 3)), rng.normal(size=(8, 3)), 16, 0, ["a", "b", "c"])
    assert [n for n, _ in rep.top(2)] == ["a", "c"]
    assert rep.to_dict(top=1)["features"][0]["name"] == "a"
    assert rep.to_csv().splitlines()[0] == "rank,feature,value,spread"
    with pytest.raises(ValueError):
        ImportanceReport("permutation", ["a"], [np.nan], [0.0], 1, 1)
