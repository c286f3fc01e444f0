import inspect
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from oracles import auc_pairwise
from tempofeat.clustering import kmeans_fit
from tempofeat.config import RunConfig
from tempofeat.data import fit_encoding, impute_age_cat
from tempofeat.evaluation import roc_auc
from tempofeat.features import assemble
from tempofeat.models import (
    DecisionTree,
    ModelBank,
    TargetScaler,
    ensemble_mean,
    forest_fit,
    gbt_fit,
    gbt_predict,
    logistic_fit,
    predict_top5,
    rank_top,
    ridge_fit,
    train_branch_bank,
    tree_fit,
)
from tempofeat.models.learners import model_from_dict
from tempofeat.models.tree import _best_split, best_split_numpy, presort


# -------------------------------------------------------------------- trees


def test_constant_target_single_leaf(rng):
    X = rng.normal(size=(30, 3))
    t = tree_fit(X, np.full(30, 4.2))
    assert t.n_nodes == 1
    np.testing.assert_array_equal(t.predict(X), 4.2)


def test_depth_zero_is_mean(rng):
    X, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    t = tree_fit(X, y, max_depth=0)
    assert t.n_nodes == 1
    assert t.predict(X[:1])[0] == pytest.approx(y.mean(), abs=1e-12)


def test_step_function_depth_one():
    x = np.array([-3.0, -2.0, -0.5, 0.5, 1.0, 4.0])
    y = (x > 0).astype(float)
    t = tree_fit(x[:, None], y, max_depth=1)
    assert t.feature[0] == 0
    assert -0.5 < t.threshold[0] < 0.5
    np.testing.assert_array_equal(t.predict(x[:, None]), y)


def test_empty_data_raises():
    with pytest.raises(ValueError):
        tree_fit(np.zeros((0, 2)), np.zeros(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(1, 6))
def test_tree_structure_invariants(seed, max_depth, min_leaf):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(60, 3)), 1)
    y = rng.normal(size=60)
    t = tree_fit(X, y, max_depth=max_depth, min_samples_leaf=min_leaf)
    assert t.depth <= max_depth
    leaves = np.flatnonzero(t.feature < 0)
    assert (t.n_samples[leaves] >= min_leaf).all()
    # every leaf is reached by exactly its own training rows
    counts = np.bincount(t.apply(X), minlength=t.n_nodes)
    np.testing.assert_array_equal(counts[leaves], t.n_samples[leaves])
    reach = {0}
    for node in range(t.n_nodes):
        if node in reach and t.feature[node] >= 0:
            reach |= {t.left[node], t.right[node]}
    assert set(leaves) <= reach


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_compiled_split_matches_numpy_reference(seed, min_leaf):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 4))
    X[:, 1] = np.round(X[:, 1])  # ties inside a column
    y = rng.normal(size=50)
    w = rng.integers(0, 3, 50).astype(float)
    mask = w > 0
    order = presort(X)
    order = order[mask[order]].reshape(4, int(mask.sum()))
    Xt = np.ascontiguousarray(X.T)
    cols = np.arange(4, dtype=np.int64)
    ref = best_split_numpy(Xt, y, w, order, cols, min_leaf)
    got = _best_split(Xt, y, w, order, cols, min_leaf)
    if ref is None:
        assert got is None
        return
    assert got[0] == pytest.approx(ref[0], rel=1e-9, abs=1e-9)
    if got[1] == ref[1]:
        assert got[2] == ref[2]
    else:
        # exact tie between features, broken differently by rounding
        only = np.array([got[1]], dtype=np.int64)
        alt = best_split_numpy(Xt, y, w, order, only, min_leaf)
        assert alt[0] == pytest.approx(ref[0], rel=1e-9) and alt[2] == got[2]


def test_weighted_tree_matches_duplicated_rows(rng):
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    counts = rng.integers(0, 3, 40)
    t_w = tree_fit(X, y, sample_weight=counts.astype(float), max_depth=3)
    rows = np.repeat(np.arange(40), counts)
    t_d = tree_fit(X[rows], y[rows], max_depth=3)
    np.testing.assert_allclose(t_w.predict(X), t_d.predict(X), atol=1e-12)


def test_tree_round_trip(rng):
    X, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    t = tree_fit(X, y, max_depth=4)
    back = DecisionTree.from_dict(json.loads(json.dumps(t.to_dict())))
    np.testing.assert_array_equal(back.predict(X), t.predict(X))


# ---------------------------------------------------------------------- GBT


def test_gbt_zero_learning_rate_is_init_only(rng):
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    m = gbt_fit(X, y, learning_rate=0.0)
    np.testing.assert_array_equal(gbt_predict(m, X), np.full(40, y.mean()))


def test_gbt_defaults():
    sig = inspect.signature(gbt_fit)
    assert sig.parameters["n_estimators"].default == 100
    assert sig.parameters["learning_rate"].default == 0.1
    assert sig.parameters["max_depth"].default == 3


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_gbt_training_mse_non_increasing(seed, nu):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(120, 4))
    y = X[:, 0] ** 2 + rng.normal(size=120)
    m = gbt_fit(X, y, n_estimators=30, learning_rate=nu)
    assert len(m.trees) <= 30
    loss = np.array(m.train_loss)
    assert (np.diff(loss) <= 1e-12 * loss[0]).all()


def test_gbt_prediction_is_init_plus_shrunk_sum(rng):
    X, y = rng.normal(size=(80, 3)), rng.normal(size=80)
    m = gbt_fit(X, y, n_estimators=10, learning_rate=0.3)
    manual = m.init_value + 0.3 * sum(t.predict(X) for t in m.trees)
    np.testing.assert_allclose(m.predict(X), manual, atol=1e-12)


def test_gbt_logistic(rng):
    X = rng.normal(size=(300, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=300) > 0).astype(float)
    m = gbt_fit(X, y, n_estimators=30, loss="logistic")
    p = m.predict(X)
    assert ((p > 0) & (p < 1)).all()
    assert roc_auc(p, y) > 0.9
    manual = 1 / (1 + np.exp(-(m.init_value + 0.1 * sum(t.predict(X) for t in m.trees))))
    np.testing.assert_allclose(p, manual, atol=1e-12)
    with pytest.raises(ValueError):
        gbt_fit(X, np.ones(300), loss="logistic")


def test_gbt_round_trip(rng):
    X, y = rng.normal(size=(60, 3)), rng.normal(size=60)
    m = gbt_fit(X, y, n_estimators=5)
    back = model_from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(back.predict(X), m.predict(X))


# ------------------------------------------------------------------- forest


def test_forest_constant_target(rng):
    X = rng.normal(size=(40, 4))
    f = forest_fit(X, np.full(40, 2.0), n_trees=10)
    np.testing.assert_array_equal(f.predict(X), 2.0)


def test_forest_deterministic(rng):
    X, y = rng.normal(size=(60, 4)), rng.normal(size=60)
    a = forest_fit(X, y, n_trees=8, seed=3).predict(X)
    b = forest_fit(X, y, n_trees=8, seed=3).predict(X)
    assert a.tobytes() == b.tobytes()


def test_forest_beats_mean_on_linear_signal(rng):
    X = rng.normal(size=(600, 5))
    y = 2 * X[:, 0] - X[:, 1] + 0.3 * rng.normal(size=600)
    f = forest_fit(X[:400], y[:400], n_trees=30, seed=1)
    resid = y[400:] - f.predict(X[400:])
    r2 = 1 - resid.var() / y[400:].var()
    assert r2 > 0.5


def test_forest_classification_score_in_unit_interval(rng):
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(float)
    f = forest_fit(X, y, n_trees=10, task="classification")
    p = f.predict(X)
    assert ((p >= 0) & (p <= 1)).all()


# ------------------------------------------------------------------- linear


def test_ridge_identity_interpolates():
    # with an intercept, the first three identity columns span every 4-vector
    X = np.eye(4)
    y = np.array([1.0, -2.0, 3.0, 0.5])
    m = ridge_fit(X[:, :3], y, lam=0.0)
    np.testing.assert_allclose(m.predict(X[:, :3]), y, atol=1e-10)


def test_ridge_matches_normal_equations(rng):
    X, y = rng.normal(size=(10, 5)), rng.normal(size=10)
    m = ridge_fit(X, y, lam=0.0)
    A = np.hstack([X, np.ones((10, 1))])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose(m.weights, beta[:5], atol=1e-8)
    assert m.intercept == pytest.approx(beta[5], abs=1e-8)


def test_ridge_huge_lambda(rng):
    X, y = rng.normal(size=(30, 4)), rng.normal(size=30)
    m = ridge_fit(X, y, lam=1e12)
    assert np.linalg.norm(m.weights) < 1e-6
    np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-5)


def test_ridge_duplicates_equal_weights(rng):
    X, y = rng.normal(size=(8, 3)), rng.normal(size=8)
    counts = np.array([1, 2, 3, 1, 1, 2, 1, 4])
    rows = np.repeat(np.arange(8), counts)
    a = ridge_fit(X[rows], y[rows], lam=0.5)
    b = ridge_fit(X, y, lam=0.5, sample_weight=counts.astype(float))
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-10)
    assert a.intercept == pytest.approx(b.intercept, abs=1e-10)


def test_ridge_singular_raises():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(np.linalg.LinAlgError, match="lambda > 0"):
        ridge_fit(X, np.array([1.0, 2.0, 3.0]), lam=0.0)


def test_logistic_zero_iterations(rng):
    X = rng.normal(size=(20, 3))
    y = (rng.random(20) < 0.5).astype(float)
    y[:2] = [0, 1]
    m = logistic_fit(X, y, max_iter=0)
    assert (m.weights == 0).all() and m.intercept == 0
    np.testing.assert_array_equal(m.predict(X), 0.5)


def test_logistic_separable():
    x = np.linspace(-2, 2, 40)[:, None]
    y = (x[:, 0] > 0).astype(float)
    m = logistic_fit(x, y, l2_lambda=0.1)
    assert roc_auc(m.predict(x), y) == 1.0


def test_logistic_single_class():
    with pytest.raises(ValueError):
        logistic_fit(np.zeros((3, 1)), np.zeros(3))


def _penalised(X, y, m):
    z = m.decision_function(X)
    return np.sum(np.logaddexp(0, z) - y * z) + 0.5 * m.l2_lambda * m.weights @ m.weights


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10))
def test_logistic_improves_on_zero_and_affine_invariance(seed, lam):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 3))
    y = (X @ [1.0, -0.5, 0.2] + rng.normal(size=80) > 0).astype(float)
    y[:2] = [0, 1]
    m = logistic_fit(X, y, l2_lambda=lam)
    zero = type(m)(np.zeros(3), 0.0, lam, "logistic")
    assert _penalised(X, y, m) <= _penalised(X, y, zero) + 1e-9
    assert np.linalg.norm(X.T @ (m.predict(X) - y) + lam * m.weights) < 1e-6
    # affine change of a standardised column keeps the ranking with lambda ~ 0
    Xs = (X - X.mean(0)) / X.std(0)
    Xa = Xs.copy()
    Xa[:, 1] = 3.0 * Xa[:, 1] + 7.0
    a = logistic_fit(Xs, y, l2_lambda=1e-9)
    b = logistic_fit(Xa, y, l2_lambda=1e-9)
    assert roc_auc(a.predict(Xs), y) == pytest.approx(roc_auc(b.predict(Xa), y), abs=1e-12)


# ---------------------------------------------------------- top-5 and bank


def test_rank_top_examples():
    assert rank_top([[2.5, 0.1, 1.0]], [0, 1, 2]) == [[(0, 2.5), (2, 1.0), (1, 0.1)]]
    assert rank_top([[-1.0, -2.0, -3.0]], [0, 1, 2]) == [[(0, 0.0), (1, 0.0), (2, 0.0)]]
    assert rank_top([[1.0, 3.0, 3.0]], [7, 9, 4])[0][:2] == [(4, 3.0), (9, 3.0)]
    assert len(rank_top(np.zeros((1, 8)), np.arange(8))[0]) == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_rank_top_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    P = np.round(rng.normal(size=(5, 9)), 2)
    ids = rng.permutation(9)
    a = [[b for b, _ in row] for row in rank_top(P, ids)]
    b = [[b for b, _ in row] for row in rank_top(c * P, ids)]
    assert a == b


def test_ensemble_mean(rng):
    x = rng.random(6)
    np.testing.assert_allclose(ensemble_mean([x, x, x]), x, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(ensemble_mean([[0, 1], [1, 0]]), [0.5, 0.5])
    lists = rng.random((4, 10))
    np.testing.assert_allclose(ensemble_mean(list(lists)),
                               [sum(col) / 4 for col in lists.T], atol=1e-15)
    with pytest.raises(ValueError):
        ensemble_mean([[1, 2], [1]])


def test_target_scaler_round_trip(rng):
    Y = rng.poisson(3, (50, 6)).astype(float)
    Y[:, 2] = 0
    s = TargetScaler.fit(Y)
    assert np.abs(s.denormalize(s.normalize(Y)) - Y).max() < 1e-9
    assert s.normalize(Y)[:, [0, 1, 3, 4, 5]].max(axis=0).tolist() == [1.0] * 5


@pytest.fixture(scope="module")
def bank_inputs(small_ds):
    ds = small_ds.with_users(impute_age_cat(small_ds.users))
    enc = fit_encoding(ds)
    km = kmeans_fit(ds.users[["geo_x", "geo_y"]].to_numpy(), k=3, seed=0)
    fm = assemble("FS10", ds, enc, km)
    cfg = RunConfig(task=1, feature_set="FS10", n_estimators=5, seed=11)
    return ds, fm, cfg


def test_bank_one_regressor_per_branch(bank_inputs):
    ds, fm, cfg = bank_inputs
    branches = ds.branches.iloc[:3]
    visits = ds.visits[ds.visits["branch_id"].isin(branches["branch_id"])]
    bank = train_branch_bank(fm, visits, branches, cfg)
    assert bank.n_branches == 3
    top = predict_top5(bank, fm)
    assert all(len(row) == 3 for row in top)


def test_bank_targets_are_per_branch(bank_inputs):
    ds, fm, cfg = bank_inputs
    branches = ds.branches.iloc[:2]
    visits = pd.DataFrame({"user_id": fm.user_ids[:5], "branch_id": branches["branch_id"].iloc[0],
                           "visits": 3.0})
    bank = train_branch_bank(fm, visits, branches, cfg.replace(model="ridge"))
    P = bank.predict_matrix(fm)
    assert np.abs(P[:, 1]).max() < 1e-9  # branch never visited: all-zero target
    assert P[:5, 0].mean() > P[5:, 0].mean()


def test_bank_workers_and_persistence(bank_inputs):
    ds, fm, cfg = bank_inputs
    branches = ds.branches.iloc[:4]
    visits = ds.visits[ds.visits["branch_id"].isin(branches["branch_id"])]
    one = train_branch_bank(fm, visits, branches, cfg, normalize_targets=True, workers=1)
    two = train_branch_bank(fm, visits, branches, cfg, normalize_targets=True, workers=2)
    a = one.predict_matrix(fm)
    assert a.tobytes() == two.predict_matrix(fm, workers=2).tobytes()
    back = ModelBank.from_dict(json.loads(json.dumps(one.to_dict())))
    assert back.predict_matrix(fm).tobytes() == a.tobytes()


def test_bank_forest_uses_branch_seeds(bank_inputs):
    ds, fm, cfg = bank_inputs
    branches = ds.branches.iloc[:2]
    visits = ds.visits[ds.visits["branch_id"].isin(branches["branch_id"])]
    c = cfg.replace(model="forest", n_estimators=3)
    a = train_branch_bank(fm, visits, branches, c).predict_matrix(fm)
    b = train_branch_bank(fm, visits, branches.iloc[::-1], c).predict_matrix(fm)
    np.testing.assert_array_equal(a, b[:, ::-1])


def test_bank_requires_targets(bank_inputs):
    ds, fm, cfg = bank_inputs
    with pytest.raises(ValueError):
        train_branch_bank(fm, None, ds.branches, cfg)


def test_auc_oracle_sanity():
    assert auc_pairwise([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
