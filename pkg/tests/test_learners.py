import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from datasets import make_ds, random_ds
from churnforge.evaluation import auc_score
from churnforge.learners import (
    BinMapper,
    LearnerSpec,
    ModelKind,
    ModelSchemaError,
    SamplingMode,
    TrainedModel,
    cross_validate,
    expand_grid,
    load_model,
    log_loss,
    predict,
    resample,
    save_model,
    split_train_test,
    stratified_folds,
    train,
    train_decision_tree,
    train_gbm,
    train_random_forest,
    train_xgb_style,
)


def _imbalanced(n=100, churn=10, seed=0):
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=int)
    y[rng.choice(n, churn, replace=False)] = 1
    return make_ds(rng.normal(size=(n, 2)), y)


# --- split and sampling ---------------------------------------------------

def test_split_is_stratified_and_exact():
    ds = _imbalanced(100, 10)
    tr, te = split_train_test(ds, 0.7, seed=1)
    assert len(tr) == 70 and len(te) == 30
    assert tr.class_counts()["CHURN"] == 7
    assert set(tr.matrix.ids).isdisjoint(te.matrix.ids)
    again, _ = split_train_test(ds, 0.7, seed=1)
    assert list(again.matrix.ids) == list(tr.matrix.ids)


def test_split_hundred_rows_five_churn():
    tr, te = split_train_test(_imbalanced(100, 5), 0.7, seed=4)
    assert len(tr) == 70 and tr.class_counts()["CHURN"] in (3, 4)


def test_split_rejects_tiny_class():
    with pytest.raises(ValueError):
        split_train_test(_imbalanced(20, 1), 0.7)
    with pytest.raises(ValueError):
        split_train_test(_imbalanced(20, 4), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 80), st.integers(1, 40), st.integers(0, 10**6))
def test_sampling_exact(n_active, n_churn, seed):
    y = np.r_[np.zeros(n_active, int), np.ones(n_churn, int)]
    ds = make_ds(np.arange(len(y), dtype=float), y)
    assert resample(ds, "NONE", seed) is ds
    over = resample(ds, SamplingMode.OVERSAMPLE, seed)
    under = resample(ds, SamplingMode.UNDERSAMPLE, seed)
    big = max(n_active, n_churn)
    small = min(n_active, n_churn)
    assert over.class_counts() == {"ACTIVE": big, "CHURN": big}
    assert under.class_counts() == {"ACTIVE": small, "CHURN": small}
    assert set(under.matrix.ids) <= set(ds.matrix.ids)
    assert under.matrix.data.equals(ds.matrix.data.loc[under.matrix.ids])
    # every oversampled row copies an original row of the same class
    for i in over.matrix.ids:
        src = i.split("#")[0]
        assert over.labels[i] == ds.labels[src]
        assert over.matrix.data.loc[i, "f0"] == ds.matrix.data.loc[src, "f0"]


def test_resample_balanced_input_unchanged():
    ds = make_ds(np.arange(10.0), [0, 1] * 5)
    for mode in SamplingMode:
        assert resample(ds, mode, 1).class_counts() == {"ACTIVE": 5, "CHURN": 5}


def test_resample_95_5():
    ds = make_ds(np.arange(100.0), [0] * 95 + [1] * 5)
    assert resample(ds, "OVERSAMPLE", 0).class_counts() == {"ACTIVE": 95, "CHURN": 95}
    assert resample(ds, "UNDERSAMPLE", 0).class_counts() == {"ACTIVE": 5, "CHURN": 5}


def test_two_folds_of_ten():
    ds = make_ds(np.arange(10.0), [0, 1] * 5)
    folds = stratified_folds(ds, 2, seed=0)
    assert np.bincount(folds).tolist() == [5, 5]
    assert all(0 < ds.y[folds == k].sum() < 5 for k in (0, 1))


def test_stratified_folds_balance():
    ds = _imbalanced(103, 21)
    folds = stratified_folds(ds, 10, seed=3)
    sizes = np.bincount(folds, minlength=10)
    assert sizes.max() - sizes.min() <= 1
    churn_sizes = np.bincount(folds[ds.y == 1], minlength=10)
    assert churn_sizes.max() - churn_sizes.min() <= 1
    with pytest.raises(ValueError):
        stratified_folds(_imbalanced(50, 5), 10)


def test_expand_grid():
    assert expand_grid(None) == [{}]
    assert expand_grid({"b": [1, 2], "a": [3]}) == [{"a": 3, "b": 1}, {"a": 3, "b": 2}]


# --- binning --------------------------------------------------------------

def test_bins_exact_below_cap():
    x = np.array([[3.0], [1.0], [2.0], [2.0]])
    bm = BinMapper(256).fit(x, np.array([False]))
    assert list(bm.thresholds[0]) == [1.5, 2.5]
    assert list(bm.transform(x)[:, 0]) == [2, 0, 1, 1]


def test_bins_capped():
    x = np.random.default_rng(0).normal(size=(5000, 1))
    bm = BinMapper(16).fit(x, np.array([False]))
    assert bm.n_bins[0] <= 16
    assert np.bincount(bm.transform(x)[:, 0]).min() > 200


# --- decision tree --------------------------------------------------------

def test_tree_separable_threshold():
    ds = make_ds([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0, 0, 0, 1, 1, 1])
    m = train_decision_tree(ds)
    t = m.trees[0]
    assert t.n_nodes == 3
    assert t.threshold[0] == 3.5
    assert list(predict(m, ds.matrix)) == [0, 0, 0, 1, 1, 1]


def test_tree_xor_is_learned():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    # every single cut of XOR has zero gain; no stump classifies it
    assert oracles.best_xgb_split(x, y - 0.5, np.ones(4), 0.0, 0.0) is None
    m = train_decision_tree(make_ds(x, y))
    assert (predict(m, make_ds(x, y).matrix).to_numpy() == y).all()
    assert m.trees[0].max_depth == 2
    assert m.trees[0].gain[0] == 0.0


def test_pure_node_never_splits():
    m = train_decision_tree(make_ds(np.arange(8.0), [1] * 8))
    assert m.trees[0].n_nodes == 1


def test_tree_constant_feature_single_leaf():
    m = train_decision_tree(make_ds(np.ones(10), [0, 1] * 5))
    assert m.trees[0].n_nodes == 1
    assert predict(m, make_ds(np.ones(3), [0, 1, 0]).matrix).tolist() == [0.5] * 3


def test_tree_node_budget():
    ds = random_ds(np.random.default_rng(1), 400, 4)
    m = train_decision_tree(ds, max_nodes=15)
    assert m.trees[0].n_nodes <= 15


def test_tree_invariant_to_row_order():
    rng = np.random.default_rng(2)
    ds = random_ds(rng, 300, 3)
    perm = rng.permutation(300)
    ids = ds.matrix.ids[perm]
    shuffled = ds.subset(ids)
    a = train_decision_tree(ds).trees[0].to_preorder()
    b = train_decision_tree(shuffled).trees[0].to_preorder()
    assert a == b


def test_categorical_subset_split():
    codes = np.array(["a", "b", "c", "d"] * 10, dtype=object)
    y = np.isin(codes, ["b", "d"]).astype(int)
    m = train_decision_tree(make_ds(codes[:, None], y, categorical=(0,)))
    t = m.trees[0]
    assert t.n_nodes == 3
    assert sorted(m.categories["f0"][c] for c in t.categories[0]) in (["a", "c"], ["b", "d"])
    # unseen level goes right and gets a real probability
    p = predict(m, make_ds(np.array([["zz"]], dtype=object), [0], categorical=(0,)).matrix)
    assert 0.0 <= p.iloc[0] <= 1.0


# --- random forest --------------------------------------------------------

def test_forest_reduces_to_tree():
    ds = random_ds(np.random.default_rng(3), 200, 3)
    rf = train_random_forest(ds, n_trees=1, bootstrap=False, max_features=None, max_nodes=398)
    dt = train_decision_tree(ds)
    assert rf.trees[0].to_preorder() == dt.trees[0].to_preorder()


def test_forest_seeded():
    ds = random_ds(np.random.default_rng(4), 200, 5)
    a = train_random_forest(ds, n_trees=5, seed=9)
    b = train_random_forest(ds, n_trees=5, seed=9, threads=2)
    c = train_random_forest(ds, n_trees=5, seed=10)
    assert a.to_json() == b.to_json()
    assert a.to_json() != c.to_json()
    assert a.trees[0].to_preorder() != a.trees[1].to_preorder()


# --- boosting -------------------------------------------------------------

def test_single_class_gives_no_trees():
    ds = make_ds(np.arange(6.0), [0] * 6)
    for fn in (train_gbm, train_xgb_style):
        m = fn(ds, n_trees=5)
        assert m.trees == []
        assert m.base_score < -20


@pytest.mark.parametrize("fn", [train_gbm, train_xgb_style])
@pytest.mark.parametrize("seed", range(5))
def test_boosted_loss_non_increasing(fn, seed):
    ds = random_ds(np.random.default_rng(seed), 300, 4)
    m = fn(ds, n_trees=25, learning_rate=0.1)
    losses = np.array(m.train_loss)
    assert len(losses) == 26
    assert (np.diff(losses) <= 1e-15).all()
    assert losses[-1] < losses[0]
    # the stored trace agrees with a recomputation
    from churnforge.learners.models import encode
    f = m.raw_score(encode(ds.matrix, m.features, m.categories))
    assert log_loss(ds.y.astype(float), f) == pytest.approx(losses[-1], abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_xgb_stump_matches_exhaustive_search(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(20, 200))
    x = np.round(rng.normal(size=(n, 3)), 2)
    y = (x[:, 0] + rng.normal(scale=1.0, size=n) > 0.5).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    m = train_xgb_style(make_ds(x, y), n_trees=1, max_depth=1, reg_lambda=1.0,
                        min_child_weight=0.0)
    p0 = y.mean()
    g = y - p0
    h = np.full(n, p0 * (1 - p0))
    best = oracles.best_xgb_split(x, g, h, 1.0, 0.0)
    t = m.trees[0]
    assert (t.feature[0], t.threshold[0]) == (best[1], best[2])
    assert t.gain[0] == pytest.approx(best[0], rel=1e-9)


def test_xgb_huge_lambda_gives_flat_trees():
    ds = random_ds(np.random.default_rng(5), 200, 3)
    m = train_xgb_style(ds, n_trees=3, reg_lambda=1e12)
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert np.allclose(m.raw_score(x), m.base_score, atol=1e-8)


def test_gamma_prunes_everything():
    ds = random_ds(np.random.default_rng(6), 200, 3)
    m = train_xgb_style(ds, n_trees=2, gamma=1e9)
    assert all(t.n_nodes == 1 for t in m.trees)


# --- persistence and prediction -------------------------------------------

@pytest.mark.parametrize("kind", list(ModelKind))
def test_model_round_trip_bit_exact(kind, tmp_path):
    rng = np.random.default_rng(7)
    ds = random_ds(rng, 250, 4, categorical=(3,))
    params = {} if kind is ModelKind.DECISION_TREE else {"n_trees": 6}
    m = train(kind, ds, params, seed=3)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    a = predict(m, ds.matrix).to_numpy()
    b = predict(back, ds.matrix).to_numpy()
    assert a.tobytes() == b.tobytes()
    assert back.to_json() == m.to_json()


def test_schema_mismatch_rejected():
    ds = random_ds(np.random.default_rng(8), 100, 3)
    m = train_decision_tree(ds)
    other = ds.matrix.select(["f0", "f1"])
    with pytest.raises(ModelSchemaError):
        predict(m, other)
    empty = ds.matrix.select(rows=[])
    assert len(predict(m, empty)) == 0


def test_corrupt_model_document():
    ds = random_ds(np.random.default_rng(8), 60, 2)
    d = train_decision_tree(ds).to_dict()
    d["schema_hash"] = "0" * 64
    with pytest.raises(ModelSchemaError):
        TrainedModel.from_dict(d)


# --- cross-validation -----------------------------------------------------

def test_cross_validation_picks_best_and_breaks_ties_small():
    ds = random_ds(np.random.default_rng(9), 300, 3)
    spec = LearnerSpec(ModelKind.DECISION_TREE)
    res = cross_validate(ds, spec, k=3, grid={"max_depth": [1, 4]}, seed=0)
    assert len(res.grid) == 2
    assert res.best_mean_auc == max(g["mean_auc"] for g in res.grid)
    assert all(len(g["fold_aucs"]) == 3 for g in res.grid)
    # identical grid points tie; the shallower one wins
    tie = cross_validate(ds, spec, k=3, grid=[{"max_depth": 30}, {"max_depth": 20}], seed=0)
    assert tie.grid[0]["mean_auc"] == tie.grid[1]["mean_auc"]
    assert tie.best_params["max_depth"] == 20


def test_single_grid_point_returned():
    ds = random_ds(np.random.default_rng(9), 120, 2)
    res = cross_validate(ds, LearnerSpec(ModelKind.DECISION_TREE), k=3, grid=[{"max_depth": 3}])
    assert res.best_params["max_depth"] == 3 and len(res.grid[0]["fold_aucs"]) == 3


def test_gbm_zero_trees_and_threshold_concept():
    x = np.linspace(0, 1, 40)
    y = (x > 0.6).astype(int)
    ds = make_ds(x, y)
    m0 = train_gbm(ds, n_trees=0)
    assert np.allclose(m0.raw_score(x[:, None]), np.log(y.mean() / (1 - y.mean())))
    m = train_gbm(ds, n_trees=50)
    assert auc_score(y, predict(m, ds.matrix).to_numpy()) == 1.0


def test_single_leaf_prediction():
    from churnforge.learners import Tree
    t = Tree()
    t.add(0.3, 5, 0)
    m = TrainedModel(ModelKind.DECISION_TREE, [t], 0.3, [("f0", "NUMERIC")])
    assert predict(m, make_ds(np.arange(4.0), [0, 1, 0, 1]).matrix).tolist() == [0.3] * 4


def test_forest_trees_disagree_on_noisy_data():
    ds = random_ds(np.random.default_rng(12), 300, 4, signal=0.5)
    rf = train_random_forest(ds, n_trees=2, seed=0)
    from churnforge.learners.models import encode
    x = encode(ds.matrix, rf.features, rf.categories)
    assert (rf.trees[0].predict_value(x) != rf.trees[1].predict_value(x)).mean() > 0


def test_default_sampling():
    assert LearnerSpec("XGB_STYLE").sampling is SamplingMode.NONE
    assert LearnerSpec("RANDOM_FOREST").sampling is SamplingMode.UNDERSAMPLE


def test_models_beat_chance():
    rng = np.random.default_rng(11)
    ds = random_ds(rng, 600, 4)
    tr, te = split_train_test(ds, 0.7, seed=0)
    for kind in ModelKind:
        params = {} if kind is ModelKind.DECISION_TREE else {"n_trees": 20}
        m = train(kind, tr, params, seed=1)
        assert auc_score(te.y, predict(m, te.matrix).to_numpy()) > 0.7, kind
