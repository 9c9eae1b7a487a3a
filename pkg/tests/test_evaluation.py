import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from datasets import random_ds
from churnforge.evaluation import UndefinedAuc, auc_score, feature_importance, roc_auc
from churnforge.learners import train_xgb_style


def test_auc_examples():
    assert auc_score([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert auc_score([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0
    assert auc_score([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]) == 0.5
    assert auc_score([0, 0, 1], [0.1, 0.4, 0.35]) == 0.5


def test_string_labels_and_series_alignment():
    s = pd.Series([0.9, 0.1], index=["b", "a"])
    lab = pd.Series(["ACTIVE", "CHURN"], index=["a", "b"])
    assert auc_score(lab, s) == 1.0


def test_single_class_undefined():
    with pytest.raises(UndefinedAuc):
        auc_score([1, 1, 1], [0.1, 0.2, 0.3])


def test_roc_curve_endpoints_and_csv():
    r = roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert (r.fpr[0], r.tpr[0]) == (0.0, 0.0)
    assert (r.fpr[-1], r.tpr[-1]) == (1.0, 1.0)
    assert np.isinf(r.thresholds[0])
    assert r.auc == 0.75
    lines = r.to_csv().splitlines()
    assert lines[0] == "fpr,tpr,threshold"
    assert len(lines) == 1 + len(r.fpr)


def test_auc_matches_pair_oracle_on_100_sets():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        y = rng.integers(0, 2, size=n)
        y[0], y[1] = 0, 1
        # coarse rounding forces plenty of ties
        s = np.round(rng.normal(size=n) + 0.7 * y, int(rng.integers(0, 3)))
        assert abs(auc_score(y, s) - oracles.auc_pairs(y.tolist(), s.tolist())) <= 1e-12


_sets = st.integers(2, 60).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
    st.lists(st.integers(-20, 20).map(float), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(_sets)
def test_auc_monotone_invariance_and_reversal(case):
    y, s = case
    s = np.array(s)
    a = auc_score(y, s)
    assert auc_score(y, np.exp(s / 7.0) * 3 + 1) == pytest.approx(a, abs=1e-12)
    assert auc_score(y, s ** 3) == pytest.approx(a, abs=1e-12)
    assert auc_score(y, -s) == pytest.approx(1 - a, abs=1e-12)


def test_feature_importance_ranking():
    ds = random_ds(np.random.default_rng(1), 400, 4)
    m = train_xgb_style(ds, n_trees=10)
    imp = feature_importance(m)
    assert imp[0][0] == "f0"
    gains = [g for _, g, _ in imp]
    assert gains == sorted(gains, reverse=True)
    assert sum(s for _, _, s in imp) == pytest.approx(1.0)
    assert all(g > 0 for g in gains)


def test_interleaved_labels_three_quarters():
    assert auc_score([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.1]) == 0.75


def test_importance_of_stump_and_single_split():
    from datasets import make_ds
    flat = train_xgb_style(make_ds(np.ones(6), [0, 1] * 3), n_trees=1)
    assert feature_importance(flat) == []
    x = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    one = train_xgb_style(make_ds(x, [0, 0, 1, 1]), n_trees=1, max_depth=1, min_child_weight=0.0)
    assert [(f, s) for f, _, s in feature_importance(one)] == [("f0", 1.0)]


def test_top_feature_matches_gain_oracle():
    from datasets import make_ds
    rng = np.random.default_rng(33)
    x = np.round(rng.normal(size=(150, 3)), 2)
    y = (x[:, 2] + 0.3 * rng.normal(size=150) > 0).astype(int)
    m = train_xgb_style(make_ds(x, y), n_trees=1, max_depth=1, reg_lambda=0.0, min_child_weight=0.0)
    p0 = y.mean()
    best = oracles.best_xgb_split(x, y - p0, np.full(150, p0 * (1 - p0)), 0.0, 0.0)
    assert feature_importance(m)[0][0] == f"f{best[1]}"


def test_grid_with_one_cell(tmp_path):
    from churnforge.cdr_ingest import labels_series, profiles_frame
    from churnforge.config import config_from_dict
    from churnforge.evaluation import run_experiment_grid
    from churnforge.pipeline import RawData
    from churnforge.synthetic import SyntheticSpec, simulate
    sd = simulate(SyntheticSpec(n_customers=300), 2)
    raw = RawData(sd.cdr, profiles_frame(sd.profiles), labels_series(sd.labels))
    cfg = config_from_dict({"seed": 2, "experiment": {
        "feature_sets": ["STATISTICAL"], "algorithms": ["DECISION_TREE"], "sampling_modes": [],
        "statistical_windows": [], "sna_windows": []}}, base_dir=tmp_path)
    rep = run_experiment_grid(cfg, raw=raw)
    assert len(rep.cells) == 1
    cell = rep.cells[0]
    assert (cell["feature_set"], cell["algorithm"], cell["sampling"]) == ("STATISTICAL", "DECISION_TREE",
                                                                          "UNDERSAMPLE")
    assert cell["seed"] and cell["config_hash"] == cfg.digest()
    assert "STATISTICAL" in rep.render_text()
