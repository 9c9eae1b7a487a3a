import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import selection_fixture as fx
from churnforge.features import CATEGORICAL, NUMERIC, FeatureMatrix
from churnforge.selection import OTHER, RULES, SelectionPolicy, transform_select


def _event(report, rule, p=0):
    (e,) = [e for e in report.events if e.rule == rule and e.pass_index == p]
    return e


def test_fixture_drops_and_imputations():
    out, rep = transform_select(fx.build())
    exp = fx.expected()
    for rule in ("identifier_column", "constant_column", "duplicate_column", "sparse_column",
                 "correlated_column"):
        assert rep.dropped_columns(rule) == exp[rule], rule
    assert rep.dropped_rows() == exp["sparse_row"]
    assert _event(rep, "categorical_missing_to_other").detail["counts"] == exp["categorical_missing_to_other"]
    means = _event(rep, "numeric_missing_to_mean").detail["means"]
    assert means.keys() == exp["numeric_missing_to_mean"].keys()
    assert means["num_missing"] == pytest.approx(exp["numeric_missing_to_mean"]["num_missing"], abs=1e-12)
    assert _event(rep, "category_cap").detail["folded"] == exp["category_cap"]
    assert _event(rep, "duplicate_column").detail["duplicate_of"] == {"dup_x": "x"}
    assert _event(rep, "correlated_column").detail["correlated_with"] == {"corr_x": "x"}
    assert out.names == exp["columns"]
    assert len(out.ids) == fx.N - 1
    assert (out.data["cat"] == OTHER).sum() == 5
    assert out.data["wide"].nunique() == 32


def test_fixture_rule_order_and_passes():
    _, rep = transform_select(fx.build())
    assert rep.rule_sequence(0) == list(RULES)
    assert rep.passes == 2
    assert all(not e.names for e in rep.events if e.pass_index == 1)


def test_idempotent():
    once, _ = transform_select(fx.build())
    twice, rep = transform_select(once)
    assert twice.equals(once)
    assert rep.passes == 1


def test_fixed_point_catches_late_constant():
    # dropping the sparse row leaves "b" constant; the second pass removes it
    data = pd.DataFrame({"a": [1.0, 2.0, 3.0, np.nan], "b": [7.0, 7.0, 7.0, 8.0],
                         "c": [np.nan, 1.0, 0.0, np.nan], "d": [0.0, 5.0, 1.0, np.nan]},
                        index=pd.Index(list("pqrs"), name="id"))
    policy = SelectionPolicy(max_row_missing=0.5, correlation_threshold=None)
    out, rep = transform_select(FeatureMatrix(data), policy)
    assert rep.dropped_rows() == ["s"]
    assert "b" in rep.dropped_columns("constant_column")
    assert _event(rep, "constant_column", 1).names == ["b"]


def test_categorical_constant_with_gaps_survives_as_two_levels():
    data = pd.DataFrame({"k": ["x", None, "x", "x"], "v": [1.0, 2.0, 3.0, 5.0]},
                        index=pd.Index(list("abcd"), name="id"))
    out, _ = transform_select(FeatureMatrix(data, {"k": CATEGORICAL, "v": NUMERIC}))
    assert sorted(out.data["k"].unique()) == [OTHER, "x"]


def test_correlation_toggle():
    m = fx.build()
    out, _ = transform_select(m, SelectionPolicy(correlation_threshold=None))
    assert "corr_x" in out.names


def test_policy_dict_round_trip():
    p = SelectionPolicy(max_categories=7, identifier_columns=("msisdn",))
    assert SelectionPolicy.from_dict(p.to_dict()) == p


@st.composite
def frames(draw):
    n = draw(st.integers(2, 25))
    n_num = draw(st.integers(0, 4))
    n_cat = draw(st.integers(0, 3))
    cols, kinds = {}, {}
    cell = st.one_of(st.none(), st.integers(-3, 3).map(float), st.floats(-1e3, 1e3, allow_nan=False))
    for j in range(n_num):
        vals = draw(st.lists(cell, min_size=n, max_size=n))
        cols[f"n{j}"] = np.array([np.nan if v is None else v for v in vals], dtype=float)
        kinds[f"n{j}"] = NUMERIC
    for j in range(n_cat):
        levels = draw(st.integers(1, 45))
        vals = draw(st.lists(st.one_of(st.none(), st.integers(0, levels - 1).map(lambda i: f"v{i}")),
                             min_size=n, max_size=n))
        cols[f"k{j}"] = np.array(vals, dtype=object)
        kinds[f"k{j}"] = CATEGORICAL
    data = pd.DataFrame(cols, index=pd.Index([f"i{i}" for i in range(n)], name="id"))
    return FeatureMatrix(data, kinds)


@settings(max_examples=150, deadline=None)
@given(frames())
def test_selection_invariants(m):
    out, rep = transform_select(m)
    assert rep.rule_sequence(0) == list(RULES)
    assert out.n_missing() == 0
    for c in out.names:
        col = out.data[c]
        assert col.nunique() > 1 or len(col) <= 1
        if out.kinds[c] == CATEGORICAL:
            assert col.nunique() <= 32
    again, _ = transform_select(out)
    assert again.equals(out)
    assert set(out.ids) <= set(m.ids)


def test_small_worked_example():
    data = pd.DataFrame({"a": [1.0, np.nan, 3.0], "b": [np.nan] * 3, "c": [2.0, 9.0, 5.0],
                         "d": [4.0, 18.0, 10.0]}, index=pd.Index(list("xyz"), name="id"))
    out, rep = transform_select(FeatureMatrix(data))
    assert out.data["a"].tolist() == [1.0, 2.0, 3.0]
    assert rep.dropped_columns("sparse_column") == ["b"]
    assert rep.dropped_columns("correlated_column") == ["d"]
    assert "c" in out.names


@pytest.mark.slow
def test_pearson_step_barely_matters(default_data):
    from churnforge._util import utc_timestamp
    from churnforge.evaluation import auc_score
    from churnforge.features import assemble, statistical_features
    from churnforge.learners import predict, split_train_test, train_xgb_style
    spec, sd = default_data
    base = utc_timestamp(spec.baseline)
    stat = statistical_features(sd.cdr, sd.profiles, base, 6)
    aucs = []
    for thr in (0.95, None):
        sel, _ = transform_select(stat, SelectionPolicy(correlation_threshold=thr))
        ds = assemble(sel, sd.labels, base, 4, sd.profiles)
        tr, te = split_train_test(ds, 0.7, seed=1)
        model = train_xgb_style(tr, seed=1)
        aucs.append(auc_score(te.y, predict(model, te.matrix).to_numpy()))
    assert abs(aucs[0] - aucs[1]) < 0.01, aucs
