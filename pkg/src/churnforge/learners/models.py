"""The four tree learners, prediction and model persistence."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from .._util import atomic_write_text, derive_seed, hash_obj
from ..features import CATEGORICAL, FeatureMatrix, LabeledDataset
from .tree import MAX_BINS, BinMapper, GrowParams, Tree, grow_tree

log = logging.getLogger(__name__)

MODEL_FORMAT = "churnforge-model"
MODEL_VERSION = 1
_PROB_CLIP = 1e-12


class ModelKind(str, Enum):
    DECISION_TREE = "DECISION_TREE"
    RANDOM_FOREST = "RANDOM_FOREST"
    GBM = "GBM"
    XGB_STYLE = "XGB_STYLE"


BOOSTED = (ModelKind.GBM, ModelKind.XGB_STYLE)


class ModelSchemaError(ValueError):
    pass


# --- encoding -------------------------------------------------------------

def schema_hash(features: list[tuple[str, str]]) -> str:
    return hash_obj([[n, k] for n, k in features])[:16]


def encode(m: FeatureMatrix, features: list[tuple[str, str]],
           categories: dict[str, list[str]]) -> np.ndarray:
    """Dense float matrix; categorical cells become category codes, unseen -1."""
    if list(m.kinds.items()) != [tuple(f) for f in features]:
        raise ModelSchemaError(
            f"feature schema mismatch: model hash {schema_hash(features)}, "
            f"matrix hash {schema_hash(list(m.kinds.items()))}")
    x = np.empty((len(m.data), len(features)), dtype=float)
    for j, (name, kind) in enumerate(features):
        col = m.data[name]
        if kind == CATEGORICAL:
            lookup = {c: i for i, c in enumerate(categories[name])}
            x[:, j] = [lookup.get(str(v), -1) if v is not None else -1 for v in col.to_numpy()]
        else:
            x[:, j] = col.to_numpy(dtype=float)
    if np.isnan(x).any():
        raise ValueError("feature matrix has missing cells; run transform_select first")
    return x


def _fit_categories(m: FeatureMatrix) -> dict[str, list[str]]:
    return {c: m.categories(c) for c in m.categorical()}


# --- model ----------------------------------------------------------------

@dataclass
class TrainedModel:
    kind: ModelKind
    trees: list[Tree]
    base_score: float
    features: list[tuple[str, str]]
    categories: dict[str, list[str]] = field(default_factory=dict)
    learning_rate: float = 1.0
    hyperparameters: dict = field(default_factory=dict)
    rng_seed: int = 0
    train_loss: list[float] = field(default_factory=list)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.features)

    @property
    def feature_names(self) -> list[str]:
        return [n for n, _ in self.features]

    @property
    def feature_gain(self) -> dict[str, float]:
        # fsum is exact, so the total does not depend on node order
        parts: dict[str, list[float]] = {n: [] for n in self.feature_names}
        for tree in self.trees:
            for i in range(tree.n_nodes):
                if not tree.is_leaf(i):
                    parts[self.features[tree.feature[i]][0]].append(tree.gain[i])
        return {n: math.fsum(v) for n, v in parts.items()}

    def raw_score(self, x: np.ndarray) -> np.ndarray:
        if self.kind in BOOSTED:
            f = np.full(x.shape[0], self.base_score)
            for tree in self.trees:
                f = f + self.learning_rate * tree.predict_value(x)
            return f
        total = np.zeros(x.shape[0])
        for tree in self.trees:
            total = total + tree.predict_value(x)
        return total / max(len(self.trees), 1)

    def predict_array(self, x: np.ndarray) -> np.ndarray:
        s = self.raw_score(x)
        if self.kind in BOOSTED:
            return expit(s)
        return np.clip(s, 0.0, 1.0)

    # persistence ----------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind.value,
            "hyperparameters": self.hyperparameters,
            "rng_seed": self.rng_seed,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "schema_hash": self.schema_hash,
            "features": [{"name": n, "kind": k, **({"categories": self.categories[n]}
                                                     if k == CATEGORICAL else {})}
                         for n, k in self.features],
            "feature_gain": self.feature_gain,
            "train_loss": self.train_loss,
            "trees": [t.to_preorder() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a churnforge model document")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        features = [(f["name"], f["kind"]) for f in d["features"]]
        if schema_hash(features) != d["schema_hash"]:
            raise ModelSchemaError("stored schema hash does not match stored features")
        return cls(
            kind=ModelKind(d["kind"]),
            trees=[Tree.from_preorder(t) for t in d["trees"]],
            base_score=float(d["base_score"]),
            features=features,
            categories={f["name"]: list(f["categories"]) for f in d["features"] if "categories" in f},
            learning_rate=float(d["learning_rate"]),
            hyperparameters=dict(d["hyperparameters"]),
            rng_seed=int(d["rng_seed"]),
            train_loss=[float(v) for v in d.get("train_loss", [])],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        return cls.from_dict(json.loads(text))


def save_model(model: TrainedModel, path) -> None:
    atomic_write_text(path, model.to_json())


def load_model(path) -> TrainedModel:
    return TrainedModel.from_json(Path(path).read_text())


def predict(model: TrainedModel, m: FeatureMatrix) -> pd.Series:
    """Churn probability per customer id."""
    if len(m.data) == 0:
        if list(m.kinds.items()) != [tuple(f) for f in model.features]:
            raise ModelSchemaError("feature schema mismatch")
        return pd.Series([], index=m.ids, dtype=float)
    x = encode(m, model.features, model.categories)
    return pd.Series(model.predict_array(x), index=m.ids, dtype=float)


# --- training -------------------------------------------------------------

def _prepare(ds: LabeledDataset, max_bins: int):
    if len(ds) < 2:
        raise ValueError("training needs at least 2 rows")
    features = list(ds.matrix.kinds.items())
    categories = _fit_categories(ds.matrix)
    x = encode(ds.matrix, features, categories)
    mapper = BinMapper(max_bins).fit(x, np.array([k == CATEGORICAL for _, k in features]))
    bins = np.ascontiguousarray(mapper.transform(x))
    return x, ds.y.astype(float), features, categories, mapper, bins


def log_loss(y: np.ndarray, f: np.ndarray) -> float:
    """Mean logistic loss of raw scores ``f``."""
    # log(1 + e^f) - y f, computed stably
    return float(np.mean(np.logaddexp(0.0, f) - y * f))


def _tree_params(max_depth, max_nodes, min_samples_leaf, n_rows, max_features=None):
    return GrowParams(max_depth=max_depth, max_nodes=max_nodes, min_samples_leaf=min_samples_leaf,
                      reg_lambda=0.0, gain_scale=2.0 / n_rows, min_gain=1e-12,
                      max_features=max_features, zero_gain_splits=True)


def train_decision_tree(train: LabeledDataset, max_depth: int = 20, max_nodes: int | None = 398,
                        min_samples_leaf: int = 1, seed: int = 0,
                        max_bins: int = MAX_BINS) -> TrainedModel:
    """Gini tree grown best-first up to ``max_nodes`` nodes."""
    x, y, features, categories, mapper, bins = _prepare(train, max_bins)
    n = len(y)
    params = _tree_params(max_depth, max_nodes, min_samples_leaf, n)
    ones = np.ones(n)
    tree = grow_tree(bins, mapper, np.arange(n), y, ones, y, ones, params)
    hp = {"max_depth": max_depth, "max_nodes": max_nodes, "min_samples_leaf": min_samples_leaf,
          "max_bins": max_bins}
    return TrainedModel(ModelKind.DECISION_TREE, [tree], float(y.mean()), features, categories,
                        1.0, hp, seed)


def default_max_features(p: int) -> int:
    return max(1, int(math.sqrt(p)))


def train_random_forest(train: LabeledDataset, n_trees: int = 200, seed: int = 0,
                        max_depth: int = 20, max_nodes: int | None = None,
                        min_samples_leaf: int = 1, max_features: int | str | None = "sqrt",
                        bootstrap: bool = True, threads: int = 1,
                        max_bins: int = MAX_BINS) -> TrainedModel:
    """Bagged Gini trees with a random feature subset at every split.

    ``bootstrap=False`` and ``max_features=None`` reduce each tree to the
    plain decision tree; both exist for tests.
    """
    x, y, features, categories, mapper, bins = _prepare(train, max_bins)
    n, p = bins.shape
    mf = default_max_features(p) if max_features == "sqrt" else max_features
    params = _tree_params(max_depth, max_nodes, min_samples_leaf, n, mf)
    ones = np.ones(n)

    def one(i: int) -> Tree:
        rng = np.random.default_rng(derive_seed(seed, "random_forest", i))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return grow_tree(bins, mapper, idx, y, ones, y, ones, params, rng=rng)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, range(n_trees)))
    else:
        trees = [one(i) for i in range(n_trees)]
    hp = {"n_trees": n_trees, "max_depth": max_depth, "max_nodes": max_nodes,
          "min_samples_leaf": min_samples_leaf, "max_features": mf, "bootstrap": bootstrap,
          "max_bins": max_bins}
    return TrainedModel(ModelKind.RANDOM_FOREST, trees, float(y.mean()), features, categories,
                        1.0, hp, seed)


def _prior_logit(y: np.ndarray) -> float:
    prior = min(max(float(y.mean()), _PROB_CLIP), 1.0 - _PROB_CLIP)
    return math.log(prior / (1.0 - prior))


def _boost(kind: ModelKind, train: LabeledDataset, n_trees: int, learning_rate: float,
           max_depth: int, params_for, leaf_stats, leaf_lambda: float, hp: dict, seed: int,
           max_bins: int) -> TrainedModel:
    x, y, features, categories, mapper, bins = _prepare(train, max_bins)
    n = len(y)
    base = _prior_logit(y)
    f = np.full(n, base)
    loss = log_loss(y, f)
    losses = [loss]
    trees: list[Tree] = []
    idx = np.arange(n)
    single_class = y.min() == y.max()
    for _ in range(0 if single_class else n_trees):
        prob = expit(f)
        t, w, lt, lw = leaf_stats(y, prob)
        tree = grow_tree(bins, mapper, idx, t, w, lt, lw, params_for(n), leaf_lambda)
        # a Newton step can overshoot on tiny leaves; shrink until the
        # training loss does not go up
        for _ in range(60):
            f_new = f + learning_rate * tree.predict_value(x)
            new_loss = log_loss(y, f_new)
            if new_loss <= loss:
                break
            tree.scale_leaves(0.5)
        else:
            tree.scale_leaves(0.0)
            f_new = f + learning_rate * tree.predict_value(x)
            new_loss = log_loss(y, f_new)
        f, loss = f_new, new_loss
        trees.append(tree)
        losses.append(loss)
    return TrainedModel(kind, trees, base, features, categories, learning_rate, hp, seed, losses)


def train_gbm(train: LabeledDataset, n_trees: int = 200, learning_rate: float = 0.1,
              max_depth: int = 6, min_samples_leaf: int = 1, seed: int = 0,
              max_bins: int = MAX_BINS) -> TrainedModel:
    """Gradient boosting on logistic loss: trees fit the residuals by least
    squares, then each leaf takes a Newton step."""

    def params_for(n):
        return GrowParams(max_depth=max_depth, min_samples_leaf=min_samples_leaf,
                          reg_lambda=0.0, gain_scale=1.0, min_gain=1e-12)

    def stats(y, prob):
        r = y - prob
        return r, np.ones_like(r), r, prob * (1.0 - prob)

    hp = {"n_trees": n_trees, "learning_rate": learning_rate, "max_depth": max_depth,
          "min_samples_leaf": min_samples_leaf, "max_bins": max_bins}
    return _boost(ModelKind.GBM, train, n_trees, learning_rate, max_depth, params_for, stats, 0.0,
                  hp, seed, max_bins)


def train_xgb_style(train: LabeledDataset, n_trees: int = 180, learning_rate: float = 0.1,
                    max_depth: int = 6, reg_lambda: float = 1.0, gamma: float = 0.0,
                    min_child_weight: float = 1.0, seed: int = 0,
                    max_bins: int = MAX_BINS) -> TrainedModel:
    """Second-order boosting with the regularised split gain."""

    def params_for(n):
        return GrowParams(max_depth=max_depth, min_child_weight=min_child_weight,
                          reg_lambda=reg_lambda, gamma=gamma, gain_scale=0.5, min_gain=0.0)

    def stats(y, prob):
        g = y - prob
        h = prob * (1.0 - prob)
        return g, h, g, h

    hp = {"n_trees": n_trees, "learning_rate": learning_rate, "max_depth": max_depth,
          "reg_lambda": reg_lambda, "gamma": gamma, "min_child_weight": min_child_weight,
          "max_bins": max_bins}
    return _boost(ModelKind.XGB_STYLE, train, n_trees, learning_rate, max_depth, params_for, stats,
                  reg_lambda, hp, seed, max_bins)


TRAINERS = {
    ModelKind.DECISION_TREE: train_decision_tree,
    ModelKind.RANDOM_FOREST: train_random_forest,
    ModelKind.GBM: train_gbm,
    ModelKind.XGB_STYLE: train_xgb_style,
}


def train(kind: ModelKind | str, ds: LabeledDataset, params: dict | None = None,
          seed: int = 0, threads: int = 1) -> TrainedModel:
    kind = ModelKind(kind)
    params = dict(params or {})
    if kind is ModelKind.RANDOM_FOREST:
        params.setdefault("threads", threads)
    return TRAINERS[kind](ds, seed=seed, **params)
