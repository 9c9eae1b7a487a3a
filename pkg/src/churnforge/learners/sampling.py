"""Train/test split, class balancing and k-fold cross-validation."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from .._util import derive_seed
from ..features import FeatureMatrix, LabeledDataset
from .models import ModelKind, predict, train

CHURN = "CHURN"
ACTIVE = "ACTIVE"


class SamplingMode(str, Enum):
    NONE = "NONE"
    OVERSAMPLE = "OVERSAMPLE"
    UNDERSAMPLE = "UNDERSAMPLE"


DEFAULT_SAMPLING = {
    ModelKind.XGB_STYLE: SamplingMode.NONE,
    ModelKind.GBM: SamplingMode.NONE,
    ModelKind.RANDOM_FOREST: SamplingMode.UNDERSAMPLE,
    ModelKind.DECISION_TREE: SamplingMode.UNDERSAMPLE,
}


def _class_ids(ds: LabeledDataset) -> dict[str, np.ndarray]:
    lab = ds.labels
    return {c: lab.index[(lab == c).to_numpy()].to_numpy() for c in (ACTIVE, CHURN)}


def split_train_test(ds: LabeledDataset, train_fraction: float = 0.7,
                     seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split. Class quotas use largest-remainder rounding of
    ``train_fraction * class size`` so the train total is round(n * f)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    groups = _class_ids(ds)
    for c, ids in groups.items():
        if len(ids) < 2:
            raise ValueError(f"class {c} has {len(ids)} member(s); need at least 2 to split")
    n = len(ds)
    target = int(math.floor(n * train_fraction + 0.5))
    exact = {c: len(ids) * train_fraction for c, ids in groups.items()}
    quota = {c: int(math.floor(v)) for c, v in exact.items()}
    # hand out the remaining slots by largest fractional part, class name breaks ties
    for c in sorted(groups, key=lambda c: (-(exact[c] - quota[c]), c)):
        if sum(quota.values()) >= target:
            break
        quota[c] += 1
    rng = np.random.default_rng(derive_seed(seed, "split"))
    train_ids, test_ids = [], []
    for c in (ACTIVE, CHURN):
        ids = np.sort(groups[c])
        perm = rng.permutation(len(ids))
        q = min(max(quota[c], 1), len(ids) - 1)
        train_ids.extend(ids[perm[:q]])
        test_ids.extend(ids[perm[q:]])
    order = ds.matrix.ids
    train_set = set(train_ids)
    tr = [i for i in order if i in train_set]
    te = [i for i in order if i not in train_set]
    return ds.subset(tr), ds.subset(te)


def resample(train: LabeledDataset, mode: SamplingMode | str = SamplingMode.NONE,
             seed: int = 0) -> LabeledDataset:
    """Balance the classes.

    OVERSAMPLE appends minority duplicates drawn with replacement;
    UNDERSAMPLE keeps a uniform subset of the majority. Duplicated rows get
    ids suffixed ``#k`` so the result still has unique ids.
    """
    mode = SamplingMode(mode)
    if mode is SamplingMode.NONE:
        return train
    groups = _class_ids(train)
    if any(len(v) == 0 for v in groups.values()):
        raise ValueError("resampling needs both classes present")
    small, large = sorted(groups, key=lambda c: (len(groups[c]), c))
    if len(groups[small]) == len(groups[large]):
        return train
    rng = np.random.default_rng(derive_seed(seed, f"resample:{mode.value}"))
    data, labels = train.matrix.data, train.labels
    if mode is SamplingMode.UNDERSAMPLE:
        pool = np.sort(groups[large])
        keep = set(pool[rng.choice(len(pool), size=len(groups[small]), replace=False)])
        keep.update(groups[small])
        ids = [i for i in data.index if i in keep]
        return train.subset(ids)
    pool = np.sort(groups[small])
    extra = pool[rng.integers(0, len(pool), size=len(groups[large]) - len(pool))]
    seen: dict[str, int] = {}
    new_ids = []
    for i in extra:
        seen[i] = seen.get(i, 0) + 1
        new_ids.append(f"{i}#{seen[i]}")
    add = data.loc[extra].copy()
    add.index = pd.Index(new_ids, name=data.index.name)
    add_lab = pd.Series(labels.loc[extra].to_numpy(), index=add.index, dtype=object)
    m = FeatureMatrix(pd.concat([data, add]), dict(train.matrix.kinds))
    return LabeledDataset(m, pd.concat([labels, add_lab]), train.baseline)


def stratified_folds(ds: LabeledDataset, k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold number per row (aligned with ``ds.matrix.ids``).

    Each class is shuffled and the classes are dealt round-robin one after
    the other, so fold sizes differ by at most one overall and per class.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    groups = _class_ids(ds)
    minority = min(len(v) for v in groups.values())
    if k > minority:
        raise ValueError(f"k = {k} exceeds the minority class size {minority}")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    pos = {i: j for j, i in enumerate(ds.matrix.ids)}
    fold = np.empty(len(ds), dtype=np.int64)
    cursor = 0
    for c in (ACTIVE, CHURN):
        ids = np.sort(groups[c])
        ids = ids[rng.permutation(len(ids))]
        for i in ids:
            fold[pos[i]] = cursor % k
            cursor += 1
    return fold


@dataclass
class LearnerSpec:
    kind: ModelKind
    params: dict = field(default_factory=dict)
    sampling: SamplingMode | None = None

    def __post_init__(self):
        self.kind = ModelKind(self.kind)
        self.sampling = DEFAULT_SAMPLING[self.kind] if self.sampling is None else SamplingMode(self.sampling)


@dataclass
class CvResult:
    best_params: dict
    best_mean_auc: float
    grid: list[dict]  # one entry per grid point: params, fold_aucs, mean_auc

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best_mean_auc": self.best_mean_auc,
                "grid": self.grid}


def expand_grid(grid: dict | list | None) -> list[dict]:
    """A dict of lists becomes its cartesian product; a list passes through."""
    if grid is None:
        return [{}]
    if isinstance(grid, list):
        return [dict(g) for g in grid] or [{}]
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _size_key(params: dict, base: dict):
    merged = {**base, **params}
    return (merged.get("n_trees", 1), merged.get("max_depth", 0))


def cross_validate(ds: LabeledDataset, spec: LearnerSpec, k: int = 10, grid=None,
                   seed: int = 0, threads: int = 1) -> CvResult:
    """Pick the grid point with the highest mean validation AUC; ties go to
    the smaller model (fewer trees, then shallower)."""
    from ..evaluation import auc_score

    points = expand_grid(grid)
    folds = stratified_folds(ds, k, seed)
    ids = ds.matrix.ids
    y = ds.y

    def run(job):
        gi, fi = job
        params = {**spec.params, **points[gi]}
        tr = ds.subset(ids[folds != fi])
        va = ds.subset(ids[folds == fi])
        tr = resample(tr, spec.sampling, derive_seed(seed, "cv_resample", fi))
        model = train(spec.kind, tr, params, seed=derive_seed(seed, "cv_model", fi))
        return auc_score(y[folds == fi], predict(model, va.matrix).to_numpy())

    jobs = [(g, f) for g in range(len(points)) for f in range(k)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            aucs = list(pool.map(run, jobs))
    else:
        aucs = [run(j) for j in jobs]
    table = []
    for g, point in enumerate(points):
        fold_aucs = aucs[g * k:(g + 1) * k]
        table.append({"params": point, "fold_aucs": fold_aucs, "mean_auc": float(np.mean(fold_aucs))})
    best = min(range(len(points)),
               key=lambda g: (-table[g]["mean_auc"], _size_key(points[g], spec.params), g))
    return CvResult({**spec.params, **points[best]}, table[best]["mean_auc"], table)
