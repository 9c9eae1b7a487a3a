"""Histogram tree grower shared by every learner.

All four learners pick splits by maximising the same bracket

    B = G_L^2 / (H_L + lam) + G_R^2 / (H_R + lam) - G^2 / (H + lam)

over per-node sums of a target statistic ``t`` and a weight ``w``:

* Gini decrease for a 0/1 label is ``2 * B`` with t = y, w = 1, lam = 0;
* squared-error reduction on residuals is ``B`` with t = y - p, w = 1;
* the second-order boosting gain is ``B / 2 - gamma`` with t = y - p, w = p(1-p).

Leaf values use a separate pair of statistics so a GBM tree can split on
residual variance and still take a Newton step per leaf.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numba
import numpy as np

MAX_BINS = 256


# parent histograms kept for subtraction; bounds memory on wide, bushy trees
_MAX_CACHED_HISTOGRAMS = 48


@numba.njit(cache=True, nogil=True)
def _histogram(bins_t, idx, t, w, n_bins, feats):
    """Bin sums for the features in ``feats``; ``bins_t`` is feature-major (p, n)."""
    p = bins_t.shape[0]
    m = idx.shape[0]
    G = np.zeros((p, n_bins))
    H = np.zeros((p, n_bins))
    C = np.zeros((p, n_bins), dtype=np.int64)
    tt = np.empty(m)
    ww = np.empty(m)
    for k in range(m):
        tt[k] = t[idx[k]]
        ww[k] = w[idx[k]]
    for j in range(feats.shape[0]):
        f = feats[j]
        row = bins_t[f]
        for k in range(m):
            b = row[idx[k]]
            G[f, b] += tt[k]
            H[f, b] += ww[k]
            C[f, b] += 1
    return G, H, C


class BinMapper:
    """Maps raw feature values to small integer bins.

    A numeric feature with at most ``max_bins`` distinct values gets one bin
    per value, so split candidates are exactly the midpoints between
    consecutive distinct values. Wider features are cut at sample quantiles.
    Categorical features are already integer codes and map to themselves.
    """

    def __init__(self, max_bins: int = MAX_BINS):
        self.max_bins = max_bins
        self.upper: list[np.ndarray] = []
        self.thresholds: list[np.ndarray] = []
        self.n_bins: list[int] = []
        self.categorical: np.ndarray | None = None

    def fit(self, x: np.ndarray, categorical: np.ndarray) -> "BinMapper":
        self.categorical = np.asarray(categorical, dtype=bool)
        self.upper, self.thresholds, self.n_bins = [], [], []
        for f in range(x.shape[1]):
            col = x[:, f]
            if self.categorical[f]:
                k = int(col.max()) + 1 if col.size else 1
                if k > self.max_bins:
                    raise ValueError(f"categorical feature {f} has {k} levels (> {self.max_bins})")
                self.upper.append(np.empty(0))
                self.thresholds.append(np.empty(0))
                self.n_bins.append(k)
                continue
            u = np.unique(col)
            if len(u) <= self.max_bins:
                ub = u[:-1]
            else:
                s = np.sort(col)
                cuts = s[(np.arange(1, self.max_bins) * len(s)) // self.max_bins]
                ub = np.unique(cuts)
                ub = ub[ub < u[-1]]
            nxt = u[np.searchsorted(u, ub, side="right")]
            self.upper.append(ub)
            self.thresholds.append((ub + nxt) / 2.0)
            self.n_bins.append(len(ub) + 1)
        return self

    def transform(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape, dtype=np.uint8)
        for f in range(x.shape[1]):
            if self.categorical[f]:
                out[:, f] = x[:, f].astype(np.int64)
            else:
                out[:, f] = np.searchsorted(self.upper[f], x[:, f], side="left")
        return out


@dataclass
class GrowParams:
    max_depth: int = 6
    max_nodes: int | None = None
    min_samples_leaf: int = 1
    min_child_weight: float = 0.0
    reg_lambda: float = 0.0
    gamma: float = 0.0
    gain_scale: float = 1.0
    min_gain: float = 0.0
    max_features: int | None = None
    # let an impure node take a zero-gain split (XOR-like data needs one
    # uninformative cut before the informative ones appear)
    zero_gain_splits: bool = False


@dataclass
class Tree:
    """Flat binary tree. Node 0 is the root; a leaf has ``left == -1``."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    categories: list[list[int] | None] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)
    cover: list[int] = field(default_factory=list)
    depth: list[int] = field(default_factory=list)

    def add(self, value: float, cover: int, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.categories.append(None)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.gain.append(0.0)
        self.cover.append(int(cover))
        self.depth.append(int(depth))
        return len(self.value) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    @property
    def max_depth(self) -> int:
        return max(d for d, l in zip(self.depth, self.left) if l == -1)

    def is_leaf(self, i: int) -> bool:
        return self.left[i] == -1

    def scale_leaves(self, factor: float) -> None:
        self.value = [v * factor for v in self.value]

    def split_features(self) -> list[int]:
        return [f for f, l in zip(self.feature, self.left) if l != -1]

    # preorder serialisation
    def to_preorder(self) -> list[dict]:
        out: list[dict] = []
        stack = [0]
        while stack:
            i = stack.pop()
            if self.is_leaf(i):
                out.append({"leaf": self.value[i], "cover": self.cover[i]})
                continue
            node = {"feature": self.feature[i], "gain": self.gain[i], "cover": self.cover[i],
                    "value": self.value[i]}
            if self.categories[i] is None:
                node["threshold"] = self.threshold[i]
            else:
                node["categories"] = list(self.categories[i])
            out.append(node)
            stack.append(self.right[i])
            stack.append(self.left[i])
        return out

    @classmethod
    def from_preorder(cls, nodes: list[dict]) -> "Tree":
        tree = cls()
        pos = 0

        def build(depth: int) -> int:
            nonlocal pos
            rec = nodes[pos]
            pos += 1
            if "leaf" in rec:
                return tree.add(rec["leaf"], rec.get("cover", 0), depth)
            i = tree.add(rec.get("value", 0.0), rec.get("cover", 0), depth)
            tree.feature[i] = int(rec["feature"])
            tree.gain[i] = float(rec["gain"])
            if "categories" in rec:
                tree.categories[i] = [int(c) for c in rec["categories"]]
            else:
                tree.threshold[i] = float(rec["threshold"])
            tree.left[i] = build(depth + 1)
            tree.right[i] = build(depth + 1)
            return i

        build(0)
        if pos != len(nodes):
            raise ValueError("trailing nodes in preorder tree")
        return tree

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of the raw (encoded) matrix."""
        n = x.shape[0]
        feature = np.asarray(self.feature, dtype=np.int64)
        threshold = np.asarray(self.threshold, dtype=float)
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        cat_nodes = [i for i, c in enumerate(self.categories) if c is not None]
        width = 1 + max([max(self.categories[i], default=0) for i in cat_nodes], default=0)
        cat_left = np.zeros((len(self.value), width + 1), dtype=bool)
        for i in cat_nodes:
            cat_left[i, self.categories[i]] = True
        is_cat = np.zeros(len(self.value), dtype=bool)
        is_cat[cat_nodes] = True
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        active = left[node] != -1
        while active.any():
            r = rows[active]
            nd = node[r]
            xv = x[r, np.maximum(feature[nd], 0)]
            go_left = xv <= threshold[nd]
            c = is_cat[nd]
            if c.any():
                code = xv[c].astype(np.int64)
                code = np.where((code >= 0) & (code < width), code, width)
                go_left[c] = cat_left[nd[c], code]
            node[r] = np.where(go_left, left[nd], right[nd])
            active = left[node] != -1
        return node

    def predict_value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.value, dtype=float)[self.apply(x)]


@numba.njit(cache=True, nogil=True)
def _scan_numeric(G, H, C, g_tot, h_tot, n_rows, lam, parent, min_leaf, min_weight, n_bins, mask):
    """Best left/right cut per numeric feature; first maximum wins."""
    p = G.shape[0]
    best_gain = np.full(p, -np.inf)
    best_bin = np.zeros(p, dtype=np.int64)
    for f in range(p):
        if not mask[f]:
            continue
        gl = 0.0
        hl = 0.0
        cl = 0
        for b in range(n_bins[f] - 1):
            gl += G[f, b]
            hl += H[f, b]
            cl += C[f, b]
            cr = n_rows - cl
            if cl < min_leaf or cr < min_leaf:
                continue
            hr = h_tot - hl
            if min_weight > 0 and (hl < min_weight or hr < min_weight):
                continue
            gr = g_tot - gl
            dl = hl + lam
            dr = hr + lam
            if dl <= 0 or dr <= 0:
                continue
            v = gl * gl / dl + gr * gr / dr - parent
            if v > best_gain[f]:
                best_gain[f] = v
                best_bin[f] = b
    return best_gain, best_bin


@dataclass
class _Candidate:
    gain: float
    feature: int
    bin: int
    categories: list[int] | None


def _best_split(G, H, C, g_tot, h_tot, n_rows, categorical, n_bins, params: GrowParams,
                feature_mask, impure: bool = False) -> _Candidate | None:
    lam = params.reg_lambda
    parent = g_tot * g_tot / (h_tot + lam)
    p = G.shape[0]
    best_gain = np.full(p, -np.inf)
    best_bin = np.zeros(p, dtype=np.int64)
    best_cats: dict[int, list[int]] = {}

    num = ~categorical & feature_mask
    if num.any():
        best_gain, best_bin = _scan_numeric(G, H, C, g_tot, h_tot, n_rows, lam, parent,
                                            params.min_samples_leaf, params.min_child_weight,
                                            n_bins, num)

    for f in np.flatnonzero(categorical & feature_mask):
        present = np.flatnonzero(C[f] > 0)
        if len(present) < 2:
            continue
        ratio = G[f, present] / (H[f, present] + lam)
        order = present[np.lexsort((present, ratio))]
        gl = np.cumsum(G[f, order])[:-1]
        hl = np.cumsum(H[f, order])[:-1]
        cl = np.cumsum(C[f, order])[:-1]
        gr, hr, cr = g_tot - gl, h_tot - hl, n_rows - cl
        with np.errstate(divide="ignore", invalid="ignore"):
            br = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
        ok = (cl >= params.min_samples_leaf) & (cr >= params.min_samples_leaf)
        if params.min_child_weight > 0:
            ok &= (hl >= params.min_child_weight) & (hr >= params.min_child_weight)
        br = np.where(ok & np.isfinite(br), br, -np.inf)
        k = int(np.argmax(br))
        if np.isfinite(br[k]):
            best_gain[f] = br[k]
            best_cats[f] = sorted(int(c) for c in order[: k + 1])

    f = int(np.argmax(best_gain))
    if not np.isfinite(best_gain[f]):
        return None
    gain = params.gain_scale * float(best_gain[f]) - params.gamma
    if gain > params.min_gain:
        return _Candidate(gain, f, int(best_bin[f]), best_cats.get(f))
    if params.zero_gain_splits and impure and gain > -1e-12:
        return _Candidate(0.0, f, int(best_bin[f]), best_cats.get(f))
    return None


def grow_tree(bins: np.ndarray, mapper: BinMapper, idx: np.ndarray,
              t: np.ndarray, w: np.ndarray, leaf_t: np.ndarray, leaf_w: np.ndarray,
              params: GrowParams, leaf_lambda: float = 0.0,
              rng: np.random.Generator | None = None) -> Tree:
    """Grow one tree best-first (largest gain expands next).

    ``idx`` lists training rows and may repeat rows (bootstrap). Without a
    node cap the expansion order does not change the result.
    """
    p = bins.shape[1]
    categorical = mapper.categorical
    n_bins = np.asarray(mapper.n_bins, dtype=np.int64)
    width = int(n_bins.max()) if p else 1
    tree = Tree()
    idx = np.ascontiguousarray(np.sort(idx).astype(np.int64))

    def leaf_value(rows):
        den = float(leaf_w[rows].sum()) + leaf_lambda
        num = float(leaf_t[rows].sum())
        if den <= 0:
            return 0.0
        return num / den

    bins_t = np.ascontiguousarray(bins.T)
    all_feats = np.arange(p, dtype=np.int64)
    # a cached parent histogram only covers the features sampled for the parent
    subsample = params.max_features is not None and params.max_features < p

    def evaluate(rows, depth, hist=None):
        if depth >= params.max_depth or len(rows) < 2 * params.min_samples_leaf or p == 0:
            return None, None
        mask = np.ones(p, dtype=bool)
        feats = all_feats
        if subsample:
            feats = np.sort(rng.choice(p, size=params.max_features, replace=False))
            mask = np.zeros(p, dtype=bool)
            mask[feats] = True
        if hist is None:
            hist = _histogram(bins_t, rows, t, w, width, feats)
        G, H, C = hist
        impure = params.zero_gain_splits and bool(np.ptp(t[rows]) > 0)
        cand = _best_split(G, H, C, float(t[rows].sum()), float(w[rows].sum()), len(rows),
                           categorical, n_bins, params, mask, impure)
        return cand, hist

    root = tree.add(leaf_value(idx), len(idx), 0)
    heap: list = []
    members = {root: idx}
    hists: dict[int, tuple] = {}
    cand, hist = evaluate(idx, 0)
    if cand is not None:
        heapq.heappush(heap, (-cand.gain, root, cand))
        hists[root] = hist
    while heap:
        if params.max_nodes is not None and tree.n_nodes + 2 > params.max_nodes:
            break
        _, node, cand = heapq.heappop(heap)
        rows = members.pop(node)
        parent_hist = hists.pop(node, None)
        col = bins[rows, cand.feature]
        if cand.categories is None:
            go_left = col <= cand.bin
            tree.threshold[node] = float(mapper.thresholds[cand.feature][cand.bin])
        else:
            lut = np.zeros(256, dtype=bool)
            lut[cand.categories] = True
            go_left = lut[col]
            tree.categories[node] = cand.categories
        tree.feature[node] = cand.feature
        tree.gain[node] = cand.gain
        depth = tree.depth[node] + 1
        parts = [rows[go_left], rows[~go_left]]
        child_hist = [None, None]
        if parent_hist is not None and depth < params.max_depth:
            small = 0 if len(parts[0]) <= len(parts[1]) else 1
            hs = _histogram(bins_t, parts[small], t, w, width, all_feats)
            child_hist[small] = hs
            child_hist[1 - small] = tuple(a - b for a, b in zip(parent_hist, hs))
        for side in (0, 1):
            child_rows = parts[side]
            child = tree.add(leaf_value(child_rows), len(child_rows), depth)
            if side == 0:
                tree.left[node] = child
            else:
                tree.right[node] = child
            c, h = evaluate(child_rows, depth, child_hist[side])
            if c is not None:
                members[child] = child_rows
                heapq.heappush(heap, (-c.gain, child, c))
                if not subsample and len(hists) < _MAX_CACHED_HISTOGRAMS:
                    hists[child] = h
    return tree
