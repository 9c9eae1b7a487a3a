"""Weighted directed customer graph and the per-customer SNA measures.

Edges are collapsed per ordered pair from CALL/SMS/MMS events inside a time
window. Rank measures use the directed weights; neighbourhood measures
(connectivity, clustering, betweenness, similarities) use the undirected
skeleton where ``N(m)`` is the union of in- and out-neighbours.
"""

from __future__ import annotations

import csv
import io
import enum
import logging
from dataclasses import dataclass, fields
from typing import Iterable, Mapping

import numba
import numpy as np
import pandas as pd
import scipy.sparse as sp

from ._util import atomic_write_text
from .cdr_ingest import CdrRecord, records_to_frame

log = logging.getLogger(__name__)

GRAPH_EVENT_KINDS = ("CALL", "SMS", "MMS")


class WeightScheme(str, enum.Enum):
    DURATION = "duration"
    EVENT_COUNT = "event_count"
    MEAN_OF_BOTH = "mean"


@dataclass(frozen=True)
class SocialGraph:
    """Collapsed directed graph. Edge arrays are sorted by (src, dst)."""

    nodes: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    duration: np.ndarray
    events: np.ndarray
    scheme: WeightScheme = WeightScheme.MEAN_OF_BOTH

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def index(self) -> dict[str, int]:
        return {node: i for i, node in enumerate(self.nodes)}

    @property
    def weights(self) -> np.ndarray:
        """Per-edge weight under the active scheme (tallies scaled by their max)."""
        dur = _scaled(self.duration)
        cnt = _scaled(self.events)
        if self.scheme is WeightScheme.DURATION:
            return dur
        if self.scheme is WeightScheme.EVENT_COUNT:
            return cnt
        return (dur + cnt) / 2.0

    def with_scheme(self, scheme: WeightScheme | str) -> "SocialGraph":
        return SocialGraph(self.nodes, self.src, self.dst, self.duration, self.events,
                           WeightScheme(scheme))

    def reversed(self) -> "SocialGraph":
        order = np.lexsort((self.src, self.dst))
        return SocialGraph(self.nodes, self.dst[order], self.src[order],
                           self.duration[order], self.events[order], self.scheme)

    def scaled(self, factor: float) -> "SocialGraph":
        return SocialGraph(self.nodes, self.src, self.dst, self.duration * factor,
                           self.events * factor, self.scheme)

    def operators(self) -> np.ndarray:
        return np.array([n.partition(":")[0] for n in self.nodes], dtype=object)

    def skeleton(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency of the undirected skeleton."""
        n = self.n_nodes
        a = sp.coo_matrix((np.ones(self.n_edges), (self.src, self.dst)), shape=(n, n)).tocsr()
        a = a + a.T
        a.data[:] = 1.0
        a.sort_indices()
        return a.tocsr()


def _scaled(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    top = x.max() if len(x) else 0.0
    return x / top if top > 0 else np.zeros_like(x)


def from_edges(edges: Iterable[tuple], nodes: Iterable[str] | None = None,
               scheme: WeightScheme | str = WeightScheme.MEAN_OF_BOTH) -> SocialGraph:
    """Graph from ``(src, dst, duration, events)`` tuples; repeated pairs add up."""
    rows = [(str(s), str(t), float(du), float(ev)) for s, t, du, ev in edges if s != t]
    names = set(nodes or ())
    for s, t, _, _ in rows:
        names.update((s, t))
    order = tuple(sorted(names))
    idx = {n: i for i, n in enumerate(order)}
    tallies: dict[tuple[int, int], list[float]] = {}
    for s, t, du, ev in rows:
        acc = tallies.setdefault((idx[s], idx[t]), [0.0, 0.0])
        acc[0] += du
        acc[1] += ev
    keys = sorted(tallies)
    return SocialGraph(
        order,
        np.array([k[0] for k in keys], dtype=np.int64),
        np.array([k[1] for k in keys], dtype=np.int64),
        np.array([tallies[k][0] for k in keys], dtype=float),
        np.array([tallies[k][1] for k in keys], dtype=float),
        WeightScheme(scheme),
    )


def _as_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return records_to_frame(records)


def build_graph(records: pd.DataFrame | Iterable[CdrRecord], window: tuple,
                scheme: WeightScheme | str = WeightScheme.MEAN_OF_BOTH) -> SocialGraph:
    """Collapse the CALL/SMS/MMS events inside ``[start, end)`` into a graph."""
    start, end = (pd.Timestamp(w) for w in window)
    start = start.tz_localize("UTC") if start.tzinfo is None else start
    end = end.tz_localize("UTC") if end.tzinfo is None else end
    if not start < end:
        raise ValueError("graph window must be non-empty")
    df = _as_frame(records)
    mask = df["event_kind"].isin(GRAPH_EVENT_KINDS).to_numpy()
    ts = df["timestamp"]
    mask &= ((ts >= start) & (ts < end)).to_numpy()
    ev = df.loc[mask, ["caller", "callee", "duration_s"]]
    names = np.unique(np.concatenate([ev["caller"].to_numpy(dtype=object),
                                      ev["callee"].to_numpy(dtype=object)]).astype(str))
    ev = ev[ev["caller"].to_numpy() != ev["callee"].to_numpy()]
    if not len(ev):
        empty = np.array([], dtype=np.int64)
        return SocialGraph(tuple(names), empty, empty, np.array([]), np.array([]), WeightScheme(scheme))
    src = np.searchsorted(names, ev["caller"].to_numpy().astype(str))
    dst = np.searchsorted(names, ev["callee"].to_numpy().astype(str))
    n = len(names)
    key = src.astype(np.int64) * n + dst
    uniq, inv = np.unique(key, return_inverse=True)
    duration = np.bincount(inv, weights=ev["duration_s"].to_numpy(dtype=float), minlength=len(uniq))
    events = np.bincount(inv, minlength=len(uniq)).astype(float)
    return SocialGraph(tuple(names), uniq // n, uniq % n, duration, events, WeightScheme(scheme))


# --- rank measures --------------------------------------------------------

@dataclass
class RankVector:
    kind: str
    damping: float
    values: np.ndarray
    nodes: tuple[str, ...]
    iterations_used: int
    residual: float
    converged: bool

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.nodes, self.values.tolist()))


def pagerank(g: SocialGraph, d: float = 0.85, tol: float = 1e-8, max_iter: int = 100,
             kind: str = "PAGERANK") -> RankVector:
    """Weighted PageRank with the additive ``(1 - d)`` term.

    Iterates ``PR(m) = (1-d) + d * sum_n W(n->m) / out(n) * PR(n)`` from all
    ones until the L1 change drops below ``tol``. Nodes whose outgoing weight
    is zero pass no rank on. Hitting ``max_iter`` is logged and reported via
    ``converged=False``.
    """
    if not 0.0 < d < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = g.n_nodes
    if n == 0:
        return RankVector(kind, d, np.array([]), g.nodes, 0, 0.0, True)
    w = g.weights
    out_w = np.bincount(g.src, weights=w, minlength=n)
    denom = out_w[g.src]
    coef = np.divide(w, denom, out=np.zeros_like(w), where=denom > 0)
    pr = np.ones(n)
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = (1.0 - d) + d * np.bincount(g.dst, weights=coef * pr[g.src], minlength=n)
        residual = float(np.abs(new - pr).sum())
        pr = new
        if residual < tol:
            break
    converged = residual < tol
    if not converged:
        log.warning("%s did not converge in %d iterations (L1 residual %.3g)", kind, max_iter, residual)
    return RankVector(kind, d, pr, g.nodes, it, residual, converged)


def senderrank(g: SocialGraph, d: float = 0.85, tol: float = 1e-8, max_iter: int = 100) -> RankVector:
    """SenderRank as PageRank over the edge-reversed graph."""
    return pagerank(g.reversed(), d, tol, max_iter, kind="SENDERRANK")


# --- neighbourhood measures -----------------------------------------------

def degrees(g: SocialGraph) -> dict[str, tuple[int, int]]:
    """Distinct in- and out-neighbour counts per node."""
    n = g.n_nodes
    ind = np.bincount(g.dst, minlength=n)
    outd = np.bincount(g.src, minlength=n)
    return {node: (int(ind[i]), int(outd[i])) for i, node in enumerate(g.nodes)}


def _undirected_degree(a: sp.csr_matrix) -> np.ndarray:
    return np.diff(a.indptr).astype(float)


def neighbor_connectivity(g: SocialGraph) -> dict[str, float]:
    return dict(zip(g.nodes, _neighbor_connectivity(g.skeleton()).tolist()))


def _neighbor_connectivity(a: sp.csr_matrix) -> np.ndarray:
    deg = _undirected_degree(a)
    total = a @ deg
    return np.divide(total, deg, out=np.zeros_like(deg), where=deg > 0)


def local_clustering(g: SocialGraph) -> dict[str, float]:
    return dict(zip(g.nodes, _local_clustering(g.skeleton()).tolist()))


def _local_clustering(a: sp.csr_matrix) -> np.ndarray:
    deg = _undirected_degree(a)
    shared = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel()
    pairs = deg * (deg - 1.0)
    return np.divide(shared, pairs, out=np.zeros_like(deg), where=deg > 1)


@numba.njit(cache=True)
def _brandes(indptr, indices, n):
    bc = np.zeros(n)
    sigma = np.zeros(n)
    dist = np.full(n, -1, dtype=np.int32)
    delta = np.zeros(n)
    order = np.empty(n, dtype=np.int32)
    for s in range(n):
        dist[s] = 0
        sigma[s] = 1.0
        head = 0
        tail = 1
        order[0] = s
        # BFS: order doubles as the queue and, reversed, as the stack
        while head < tail:
            v = order[head]
            head += 1
            dv = dist[v] + 1
            sv = sigma[v]
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv
                    order[tail] = w
                    tail += 1
                if dist[w] == dv:
                    sigma[w] += sv
        for k in range(tail - 1, -1, -1):
            w = order[k]
            dw = dist[w] - 1
            coeff = (1.0 + delta[w]) / sigma[w]
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dw:
                    delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
        for k in range(tail):
            w = order[k]
            dist[w] = -1
            sigma[w] = 0.0
            delta[w] = 0.0
    return bc / 2.0


def betweenness(g: SocialGraph) -> dict[str, float]:
    """Exact unweighted betweenness on the undirected skeleton (pair counts,
    each unordered pair counted once)."""
    return dict(zip(g.nodes, _betweenness(g.skeleton()).tolist()))


def _betweenness(a: sp.csr_matrix) -> np.ndarray:
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    return _brandes(a.indptr.astype(np.int32), a.indices.astype(np.int32), n)


def _similarity_maxima(a: sp.csr_matrix, candidate_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise maximum Jaccard and cosine over candidates sharing a friend."""
    n = a.shape[0]
    deg = _undirected_degree(a)
    common = (a @ a).tocoo()
    keep = (common.row != common.col) & candidate_mask[common.col]
    rows, cols, inter = common.row[keep], common.col[keep], common.data[keep]
    jac = inter / (deg[rows] + deg[cols] - inter)
    cos = inter / np.sqrt(deg[rows] * deg[cols])
    max_j = np.zeros(n)
    max_c = np.zeros(n)
    np.maximum.at(max_j, rows, jac)
    np.maximum.at(max_c, rows, cos)
    return max_j, max_c


def _partition_array(g: SocialGraph, partition: Mapping[str, str] | None) -> np.ndarray:
    if partition is None:
        return g.operators()
    return np.array([partition.get(n, "") for n in g.nodes], dtype=object)


def top_similarities(g: SocialGraph, partition: Mapping[str, str] | None = None
                     ) -> dict[str, tuple[float, float, float, float]]:
    """Per node: (max_jaccard_home, max_jaccard_competitor, max_cosine_home,
    max_cosine_competitor). Pairs without a mutual friend are never compared.

    ``partition`` maps node ids to ``HOME``/``COMPETITOR``; by default the
    operator prefix of each id is used. Nodes in neither class are not
    candidates.
    """
    a = g.skeleton()
    part = _partition_array(g, partition)
    jh, ch = _similarity_maxima(a, part == "HOME")
    jc, cc = _similarity_maxima(a, part == "COMPETITOR")
    return {node: (jh[i], jc[i], ch[i], cc[i]) for i, node in enumerate(g.nodes)}


# --- feature rows ---------------------------------------------------------

@dataclass
class SnaFeatureRow:
    id: str
    in_degree: int
    out_degree: int
    pr_duration: float
    sr_duration: float
    pr_event_count: float
    sr_event_count: float
    pr_mean: float
    sr_mean: float
    neighbor_connectivity: float
    local_clustering: float
    betweenness: float
    power_factor: float
    max_jaccard_home: float
    max_jaccard_competitor: float
    max_cosine_home: float
    max_cosine_competitor: float


SNA_COLUMNS = [f.name for f in fields(SnaFeatureRow)]
SNA_FEATURES = SNA_COLUMNS[1:]


def isolated_defaults(d: float = 0.85) -> dict[str, float]:
    """Feature values of a node with no edges in the window."""
    out = {name: 0.0 for name in SNA_FEATURES}
    for name in ("pr_duration", "sr_duration", "pr_event_count", "sr_event_count",
                 "pr_mean", "sr_mean", "power_factor"):
        out[name] = 1.0 - d
    return out


@dataclass
class RankConfig:
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 100


def sna_feature_frame(g: SocialGraph, partition: Mapping[str, str] | None = None,
                      config: RankConfig | None = None) -> pd.DataFrame:
    """All SNA features for every node of ``g`` as a frame indexed by id."""
    config = config or RankConfig()
    a = g.skeleton()
    n = g.n_nodes
    cols: dict[str, np.ndarray] = {
        "in_degree": np.bincount(g.dst, minlength=n),
        "out_degree": np.bincount(g.src, minlength=n),
    }
    suffix = {WeightScheme.DURATION: "duration", WeightScheme.EVENT_COUNT: "event_count",
              WeightScheme.MEAN_OF_BOTH: "mean"}
    for scheme, name in suffix.items():
        gs = g.with_scheme(scheme)
        cols[f"pr_{name}"] = pagerank(gs, config.damping, config.tol, config.max_iter).values
        cols[f"sr_{name}"] = senderrank(gs, config.damping, config.tol, config.max_iter).values
    cols["neighbor_connectivity"] = _neighbor_connectivity(a)
    cols["local_clustering"] = _local_clustering(a)
    cols["betweenness"] = _betweenness(a)
    cols["power_factor"] = (cols["pr_mean"] + cols["sr_mean"]) / 2.0
    part = _partition_array(g, partition)
    cols["max_jaccard_home"], cols["max_cosine_home"] = _similarity_maxima(a, part == "HOME")
    cols["max_jaccard_competitor"], cols["max_cosine_competitor"] = _similarity_maxima(a, part == "COMPETITOR")
    df = pd.DataFrame({k: cols[k] for k in SNA_FEATURES}, index=pd.Index(g.nodes, name="id"))
    return df


def sna_features(records, window: tuple, partition: Mapping[str, str] | None = None,
                 config: RankConfig | None = None) -> list[SnaFeatureRow]:
    """One feature row per HOME node of the graph built over ``window``."""
    frame = sna_frame(records, window, partition, config)
    return frame_to_rows(frame)


def sna_frame(records, window: tuple, partition: Mapping[str, str] | None = None,
              config: RankConfig | None = None) -> pd.DataFrame:
    g = build_graph(records, window)
    df = sna_feature_frame(g, partition, config)
    part = _partition_array(g, partition)
    return df[part == "HOME"]


def frame_to_rows(df: pd.DataFrame) -> list[SnaFeatureRow]:
    rows = []
    for ident, vals in zip(df.index, df.itertuples(index=False)):
        rec = dict(zip(df.columns, vals))
        rec["in_degree"] = int(rec["in_degree"])
        rec["out_degree"] = int(rec["out_degree"])
        rows.append(SnaFeatureRow(id=str(ident), **{k: rec[k] for k in SNA_FEATURES}))
    return rows


def rows_to_frame(rows: list[SnaFeatureRow]) -> pd.DataFrame:
    if not rows:
        return pd.DataFrame(columns=SNA_FEATURES, index=pd.Index([], name="id"))
    return pd.DataFrame([{f: getattr(r, f) for f in SNA_COLUMNS} for r in rows]).set_index("id")


def write_sna_csv(path, df: pd.DataFrame) -> None:
    out = df.reset_index()[SNA_COLUMNS]
    atomic_write_text(path, out.to_csv(index=False, lineterminator="\n", float_format="%.17g"))


def read_sna_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    if list(df.columns) != SNA_COLUMNS:
        raise ValueError(f"SNA CSV header must be {','.join(SNA_COLUMNS)}")
    return df.set_index("id")


def write_edge_list(path, g: SocialGraph) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["src", "dst", "duration_s", "event_count"])
    for s, t, du, ev in zip(g.src, g.dst, g.duration, g.events):
        writer.writerow([g.nodes[s], g.nodes[t], repr(float(du)) if du % 1 else int(du), int(ev)])
    atomic_write_text(path, buf.getvalue())
