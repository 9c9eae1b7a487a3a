"""Compares every SNA measure of one graph against the oracles."""

import oracles
from churnforge.social_graph import (
    betweenness,
    degrees,
    from_edges,
    local_clustering,
    neighbor_connectivity,
    pagerank,
    senderrank,
    top_similarities,
)


def check_graph(names, edges, part):
    g = from_edges(edges, names)
    for scheme in ("duration", "event_count", "mean"):
        w = oracles.scheme_weights(edges, scheme)
        gs = g.with_scheme(scheme)
        pr = pagerank(gs, tol=1e-12, max_iter=5000).as_dict()
        sr = senderrank(gs, tol=1e-12, max_iter=5000).as_dict()
        want_pr = oracles.pagerank_exact(list(g.nodes), w)
        want_sr = oracles.pagerank_exact(list(g.nodes), w, reverse=True)
        for v in g.nodes:
            assert abs(pr[v] - want_pr[v]) < 1e-6
            assert abs(sr[v] - want_sr[v]) < 1e-6
    nb = oracles.neighbours(g.nodes, edges)
    assert neighbor_connectivity(g) == oracles.neighbor_connectivity(nb)
    assert local_clustering(g) == oracles.local_clustering(nb)
    bc = betweenness(g)
    want_bc = oracles.betweenness(nb)
    for v in g.nodes:
        assert abs(bc[v] - float(want_bc[v])) < 1e-9
    sims = top_similarities(g, part)
    jh, ch = oracles.similarity_maxima(nb, part, "HOME")
    jc, cc = oracles.similarity_maxima(nb, part, "COMPETITOR")
    for v in g.nodes:
        assert sims[v] == (jh[v], jc[v], ch[v], cc[v])
    ind = {v: 0 for v in g.nodes}
    outd = {v: 0 for v in g.nodes}
    for s, t, *_ in edges:
        outd[s] += 1
        ind[t] += 1
    assert degrees(g) == {v: (ind[v], outd[v]) for v in g.nodes}
