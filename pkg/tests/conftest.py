import numpy as np
import pytest

from flowgnn.graphs import FlowGraph, aggregate_feature_names
from flowgnn.ingest import FlowRecord, LabelTriple, SampleFlows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_graph(edges, d=4, seed=0, gid="g", labels=LabelTriple(0, 0, 0)):
    """FlowGraph over explicit integer edges with random edge features."""
    g = np.random.default_rng(seed)
    nodes = sorted({v for e in edges for v in e})
    remap = {v: i for i, v in enumerate(nodes)}
    edge_list = tuple((remap[s], remap[t]) for s, t in edges)
    x = g.normal(size=(len(edge_list), d))
    return FlowGraph(
        sample_id=gid,
        nodes=tuple(f"n{v}" for v in nodes),
        edges=edge_list,
        edge_features=x,
        feature_names=tuple(f"c{i}" for i in range(d)),
        labels=labels,
    )


def random_connected_graph(rng, n_nodes=None, d=4, gid="g", min_edges=2,
                           labels=LabelTriple(0, 0, 0)):
    """Random directed graph where every node touches at least one edge."""
    n = int(n_nodes if n_nodes is not None else rng.integers(3, 7))
    edges = {(i, int(rng.integers(n))) for i in range(n)}
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        a, b = rng.integers(0, n, size=2)
        edges.add((int(a), int(b)))
    while len(edges) < min_edges:
        a, b = rng.integers(0, n, size=2)
        edges.add((int(a), int(b)))
    edges = sorted(edges)
    used = sorted({v for e in edges for v in e})
    remap = {v: i for i, v in enumerate(used)}
    edge_list = tuple((remap[s], remap[t]) for s, t in edges)
    x = rng.normal(size=(len(edge_list), d))
    return FlowGraph(
        sample_id=gid,
        nodes=tuple(f"n{v}" for v in used),
        edges=edge_list,
        edge_features=x,
        feature_names=tuple(f"c{i}" for i in range(d)),
        labels=labels,
    )


def make_sample(pairs, d=3, seed=0, sid="s0", labels=None):
    """SampleFlows with one flow per (src, dst) pair plus random features."""
    g = np.random.default_rng(seed)
    flows = tuple(
        FlowRecord(src, dst, tuple(g.normal(size=d))) for src, dst in pairs
    )
    return SampleFlows(sid, flows, labels)


def permute_graph(graph: FlowGraph, rng) -> FlowGraph:
    """Relabel nodes and reorder edges consistently."""
    n = graph.num_nodes
    perm = rng.permutation(n)  # perm[old] = new index
    edge_order = rng.permutation(graph.num_edges)
    new_nodes = [None] * n
    for old, new in enumerate(perm):
        new_nodes[new] = graph.nodes[old]
    new_edges = tuple(
        (int(perm[graph.edges[e][0]]), int(perm[graph.edges[e][1]]))
        for e in edge_order
    )
    return FlowGraph(
        sample_id=graph.sample_id,
        nodes=tuple(new_nodes),
        edges=new_edges,
        edge_features=graph.edge_features[edge_order],
        feature_names=graph.feature_names,
        labels=graph.labels,
    )


__all__ = [
    "aggregate_feature_names",
    "make_graph",
    "make_sample",
    "permute_graph",
    "random_connected_graph",
]
