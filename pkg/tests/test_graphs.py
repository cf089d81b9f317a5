import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgnn.errors import EmptyInput
from flowgnn.graphs import (
    STRUCTURAL_DIM,
    aggregate_edge_features,
    build_flow_graph,
    combined_features,
    flow_aggregate_features,
    read_graphs_jsonl,
    structural_features,
    write_graphs_jsonl,
)
from flowgnn.ingest import FlowRecord, LabelTriple, SampleFlows

from .conftest import make_graph, make_sample, random_connected_graph


def moments_oracle(column):
    """Direct per-definition moment computation, scalar loops only."""
    k = len(column)
    mean = sum(column) / k
    med = sorted(column)
    median = (med[(k - 1) // 2] + med[k // 2]) / 2.0
    if max(column) == min(column):
        return mean, median, 0.0, 0.0, 0.0
    m2 = sum((x - mean) ** 2 for x in column) / k
    m3 = sum((x - mean) ** 3 for x in column) / k
    m4 = sum((x - mean) ** 4 for x in column) / k
    if m2 == 0.0:
        return mean, median, 0.0, 0.0, 0.0
    std = math.sqrt(m2)
    skew = m3 / std ** 3 if std ** 3 > 0.0 else 0.0
    kurt = m4 / m2 ** 2 - 3.0 if m2 ** 2 > 0.0 else 0.0
    return mean, median, std, skew, kurt


def aggregate_oracle(matrix):
    cols = list(zip(*matrix))
    stats = [moments_oracle(list(c)) for c in cols]
    out = []
    for stat_index in range(5):
        out.extend(s[stat_index] for s in stats)
    return np.array(out)


class TestAggregateEdgeFeatures:
    def test_single_flow(self):
        out = aggregate_edge_features(np.array([[5.0]]))
        assert np.array_equal(out, [5.0, 5.0, 0.0, 0.0, 0.0])

    def test_two_values_hand_computed(self):
        out = aggregate_edge_features(np.array([[1.0], [3.0]]))
        assert np.allclose(out, [2.0, 2.0, 1.0, 0.0, -2.0], atol=1e-12)

    def test_four_values_hand_computed(self):
        out = aggregate_edge_features(np.array([[1.0], [2.0], [3.0], [4.0]]))
        assert out[1] == pytest.approx(2.5)
        assert out[2] == pytest.approx(math.sqrt(1.25))
        assert out[3] == pytest.approx(0.0, abs=1e-12)
        assert out[4] == pytest.approx(-1.36, abs=1e-12)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            aggregate_edge_features(np.zeros((0, 3)))

    def test_matches_oracle_random(self, rng):
        for _ in range(300):
            k = int(rng.integers(1, 51))
            d = int(rng.integers(1, 11))
            matrix = rng.normal(scale=10.0, size=(k, d))
            if rng.random() < 0.3:
                matrix[:, 0] = 3.25  # constant column fallback path
            got = aggregate_edge_features(matrix)
            want = aggregate_oracle(matrix.tolist())
            np.testing.assert_allclose(got, want, atol=1e-10, rtol=1e-10)

    @given(st.lists(
        st.lists(st.floats(min_value=-1e6, max_value=1e6,
                           allow_nan=False, allow_infinity=False),
                 min_size=2, max_size=2),
        min_size=1, max_size=30,
    ))
    @settings(max_examples=100, deadline=None)
    def test_property_matches_oracle(self, rows):
        got = aggregate_edge_features(np.array(rows))
        want = aggregate_oracle(rows)
        np.testing.assert_allclose(got, want, atol=1e-6, rtol=1e-9)

    def test_always_finite_even_near_constant(self):
        out = aggregate_edge_features(np.array([[0.1], [0.1], [0.1]]))
        assert np.array_equal(out[2:], [0.0, 0.0, 0.0])
        out2 = aggregate_edge_features(np.array([[1.0], [1.0 + 1e-15]]))
        assert np.all(np.isfinite(out2))


class TestBuildFlowGraph:
    def test_merges_repeated_pairs(self):
        sample = SampleFlows("s", (
            FlowRecord("A", "B", (1.0,)),
            FlowRecord("A", "B", (3.0,)),
            FlowRecord("B", "C", (5.0,)),
        ), None)
        graph = build_flow_graph(sample)
        assert graph.nodes == ("A", "B", "C")
        assert graph.edges == ((0, 1), (1, 2))
        assert np.allclose(graph.edge_features[0], [2.0, 2.0, 1.0, 0.0, -2.0])
        assert np.allclose(graph.edge_features[1], [5.0, 5.0, 0.0, 0.0, 0.0])

    def test_self_loop(self):
        sample = SampleFlows("s", (FlowRecord("A", "A", (2.0,)),), None)
        graph = build_flow_graph(sample)
        assert graph.num_nodes == 1
        assert graph.edges == ((0, 0),)

    def test_flow_order_invariance(self, rng):
        pairs = [("a", "b"), ("b", "c"), ("a", "b"), ("c", "a"), ("b", "c"), ("a", "b")]
        sample = make_sample(pairs, d=3, seed=5)
        base = build_flow_graph(sample)
        base_map = {
            (base.nodes[s], base.nodes[t]): base.edge_features[i]
            for i, (s, t) in enumerate(base.edges)
        }
        for _ in range(10):
            perm = rng.permutation(len(sample.flows))
            shuffled = SampleFlows("s0", tuple(sample.flows[i] for i in perm), None)
            other = build_flow_graph(shuffled)
            assert set(other.nodes) == set(base.nodes)
            other_map = {
                (other.nodes[s], other.nodes[t]): other.edge_features[i]
                for i, (s, t) in enumerate(other.edges)
            }
            assert set(other_map) == set(base_map)
            for key in base_map:
                np.testing.assert_allclose(other_map[key], base_map[key], atol=1e-12)

    def test_size_bounds(self, rng):
        for seed in range(20):
            sample = make_sample(
                [(f"h{rng.integers(4)}", f"h{rng.integers(4)}") for _ in range(6)],
                seed=seed,
            )
            graph = build_flow_graph(sample)
            assert graph.num_edges <= len(sample.flows)
            assert graph.num_nodes <= 2 * len(sample.flows)


def to_networkx(graph):
    g = nx.Graph()
    g.add_nodes_from(range(graph.num_nodes))
    for s, t in graph.edges:
        if s != t:
            g.add_edge(s, t)
    return g


class TestStructuralFeatures:
    def test_triangle_graph(self):
        graph = make_graph([(0, 1), (1, 2), (2, 0)])
        feats = structural_features(graph)
        assert feats.values[0] == pytest.approx(1.0)  # global clustering
        degree_block = feats.values[2:2 + 8]
        assert degree_block[0] == pytest.approx(2.0)  # mean degree

    def test_star_graph(self):
        graph = make_graph([(0, 1), (0, 2), (0, 3)])
        feats = structural_features(graph)
        assert feats.values[0] == pytest.approx(0.0)
        assert feats.values[1] == pytest.approx(-1.0)  # assortativity
        assert feats.values[2] == pytest.approx(1.5)  # mean degree

    def test_vector_length_and_names(self):
        graph = make_graph([(0, 1)])
        feats = structural_features(graph)
        assert len(feats.values) == STRUCTURAL_DIM == 42
        assert len(feats.names) == 42
        assert feats.names[0] == "global_clustering_coefficient"

    def test_self_loop_only_graph(self):
        graph = make_graph([(0, 0)])
        feats = structural_features(graph)
        assert np.all(np.isfinite(feats.values))
        assert feats.values[0] == 0.0

    def test_against_networkx(self, rng):
        for seed in range(25):
            graph = random_connected_graph(np.random.default_rng(seed), n_nodes=7)
            nxg = to_networkx(graph)
            feats = structural_features(graph)
            # globals
            expected_cc = nx.transitivity(nxg)
            assert feats.values[0] == pytest.approx(expected_cc, abs=1e-9)
            if nxg.number_of_edges() > 0:
                expected_assort = nx.degree_assortativity_coefficient(nxg)
                if not math.isnan(expected_assort):
                    assert feats.values[1] == pytest.approx(expected_assort, abs=1e-9)
            # locals, recomputed per node with networkx as the oracle
            degree = [nxg.degree(v) for v in range(graph.num_nodes)]
            clustering = nx.clustering(nxg)
            betweenness = nx.betweenness_centrality(nxg, normalized=False)
            two_hop = []
            ego_edges = []
            ego_boundary = []
            for v in range(graph.num_nodes):
                lengths = nx.single_source_shortest_path_length(nxg, v, cutoff=2)
                two_hop.append(sum(1 for dist in lengths.values() if dist == 2))
                ego = nx.ego_graph(nxg, v, radius=1)
                ego_edges.append(ego.number_of_edges())
                ego_boundary.append(sum(
                    1 for a, b in nxg.edges
                    if (a in ego) != (b in ego)
                ))
            neigh_deg = [
                np.mean([degree[u] for u in nxg.neighbors(v)]) if degree[v] else 0.0
                for v in range(graph.num_nodes)
            ]
            neigh_clust = [
                np.mean([clustering[u] for u in nxg.neighbors(v)]) if degree[v] else 0.0
                for v in range(graph.num_nodes)
            ]
            oracle_locals = np.column_stack([
                degree, two_hop,
                [clustering[v] for v in range(graph.num_nodes)],
                neigh_deg, neigh_clust, ego_edges, ego_boundary,
                [betweenness[v] for v in range(graph.num_nodes)],
            ])
            expected = aggregate_edge_features(oracle_locals)
            np.testing.assert_allclose(feats.values[2:], expected, atol=1e-9)

    def test_relabeling_equivariance(self, rng):
        from .conftest import permute_graph

        for seed in range(10):
            graph = random_connected_graph(np.random.default_rng(seed))
            permuted = permute_graph(graph, rng)
            a = structural_features(graph).values
            b = structural_features(permuted).values
            np.testing.assert_allclose(a, b, atol=1e-9)


class TestSampleFeatureSets:
    def test_flow_aggregate_single_flow(self):
        sample = SampleFlows("s", (FlowRecord("a", "b", (7.0, -2.0)),), None)
        out = flow_aggregate_features(sample)
        assert np.array_equal(out, [7.0, -2.0, 7.0, -2.0, 0, 0, 0, 0, 0, 0])

    def test_flow_aggregate_equals_stacked_matrix(self):
        sample = make_sample([("a", "b"), ("b", "c")], d=4, seed=3)
        stacked = np.array([f.features for f in sample.flows])
        np.testing.assert_array_equal(
            flow_aggregate_features(sample), aggregate_edge_features(stacked)
        )

    def test_combined_layout(self):
        sample = make_sample([("a", "b"), ("b", "c")], d=4, seed=3)
        combined = combined_features(sample)
        flow = flow_aggregate_features(sample)
        assert len(combined) == 5 * 4 + 42
        np.testing.assert_array_equal(combined[:20], flow)

    def test_no_columns_dropped_here(self):
        # constant-column removal is a downstream training concern
        sample = SampleFlows("s", (
            FlowRecord("a", "b", (1.0, 5.0)),
            FlowRecord("b", "c", (1.0, 6.0)),
        ), None)
        out = flow_aggregate_features(sample)
        assert len(out) == 10  # width preserved despite the constant column


class TestGraphJsonl:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        graphs = [
            random_connected_graph(rng, gid=f"g{i}",
                                   labels=LabelTriple(i % 2, i % 3, None))
            for i in range(20)
        ]
        graphs[0] = make_graph([(0, 1)], seed=9, gid="tiny", labels=None)
        path = tmp_path / "graphs.jsonl"
        write_graphs_jsonl(graphs, path)
        loaded = read_graphs_jsonl(path)
        assert len(loaded) == len(graphs)
        for a, b in zip(loaded, graphs):
            assert a.sample_id == b.sample_id
            assert a.nodes == b.nodes
            assert a.edges == b.edges
            assert a.labels == b.labels
            assert a.feature_names == b.feature_names
            assert np.array_equal(a.edge_features, b.edge_features)
