import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copurchase.community import (
    Partition,
    load_partition,
    louvain,
    modularity,
    modularity_by_attribute,
    modularity_by_category_similarity,
    save_partition,
)
from copurchase.graph import CoPurchaseGraph

from conftest import random_gnp_graph


def modularity_pairwise(g, labels):
    """O(n^2) oracle: (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)."""
    m = g.m
    deg = g.degrees
    q = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if labels[i] != labels[j]:
                continue
            a = 1.0 if (i != j and g.has_edge(i, j)) else 0.0
            q += a - deg[i] * deg[j] / (2.0 * m)
    return q / (2.0 * m)


def set_partitions(items):
    """All set partitions (restricted-growth enumeration)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in set_partitions(rest):
        for i, block in enumerate(smaller):
            yield smaller[:i] + [[first] + block] + smaller[i + 1 :]
        yield [[first]] + smaller


class TestModularity:
    def test_single_edge_one_community_is_zero(self):
        g = CoPurchaseGraph.from_edge_list(2, [(0, 1)])
        assert modularity(g, np.array([0, 0])) == pytest.approx(0.0, abs=1e-15)

    def test_two_disjoint_triangles_by_component(self):
        g = CoPurchaseGraph.from_edge_list(
            6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
        )
        # hand evaluation: 2 * (3/6 - (6/12)^2) = 0.5
        assert modularity(g, np.array([0, 0, 0, 1, 1, 1])) == pytest.approx(0.5)
        assert modularity_pairwise(g, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.5)

    def test_two_triangles_bridged(self, two_triangles_bridged):
        q = modularity(two_triangles_bridged, np.array([0, 0, 0, 1, 1, 1]))
        assert q == pytest.approx(5 / 14)

    def test_singletons_formula(self, two_triangles_bridged):
        g = two_triangles_bridged
        q = modularity(g, np.arange(g.n))
        deg = g.degrees.astype(float)
        assert q == pytest.approx(-float((deg**2).sum()) / (4.0 * g.m**2))

    def test_all_in_one_is_zero(self, two_triangles_bridged):
        q = modularity(two_triangles_bridged, np.zeros(6, dtype=int))
        assert q == pytest.approx(0.0, abs=1e-15)

    def test_edgeless_errors(self):
        g = CoPurchaseGraph.from_edge_list(3, [])
        with pytest.raises(ValueError):
            modularity(g, np.zeros(3, dtype=int))

    def test_partial_partition_errors(self, two_triangles_bridged):
        with pytest.raises(ValueError):
            modularity(two_triangles_bridged, np.zeros(3, dtype=int))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(3, 60), c=st.integers(1, 5))
    def test_aggregated_equals_pairwise(self, seed, n, c):
        g = random_gnp_graph(n, 0.15, seed)
        if g.m == 0:
            return
        labels = np.random.default_rng(seed).integers(0, c, size=n)
        assert modularity(g, labels) == pytest.approx(
            modularity_pairwise(g, labels.tolist()), abs=1e-12
        )

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_upper_bound(self, seed):
        g = random_gnp_graph(20, 0.2, seed)
        if g.m == 0:
            return
        labels = np.random.default_rng(seed + 7).integers(0, 4, size=20)
        assert modularity(g, labels) <= 1 - 1 / (2 * g.m) + 1e-12


class TestLouvain:
    def test_two_triangles_is_global_optimum(self, two_triangles_bridged):
        # exhaustive oracle: best Q over all 203 partitions of 6 nodes
        g = two_triangles_bridged
        best_q, best_blocks = -2.0, None
        for blocks in set_partitions(list(range(6))):
            labels = np.empty(6, dtype=int)
            for ci, block in enumerate(blocks):
                labels[block] = ci
            q = modularity(g, labels)
            if q > best_q:
                best_q, best_blocks = q, blocks
        assert best_q == pytest.approx(5 / 14)
        assert sorted(sorted(b) for b in best_blocks) == [[0, 1, 2], [3, 4, 5]]
        result = louvain(g, seed=0)
        assert result.modularity == pytest.approx(best_q)

    @pytest.mark.parametrize("seed", range(10))
    def test_recovers_triangle_partition_all_seeds(self, two_triangles_bridged, seed):
        result = louvain(two_triangles_bridged, seed=seed)
        labels = result.partition.labels
        assert labels[0] == labels[1] == labels[2]
        assert labels[3] == labels[4] == labels[5]
        assert labels[0] != labels[3]

    def test_complete_graph_single_community(self):
        g = CoPurchaseGraph.from_edge_list(4, list(itertools.combinations(range(4), 2)))
        result = louvain(g, seed=0)
        assert result.partition.n_communities == 1

    def test_sweep_modularity_non_decreasing(self, catalog_lcc):
        result = louvain(catalog_lcc, seed=1)
        qs = result.sweep_modularity
        assert all(b >= a - 1e-12 for a, b in zip(qs, qs[1:]))

    def test_seed_determinism(self, catalog_lcc):
        a = louvain(catalog_lcc, seed=5)
        b = louvain(catalog_lcc, seed=5)
        assert np.array_equal(a.partition.labels, b.partition.labels)
        assert a.modularity == b.modularity

    def test_final_q_matches_recompute(self, catalog_lcc):
        result = louvain(catalog_lcc, seed=2)
        assert result.modularity == pytest.approx(
            modularity(catalog_lcc, result.partition)
        )

    def test_finds_planted_communities(self, catalog_lcc):
        # hub-and-leaf communities are strong; Q should be high
        result = louvain(catalog_lcc, seed=0)
        assert result.modularity > 0.7

    def test_edgeless_errors(self):
        with pytest.raises(ValueError):
            louvain(CoPurchaseGraph.from_edge_list(3, []), seed=0)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_random_graphs_monotone_sweeps(self, seed):
        g = random_gnp_graph(30, 0.15, seed)
        if g.m == 0:
            return
        result = louvain(g, seed=seed)
        qs = result.sweep_modularity
        assert all(b >= a - 1e-12 for a, b in zip(qs, qs[1:]))
        assert -0.5 <= result.modularity <= 1 - 1 / (2 * g.m) + 1e-12


class TestModularityByAttribute:
    def test_matches_louvain_partition_labels(self, two_triangles_bridged):
        result = louvain(two_triangles_bridged, seed=0)
        attr = [f"c{c}" for c in result.partition.labels]
        assert modularity_by_attribute(two_triangles_bridged, attr) == pytest.approx(
            result.modularity
        )

    def test_random_labels_near_zero(self):
        qs = []
        for seed in range(20):
            g = random_gnp_graph(300, 0.05, 1234)
            labels = np.random.default_rng(seed).integers(0, 4, size=300)
            qs.append(modularity_by_attribute(g, [f"g{x}" for x in labels]))
        assert abs(float(np.mean(qs))) < 0.02

    def test_missing_label_errors(self, two_triangles_bridged):
        with pytest.raises(ValueError):
            modularity_by_attribute(two_triangles_bridged, ["a", None, "a", "b", "b", "b"])


class TestSimilarityModularity:
    def test_all_ones_similarity_gives_zero(self, two_triangles_bridged):
        sim = lambda i, j: np.ones(4)
        res = modularity_by_category_similarity(two_triangles_bridged, sim, seed=0)
        assert res.exact
        assert res.q == pytest.approx(0.0, abs=1e-12)

    def test_indicator_similarity_matches_standard_q(self, two_triangles_bridged):
        labels = np.array([0, 0, 0, 1, 1, 1])
        sim = lambda i, j: np.array([1.0]) if labels[i] == labels[j] else np.array([0.0])
        res = modularity_by_category_similarity(two_triangles_bridged, sim, seed=0)
        assert res.q == pytest.approx(modularity(two_triangles_bridged, labels), abs=1e-12)

    def test_sampling_agrees_with_exact(self):
        g = random_gnp_graph(50, 0.12, 7)
        rng = np.random.default_rng(0)
        vecs = rng.integers(0, 2, size=(50, 6)).astype(float)

        def sim(i, j):
            return vecs[i] * vecs[j]

        exact = modularity_by_category_similarity(g, sim, seed=0, exact=True)
        sampled = modularity_by_category_similarity(
            g, sim, pair_sample_size=20_000, seed=3, exact=False
        )
        assert sampled.null_term_stderr > 0
        assert abs(sampled.q - exact.q) <= 3 * sampled.null_term_stderr

    def test_sampling_mode_rejects_tiny_budget(self, two_triangles_bridged):
        with pytest.raises(ValueError):
            modularity_by_category_similarity(
                two_triangles_bridged, lambda i, j: np.ones(2),
                pair_sample_size=100, exact=False,
            )

    def test_edgeless_errors(self):
        g = CoPurchaseGraph.from_edge_list(3, [])
        with pytest.raises(ValueError):
            modularity_by_category_similarity(g, lambda i, j: np.ones(2))


class TestPartition:
    def test_dense_renumber_by_first_appearance(self):
        p = Partition.from_labels([7, 3, 7, 9, 3])
        assert p.labels.tolist() == [0, 1, 0, 2, 1]
        assert p.n_communities == 3

    def test_members(self):
        p = Partition.from_labels([0, 1, 0])
        assert p.members(0).tolist() == [0, 2]

    def test_csv_roundtrip(self, tmp_path):
        p = Partition.from_labels([0, 1, 1, 2])
        save_partition(p, tmp_path / "p.csv")
        loaded = load_partition(tmp_path / "p.csv")
        assert np.array_equal(loaded.labels, p.labels)
