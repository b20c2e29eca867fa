import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copurchase.features import (
    DEFAULT_CAT_DEPTH,
    GROUP_ORDER,
    PAD,
    VARIANTS,
    category_similarity,
    feature_layout,
    feature_names,
    group_onehot,
    node_feature,
    pad_path,
    pair_feature,
    pair_feature_matrix,
    save_feature_table,
)
from copurchase.graph import CoPurchaseGraph


class TestGroupOnehot:
    def test_book(self):
        assert group_onehot("Book").tolist() == [1, 0, 0, 0]

    def test_video(self):
        assert group_onehot("Video").tolist() == [0, 0, 0, 1]

    def test_unknown_group_zero_vector(self):
        assert group_onehot("Software").tolist() == [0, 0, 0, 0]
        assert group_onehot(None).tolist() == [0, 0, 0, 0]

    def test_at_most_one_hot(self):
        for g in (*GROUP_ORDER, "Toy", None):
            assert group_onehot(g).sum() <= 1


class TestPadPath:
    def test_pad_shorter(self):
        assert pad_path([283155, 1000, 17], 5).tolist() == [283155, 1000, 17, PAD, PAD]

    def test_truncate_deeper(self):
        assert pad_path(list(range(10)), 8).tolist() == list(range(8))

    def test_empty(self):
        assert pad_path([], 4).tolist() == [PAD] * 4


def similarity_oracle(paths_u, paths_v, d_cat):
    """Exhaustive best-pair search, written independently of the library path."""
    best_key, best_vec = None, [0] * d_cat
    for pu in paths_u:
        for pv in paths_v:
            vec = []
            for i in range(d_cat):
                a = pu[i] if i < len(pu) else None
                b = pv[i] if i < len(pv) else None
                vec.append(1 if (a is not None and a == b) else 0)
            if 1 not in vec:
                continue
            deepest = max(i for i, x in enumerate(vec) if x == 1)
            key = (deepest, tuple(vec))
            if best_key is None or key > best_key:
                best_key, best_vec = key, vec
    return best_vec


_id_paths = st.lists(st.integers(0, 6), min_size=1, max_size=6).map(tuple)
_path_sets = st.lists(_id_paths, min_size=0, max_size=4)


class TestCategorySimilarity:
    def test_identical_depth3(self):
        assert category_similarity([(1, 2, 3)], [(1, 2, 3)], 5).tolist() == [1, 1, 1, 0, 0]

    def test_share_first_two_levels(self):
        assert category_similarity([(1, 2, 9)], [(1, 2, 3)], 5).tolist() == [1, 1, 0, 0, 0]

    def test_deepest_pair_wins(self):
        # one path matches to depth 1, another to depth 3
        u = [(1, 8, 9), (5, 6, 7)]
        v = [(1, 2, 3), (5, 6, 7)]
        assert category_similarity(u, v, 5).tolist() == [1, 1, 1, 0, 0]

    def test_no_match_zero_vector(self):
        assert category_similarity([(1,)], [(2,)], 4).tolist() == [0, 0, 0, 0]

    def test_empty_path_lists(self):
        assert category_similarity([], [(1, 2)], 4).tolist() == [0, 0, 0, 0]
        assert category_similarity([], [], 4).tolist() == [0, 0, 0, 0]

    def test_match_can_follow_mismatch(self):
        # re-converging ids: positionwise output is kept raw, not prefix-forced
        assert category_similarity([(1, 9, 3)], [(1, 2, 3)], 4).tolist() == [1, 0, 1, 0]

    def test_self_similarity_is_ones_to_deepest_depth(self):
        paths = [(1, 2), (3, 4, 5, 6)]
        assert category_similarity(paths, paths, 6).tolist() == [1, 1, 1, 1, 0, 0]

    @settings(max_examples=200, deadline=None)
    @given(u=_path_sets, v=_path_sets, d=st.integers(1, 8))
    def test_symmetry(self, u, v, d):
        assert category_similarity(u, v, d).tolist() == category_similarity(v, u, d).tolist()

    @settings(max_examples=200, deadline=None)
    @given(u=_path_sets, v=_path_sets, d=st.integers(1, 8))
    def test_matches_exhaustive_oracle(self, u, v, d):
        assert category_similarity(u, v, d).tolist() == similarity_oracle(u, v, d)

    @settings(max_examples=100, deadline=None)
    @given(u=_path_sets, v=_path_sets, d=st.integers(1, 8))
    def test_no_match_at_sentinel_positions(self, u, v, d):
        # beyond every path's depth both padded sides hold the sentinel
        vec = category_similarity(u, v, d)
        max_depth = max([len(p) for p in list(u) + list(v)] or [0])
        assert not vec[min(max_depth, d):].any()


def sample_graph():
    return CoPurchaseGraph.from_edge_list(
        5,
        [(0, 1), (1, 2), (2, 3), (1, 3)],
        groups=["Book", "DVD", "Music", "Video", "Other Stuff"],
        category_ids=[
            ((1, 2, 3),),
            ((1, 2, 4), (9, 8)),
            ((9, 8, 7),),
            (),
            ((1, 2, 3, 4),),
        ],
    )


class TestNodeFeature:
    def test_isolated_node(self):
        g = sample_graph()
        nf = node_feature(g, 4)
        assert nf.log_degree == 0.0 and nf.clustering == 0.0
        assert nf.group_onehot.tolist() == [0, 0, 0, 0]

    def test_hub_node(self):
        g = sample_graph()
        nf = node_feature(g, 1)
        assert nf.log_degree == pytest.approx(np.log(4))
        assert nf.clustering == pytest.approx(1 / 3)
        assert nf.vector().shape == (6,)


class TestPairFeature:
    def test_default_layout_and_width(self):
        g = sample_graph()
        vec = pair_feature(g, 0, 1).vector()
        layout = feature_layout()
        assert vec.shape == (sum(w for _, w in layout),)
        assert vec.shape == (4 + 4 + DEFAULT_CAT_DEPTH + 2,)
        # [G(u), G(v), sim, D(v), CC(v)]
        assert vec[:4].tolist() == [1, 0, 0, 0]
        assert vec[4:8].tolist() == [0, 1, 0, 0]
        assert vec[8 : 8 + DEFAULT_CAT_DEPTH].tolist() == [1, 1, 0, 0, 0, 0, 0, 0]
        assert vec[-2] == pytest.approx(np.log(4))
        assert vec[-1] == pytest.approx(1 / 3)

    def test_no_category_variant_shrinks(self):
        g = sample_graph()
        full = pair_feature(g, 0, 1).vector("full")
        cut = pair_feature(g, 0, 1).vector("no_category")
        assert len(full) - len(cut) == DEFAULT_CAT_DEPTH

    def test_unknown_variant_errors(self):
        g = sample_graph()
        with pytest.raises(ValueError, match="unknown feature variant"):
            pair_feature(g, 0, 1).vector("no_titles")
        with pytest.raises(ValueError):
            feature_layout("bogus")

    def test_source_structural_optional(self):
        g = sample_graph()
        vec = pair_feature(g, 2, 1).vector("full", include_source_structural=True)
        assert vec.shape == (4 + 4 + DEFAULT_CAT_DEPTH + 4,)

    def test_variant_widths_consistent(self):
        g = sample_graph()
        pairs = [(0, 1), (2, 3), (4, 0)]
        for variant in VARIANTS:
            X = pair_feature_matrix(g, pairs, variant)
            widths = {len(pair_feature(g, u, v).vector(variant)) for u, v in pairs}
            assert widths == {X.shape[1]}
            assert X.shape[0] == len(pairs)
            assert len(feature_names(variant)) == X.shape[1]

    def test_empty_pairs_matrix(self):
        X = pair_feature_matrix(sample_graph(), [], "full")
        assert X.shape == (0, 18)


def test_feature_table_csv(tmp_path):
    g = sample_graph()
    pairs = [(0, 1), (2, 3)]
    X = pair_feature_matrix(g, pairs, "full")
    path = tmp_path / "features.csv"
    save_feature_table(path, X, [1, 0], pairs, g.asins, "full")
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:3] == ["source_asin", "target_asin", "label"]
    assert len(header) == 3 + X.shape[1]
    assert len(lines) == 3
