import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epm.graph import (
    GraphFormatError,
    HoldoutInfeasibleError,
    HoldoutMask,
    SparseGraph,
    degree_stats,
    format_edge_list,
    load_edge_list,
    load_mask,
    make_holdout,
    parse_edge_list,
    write_edge_list,
    write_mask,
)
from epm.randkit import RngStream

from conftest import random_graph


def test_load_simple_tsv(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("0 1\n1 2\n")
    g = load_edge_list(p, n_nodes=3)
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    assert g.degrees.tolist() == [1, 2, 1]


def test_empty_file_with_node_count(tmp_path):
    p = tmp_path / "e.tsv"
    p.write_text("")
    g = load_edge_list(p, n_nodes=5)
    assert g.n_nodes == 5 and g.n_edges == 0


def test_self_edge_strict_names_line():
    with pytest.raises(GraphFormatError, match="line 1"):
        parse_edge_list("2 2\n", n_nodes=3)
    assert parse_edge_list("2 2\n0 1\n", n_nodes=3, strict=False).n_edges == 1


def test_index_out_of_range_names_line():
    with pytest.raises(GraphFormatError, match="line 2"):
        parse_edge_list("0 1\n0 7\n", n_nodes=3)


def test_duplicates_and_reversed_pairs_are_merged():
    g = parse_edge_list("# comment\nnodes=4\n1 0\n0 1\n3 2\n")
    assert g.n_nodes == 4
    assert g.edges.tolist() == [[0, 1], [2, 3]]


def test_one_based_indices():
    g = parse_edge_list("1 2\n2 3\n", one_based=True)
    assert g.n_nodes == 3 and g.edges.tolist() == [[0, 1], [1, 2]]


def test_dense_matrix_format():
    g = parse_edge_list("0 1 0\n1 0 1\n0 1 0\n", fmt="dense")
    assert g.edges.tolist() == [[0, 1], [1, 2]]
    with pytest.raises(GraphFormatError, match="symmetric"):
        parse_edge_list("0 1\n0 0\n", fmt="dense")
    with pytest.raises(GraphFormatError, match="diagonal"):
        parse_edge_list("1 0\n0 0\n", fmt="dense")


def test_round_trip_is_byte_identical(tmp_path):
    g = random_graph(30, 0.2, 0)
    p = tmp_path / "g.tsv"
    write_edge_list(g, p)
    text = p.read_text()
    again = load_edge_list(p)
    assert again == g
    assert format_edge_list(again) == text


def test_graph_invariants():
    g = random_graph(40, 0.3, 1)
    assert np.all(g.edges[:, 0] < g.edges[:, 1])
    assert g.degrees.sum() == 2 * g.n_edges
    assert len({tuple(e) for e in g.edges}) == g.n_edges
    i, j = g.edges[0]
    assert g.has_edge(i, j) and g.has_edge(j, i)
    assert np.array_equal(g.to_dense(), g.to_dense().T)


def test_from_edges_rejects_self_loops():
    with pytest.raises(GraphFormatError):
        SparseGraph.from_edges(3, [(1, 1)])


# ------------------------------------------------------------------- holdout


def test_holdout_zero_fraction():
    g = random_graph(20, 0.3, 2)
    train, mask = make_holdout(g, 0.0, RngStream(0))
    assert train == g and len(mask) == 0


def test_holdout_star_keeps_leaf_edges():
    star = SparseGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    train, mask = make_holdout(star, 0.5, RngStream(0))
    assert len(mask) == 3
    assert train.n_edges == 3
    assert np.all(train.degrees[1:] >= 1)
    assert mask.pairs.tolist() == [[1, 2], [1, 3], [2, 3]]
    assert mask.labels.tolist() == [0, 0, 0]


def test_holdout_count_n230():
    g = random_graph(230, 595 / (230 * 229 / 2), 3)
    train, mask = make_holdout(g, 0.2, RngStream(1))
    assert len(mask) == 5267


def test_holdout_properties():
    g = random_graph(60, 0.1, 4)
    train, mask = make_holdout(g, 0.2, RngStream(5))
    train2, mask2 = make_holdout(g, 0.2, RngStream(5))
    assert np.array_equal(mask.pairs, mask2.pairs) and train == train2
    held_pos = {tuple(p) for p, lab in zip(mask.pairs, mask.labels) if lab}
    assert held_pos | {tuple(e) for e in train.edges} == {tuple(e) for e in g.edges}
    labels = np.array([g.has_edge(i, j) for i, j in mask.pairs])
    assert np.array_equal(labels, mask.labels.astype(bool))
    was_connected = g.degrees > 0
    assert train.degrees[was_connected].min() >= 1
    assert not np.any(mask.observed_mask(mask.pairs[:, 0], mask.pairs[:, 1]))
    assert np.all(mask.observed_mask(train.edges[:, 0], train.edges[:, 1]))


def test_holdout_infeasible_reports_fraction():
    tri = SparseGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(HoldoutInfeasibleError) as info:
        make_holdout(tri, 0.9, RngStream(0))
    assert info.value.achieved_fraction == pytest.approx(1 / 3)


def test_holdout_fraction_bounds():
    g = random_graph(10, 0.3, 0)
    with pytest.raises(ValueError):
        make_holdout(g, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        make_holdout(g, -0.1, RngStream(0))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(4, 25), p=st.floats(0.05, 0.6), frac=st.floats(0.0, 0.4), seed=st.integers(0, 10_000))
def test_holdout_partitions_all_pairs(n, p, frac, seed):
    g = random_graph(n, p, seed)
    try:
        train, mask = make_holdout(g, frac, RngStream(seed))
    except HoldoutInfeasibleError:
        return
    assert len(mask) == int(np.floor(frac * n * (n - 1) / 2))
    assert mask.n_observed_pairs + len(mask) == n * (n - 1) // 2
    assert train.degrees[g.degrees > 0].min(initial=1) >= 1


def test_mask_is_observed_queries():
    mask = HoldoutMask.from_pairs(5, [(3, 1), (0, 4)], [1, 0])
    assert mask.pairs.tolist() == [[0, 4], [1, 3]]
    assert mask.labels.tolist() == [0, 1]
    assert not mask.is_observed(1, 3) and not mask.is_observed(3, 1)
    assert mask.is_observed(0, 1)
    with pytest.raises(ValueError):
        mask.is_observed(2, 2)


def test_mask_serialization_round_trip(tmp_path):
    g = random_graph(15, 0.3, 9)
    _, mask = make_holdout(g, 0.3, RngStream(2))
    p = tmp_path / "mask.tsv"
    write_mask(mask, p)
    back = load_mask(p, 15)
    assert np.array_equal(back.pairs, mask.pairs) and np.array_equal(back.labels, mask.labels)


# -------------------------------------------------------------- degree stats


def test_degree_stats_examples():
    tri = SparseGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert degree_stats(tri)[0] == 2.0
    assert degree_stats(SparseGraph.from_edges(10, []))[0] == 0.0
    mean, hist = degree_stats(SparseGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
    assert mean == 1.5 and hist == {1: 2, 2: 2}
