import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrcrf.graph import (
    FactorGraph,
    GraphError,
    build_graph,
    build_graph_min,
    build_graph_rand,
    build_graph_top,
    compute_correlation,
    graph_stats,
    load_graph,
    random_tree,
    save_graph,
    validate_graph,
)


def corr3(c01, c02, c12):
    return np.array([[1.0, c01, c02], [c01, 1.0, c12], [c02, c12, 1.0]])


# --- correlation -------------------------------------------------------------------


def test_corr_identical_columns():
    c = compute_correlation(np.array([[1, 1], [0, 0], [1, 1]]))
    assert c[0, 1] == pytest.approx(1.0)


def test_corr_complemented_columns():
    c = compute_correlation(np.array([[1, 0], [0, 1], [1, 0]]))
    assert c[0, 1] == pytest.approx(-1.0)


def test_corr_orthogonal_columns():
    c = compute_correlation(np.array([[1, 1], [1, 0], [0, 1], [0, 0]]))
    assert c[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_corr_constant_column():
    labels = np.array([[1, 0, 1], [1, 1, 0], [1, 0, 0]])
    c = compute_correlation(labels)
    assert c[0, 0] == 1.0
    assert (c[0, 1:] == 0).all() and (c[1:, 0] == 0).all()


@pytest.mark.parametrize("labels", [np.zeros((1, 3)), np.zeros((4, 0))])
def test_corr_dimension_errors(labels):
    with pytest.raises(GraphError):
        compute_correlation(labels)


def test_corr_rejects_non_binary():
    with pytest.raises(ValueError):
        compute_correlation(np.array([[0, 2], [1, 0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_corr_symmetric_and_bounded(m, n, seed):
    labels = np.random.default_rng(seed).integers(0, 2, size=(m, n))
    c = compute_correlation(labels)
    assert np.array_equal(c, c.T)
    assert np.abs(c).max() <= 1 + 1e-12
    assert np.allclose(np.diag(c), 1.0)


# --- min policy ----------------------------------------------------------------------


def test_min_k2_on_three_vars_is_complete():
    g = build_graph_min(corr3(0.3, -0.1, 0.05), 2)
    assert g.pairs == ((0, 1), (0, 2), (1, 2))
    assert g.n_pairwise == 3 and len(g.factors) == 6


def test_min_k1_dedups_selections():
    # rows pick 0->1, 1->0, 2->0
    g = build_graph_min(corr3(0.9, 0.5, 0.1), 1)
    assert g.pairs == ((0, 1), (0, 2))


def test_min_k1_two_vars():
    assert build_graph_min(np.eye(2), 1).pairs == ((0, 1),)


def test_min_ties_prefer_smaller_index():
    g = build_graph_min(np.eye(4), 1)  # all off-diagonal zero
    assert g.pairs == ((0, 1), (0, 2), (0, 3))


@pytest.mark.parametrize("k", [0, 3])
def test_min_k_out_of_range(k):
    with pytest.raises(GraphError):
        build_graph_min(corr3(0.1, 0.2, 0.3), k)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.data())
def test_min_degree_at_least_k(n, data):
    k = data.draw(st.integers(1, n - 1))
    labels = np.random.default_rng(data.draw(st.integers(0, 10**6))).integers(0, 2, size=(30, n))
    g = build_graph_min(compute_correlation(labels), k)
    assert (g.pairwise_degree >= k).all()
    validate_graph(g)


# --- rand / top ---------------------------------------------------------------------------


def test_rand_forced_pair():
    assert build_graph_rand(2, 1, seed=123).pairs == ((0, 1),)


def test_rand_exhausts_all_pairs():
    g = build_graph_rand(10, 45, seed=5)
    assert g.n_pairwise == 45


def test_rand_deterministic():
    a = build_graph_rand(50, 100, seed=7)
    b = build_graph_rand(50, 100, seed=7)
    assert a.to_json() == b.to_json()
    assert a.n_pairwise == 100


def test_rand_too_many_pairs():
    with pytest.raises(GraphError):
        build_graph_rand(4, 7, seed=0)


def test_top_forced_by_ordering():
    assert build_graph_top(corr3(0.9, 0.5, 0.1), 2).pairs == ((0, 1), (0, 2))


def test_top_complete_graph():
    assert build_graph_top(np.eye(5), 10).n_pairwise == 10


def test_top_uses_absolute_value():
    c = np.eye(4)
    c[0, 1] = c[1, 0] = 0.8
    c[2, 3] = c[3, 2] = -0.8
    g = build_graph_top(c, 2)
    mag = np.abs(c)[np.triu_indices(4, 1)]
    brute = sorted(sorted(zip(*np.triu_indices(4, 1)), key=lambda ij: -np.abs(c)[ij])[:2])
    assert g.pairs == ((0, 1), (2, 3)) == tuple(tuple(map(int, p)) for p in brute)
    assert (mag >= 0).all()


def test_top_zero_pairs_is_unary_only():
    g = build_graph_top(np.eye(3), 0)
    assert g.n_pairwise == 0 and graph_stats(g).disconnected


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.data())
def test_rand_and_top_exact_counts(n, data):
    total = n * (n - 1) // 2
    k = data.draw(st.integers(0, total))
    seed = data.draw(st.integers(0, 1000))
    corr = compute_correlation(np.random.default_rng(seed).integers(0, 2, size=(20, n)))
    for g in (build_graph_rand(n, k, seed), build_graph_top(corr, k)):
        assert g.n_pairwise == k
        validate_graph(g)


def test_build_graph_dispatch():
    labels = np.random.default_rng(0).integers(0, 2, size=(40, 6))
    assert build_graph("min", 2, labels=labels) == build_graph_min(compute_correlation(labels), 2)
    assert build_graph("rand", 4, labels=labels, seed=1) == build_graph_rand(6, 4, 1)
    with pytest.raises(GraphError):
        build_graph("best", 2, labels=labels)


# --- structure ------------------------------------------------------------------


def test_factor_ids_and_edges():
    g = FactorGraph(3, ((0, 1), (1, 2)))
    assert [f.kind for f in g.factors] == ["unary"] * 3 + ["pairwise"] * 2
    assert g.factors[4].scope == (1, 2)
    assert g.n_edges == 3 + 2 * 2
    assert g.variables[1].factor_neighbors == (1, 3, 4)


@pytest.mark.parametrize("pairs", [((1, 0),), ((0, 1), (0, 1)), ((0, 0),), ((0, 3),), ((1, 2), (0, 1))])
def test_graph_rejects_bad_pairs(pairs):
    with pytest.raises(GraphError):
        FactorGraph(3, pairs)


def test_from_pairs_canonicalises():
    assert FactorGraph.from_pairs(3, [(2, 1), (1, 0)]).pairs == ((0, 1), (1, 2))


def test_stats_examples():
    assert graph_stats(FactorGraph(3, ((0, 1), (0, 2), (1, 2)))).diameter == 1
    s = graph_stats(FactorGraph(4, ((0, 1), (1, 2), (2, 3))))
    assert s.diameter == 3 and not s.disconnected
    assert (s.min_degree, s.max_degree) == (1, 2)
    bare = graph_stats(FactorGraph(3, ()))
    assert bare.n_pairwise == 0 and bare.n_unary == 3 and bare.disconnected


def test_random_tree_is_tree():
    for seed in range(10):
        g = random_tree(9, seed)
        assert g.n_pairwise == 8 and not graph_stats(g).disconnected


# --- serialisation -----------------------------------------------------------------


def test_json_round_trip(tmp_path):
    g = FactorGraph(4, ((0, 2), (1, 3)), ("a", "b", "c", "d"))
    path = tmp_path / "g.json"
    save_graph(g, path)
    text = path.read_text()
    assert json.loads(text) == {"n_vars": 4, "names": ["a", "b", "c", "d"], "pairs": [[0, 2], [1, 3]]}
    assert load_graph(path) == g
    assert load_graph(path).to_json() == text


def test_json_rejects_unknown_keys():
    with pytest.raises(GraphError):
        FactorGraph.from_dict({"n_vars": 2, "names": ["a", "b"], "pairs": [], "weights": []})


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.integers(0, 10**6))
def test_builders_byte_identical(n, seed):
    labels = np.random.default_rng(seed).integers(0, 2, size=(25, n))
    corr = compute_correlation(labels)
    assert build_graph_min(corr, 1).to_json() == build_graph_min(corr.copy(), 1).to_json()
    assert build_graph_top(corr, n - 1).sha256() == build_graph_top(corr.copy(), n - 1).sha256()
