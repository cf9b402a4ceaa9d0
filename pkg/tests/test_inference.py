import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrcrf.graph import FactorGraph, build_graph_rand, graph_stats, random_tree
from attrcrf.inference import (
    InferenceConfig,
    InferenceError,
    MessageState,
    TableSet,
    backward_sum_product,
    init_messages,
    read_marginals,
    read_marginals_csv,
    run_sum_product,
    step_factor_to_variable,
    step_variable_to_factor,
    write_marginals_csv,
)
from attrcrf.oracle import exact_marginals, finite_diff

TWO_VAR = FactorGraph(2, ((0, 1),))
TWO_VAR_TABLES = TableSet(np.array([[1.0, 2.0], [1.0, 1.0]]), np.array([[2.0, 1.0, 1.0, 2.0]]))


def rand_tables(graph, rng, batch=()):
    return TableSet(rng.uniform(0.1, 3.0, batch + (graph.n_vars, 2)),
                    rng.uniform(0.1, 3.0, batch + (graph.n_pairwise, 4)))


def marginals(graph, tables, t=2, sharing="shared"):
    return run_sum_product(graph, tables, InferenceConfig(iterations=t, sharing=sharing))[0]


# --- message steps -------------------------------------------------------------------


def test_init_messages():
    g = FactorGraph(4, ((0, 1), (2, 3)))
    s = init_messages(g)
    assert s.f2v.shape == (8, 2) and (s.f2v == 1).all() and (s.v2f == 0.5).all()
    assert init_messages(FactorGraph(3, ())).v2f.shape == (3, 2)


def test_unary_f2v_copies_table():
    g = FactorGraph(1, ())
    s = step_factor_to_variable(g, TableSet([[1.0, 3.0]], np.zeros((0, 4))), init_messages(g))
    assert np.array_equal(s.f2v, [[1.0, 3.0]])


def test_pairwise_f2v_hand_example():
    g = FactorGraph(2, ((0, 1),))
    s = step_factor_to_variable(g, TableSet(np.ones((2, 2)), [[2.0, 1.0, 1.0, 2.0]]), init_messages(g))
    assert np.allclose(s.f2v[2:], [[1.5, 1.5], [1.5, 1.5]])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_constant_pairwise_f2v(c, a, b):
    g = FactorGraph(2, ((0, 1),))
    state = MessageState(np.ones((4, 2)), np.array([[0.5, 0.5], [0.5, 0.5], [a, 1 - a], [b, 1 - b]]))
    s = step_factor_to_variable(g, TableSet(np.ones((2, 2)), [[c] * 4]), state)
    assert np.allclose(s.f2v[2:], c)


def test_v2f_empty_product_is_uniform():
    g = FactorGraph(1, ())
    s = step_variable_to_factor(g, MessageState(np.array([[1.0, 3.0]]), np.full((1, 2), 0.5)))
    assert np.array_equal(s.v2f, [[0.5, 0.5]])


def test_v2f_single_message_normalised():
    g = FactorGraph(2, ((0, 1),))
    f2v = np.array([[1.0, 3.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    s = step_variable_to_factor(g, MessageState(f2v, np.full((4, 2), 0.5)))
    assert np.allclose(s.v2f[2], [0.25, 0.75])
    assert np.allclose(s.v2f[0], [0.5, 0.5])


def test_v2f_floor_on_zero_messages():
    g = FactorGraph(2, ((0, 1),))
    f2v = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    s = step_variable_to_factor(g, MessageState(f2v, np.full((4, 2), 0.5)))
    assert np.array_equal(s.v2f[2], [0.5, 0.5])


def test_read_marginals_unary_only():
    g = FactorGraph(1, ())
    assert read_marginals(g, MessageState(np.array([[1.0, 3.0]]), np.full((1, 2), 0.5)))[0] == pytest.approx(0.75)


# --- full runs ---------------------------------------------------------------------------


def test_two_variable_example():
    p = marginals(TWO_VAR, TWO_VAR_TABLES, t=2)
    assert p[0] == pytest.approx(2 / 3, abs=1e-12)
    assert np.allclose(p, exact_marginals(TWO_VAR, TWO_VAR_TABLES), atol=1e-12)


@pytest.mark.parametrize("t", [1, 5])
def test_unary_only_any_depth(t):
    g = FactorGraph(3, ())
    tables = TableSet([[1.0, 3.0], [2.0, 2.0], [4.0, 1.0]], np.zeros((0, 4)))
    assert np.allclose(marginals(g, tables, t=t), [0.75, 0.5, 0.2])


def test_uniform_tables_give_half():
    g = build_graph_rand(6, 8, seed=0)
    assert np.allclose(marginals(g, TableSet(np.ones((6, 2)), np.ones((8, 4))), t=3), 0.5)


@pytest.mark.parametrize("seed", range(10))
def test_tree_exact_one_round_past_diameter(seed):
    rng = np.random.default_rng(seed)
    g = random_tree(int(rng.integers(2, 11)), seed)
    tables = rand_tables(g, rng)
    d = graph_stats(g).diameter
    exact = exact_marginals(g, tables)
    assert np.abs(marginals(g, tables, t=d + 1) - exact).max() < 1e-9
    assert np.abs(marginals(g, tables, t=d + 4) - exact).max() < 1e-9


def test_tree_fixed_point_messages():
    rng = np.random.default_rng(4)
    g = random_tree(8, 4)
    tables = rand_tables(g, rng)
    d = graph_stats(g).diameter
    cfg = lambda t: InferenceConfig(iterations=t)  # noqa: E731
    _, a = run_sum_product(g, tables, cfg(d + 1))
    _, b = run_sum_product(g, tables, cfg(d + 2))
    assert np.abs(a.rounds[-1].v2f - b.rounds[-1].v2f).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10**6), st.integers(1, 5), st.floats(0.05, 20))
def test_uniform_pairwise_invariance(n, seed, t, c):
    rng = np.random.default_rng(seed)
    g = build_graph_rand(n, int(rng.integers(0, n * (n - 1) // 2 + 1)), seed)
    unary = rng.uniform(0.1, 3.0, (n, 2))
    with_pairs = marginals(g, TableSet(unary, np.full((g.n_pairwise, 4), c)), t=t)
    assert np.abs(with_pairs - unary[:, 1] / unary.sum(1)).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10**6), st.integers(1, 4))
def test_marginals_normalised_and_in_range(n, seed, t):
    rng = np.random.default_rng(seed)
    g = build_graph_rand(n, int(rng.integers(0, n * (n - 1) // 2 + 1)), seed)
    cfg = InferenceConfig(iterations=t)
    p, tape = run_sum_product(g, rand_tables(g, rng, (3,)), cfg)
    assert ((p >= 0) & (p <= 1)).all()
    assert np.allclose(tape.marginal.sum(-1), 1.0, atol=1e-12)
    assert all((r.v2f > 0).all() and not r.v2f_floored.any() for r in tape.rounds)


def test_independent_copies_match_shared():
    rng = np.random.default_rng(1)
    g = build_graph_rand(7, 10, seed=1)
    tables = rand_tables(g, rng, (4,))
    shared = marginals(g, tables, t=3)
    indep = marginals(g, [tables] * 3, t=3, sharing="independent")
    assert np.array_equal(shared, indep)


def test_table_count_mismatch():
    g = build_graph_rand(4, 3, seed=0)
    tables = rand_tables(g, np.random.default_rng(0))
    with pytest.raises(InferenceError):
        run_sum_product(g, [tables, tables], InferenceConfig(iterations=3, sharing="independent"))
    with pytest.raises(InferenceError):
        run_sum_product(g, [tables, tables], InferenceConfig(iterations=2))


def test_table_shape_mismatch():
    g = build_graph_rand(4, 3, seed=0)
    with pytest.raises(InferenceError):
        run_sum_product(g, TableSet(np.ones((4, 2)), np.ones((2, 4))), InferenceConfig())


@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(epsilon=0.0), dict(epsilon=1e-2), dict(sharing="tied")])
def test_config_validation(kwargs):
    with pytest.raises(InferenceError):
        InferenceConfig(**kwargs)


def test_batched_matches_single():
    rng = np.random.default_rng(2)
    g = build_graph_rand(6, 7, seed=2)
    tables = rand_tables(g, rng, (5,))
    batched = marginals(g, tables)
    for i in range(5):
        single = marginals(g, TableSet(tables.unary[i], tables.pairwise[i]))
        assert np.allclose(batched[i], single, atol=1e-15)


def test_positive_rescaling_of_v2f_irrelevant():
    rng = np.random.default_rng(5)
    g = build_graph_rand(5, 6, seed=5)
    tables = rand_tables(g, rng)
    state = MessageState(np.ones((g.n_edges, 2)), rng.uniform(0.1, 1.0, (g.n_edges, 2)))
    scaled = MessageState(state.f2v, state.v2f * rng.uniform(0.5, 5.0, (g.n_edges, 1)))
    a = read_marginals(g, step_factor_to_variable(g, tables, state))
    b = read_marginals(g, step_factor_to_variable(g, tables, scaled))
    assert np.allclose(a, b, atol=1e-14)


# --- backward ---------------------------------------------------------------------------


def test_backward_zero_upstream():
    g = build_graph_rand(5, 6, seed=0)
    _, tape = run_sum_product(g, rand_tables(g, np.random.default_rng(0)), InferenceConfig())
    (grad,) = backward_sum_product(tape, np.zeros(5))
    assert not grad.unary.any() and not grad.pairwise.any()


def test_backward_unary_closed_form():
    g = FactorGraph(1, ())
    phi = np.array([[1.5, 0.5]])
    _, tape = run_sum_product(g, TableSet(phi, np.zeros((0, 4))), InferenceConfig())
    (grad,) = backward_sum_product(tape, np.ones(1))
    assert grad.unary[0, 1] == pytest.approx(phi[0, 0] / phi.sum() ** 2)


def test_backward_shape_mismatch():
    g = build_graph_rand(4, 2, seed=0)
    _, tape = run_sum_product(g, rand_tables(g, np.random.default_rng(0)), InferenceConfig())
    with pytest.raises(InferenceError):
        backward_sum_product(tape, np.ones(5))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("sharing", ["shared", "independent"])
def test_backward_matches_finite_differences(seed, sharing):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    g = build_graph_rand(n, int(rng.integers(1, n * (n - 1) // 2 + 1)), seed)
    t = int(rng.integers(1, 5))
    cfg = InferenceConfig(iterations=t, sharing=sharing)
    sets = [rand_tables(g, rng) for _ in range(cfg.n_table_sets)]
    w = rng.normal(size=n)
    _, tape = run_sum_product(g, sets, cfg)
    grads = backward_sum_product(tape, w)
    for k in range(len(sets)):
        for attr in ("unary", "pairwise"):
            def loss(x, k=k, attr=attr):
                probe = [TableSet(s.unary, s.pairwise) for s in sets]
                setattr(probe[k], attr, x)
                return float(run_sum_product(g, probe, cfg)[0] @ w)
            numeric = finite_diff(loss, getattr(sets[k], attr))
            analytic = getattr(grads[k], attr)
            err = np.abs(analytic - numeric)
            assert np.all((err <= 1e-8) | (err <= 1e-5 * np.maximum(np.abs(analytic), np.abs(numeric))))


def test_floored_path_has_zero_gradient():
    g = FactorGraph(2, ((0, 1),))
    tables = TableSet(np.array([[1.0, 1.0], [1e-13, 1e-13]]), np.ones((1, 4)))
    p, tape = run_sum_product(g, tables, InferenceConfig(iterations=1))
    assert tape.rounds[0].v2f_floored.any()
    (grad,) = backward_sum_product(tape, np.array([1.0, 0.0]))
    assert grad.unary[1].tolist() == [0.0, 0.0]


def test_marginals_csv_round_trip(tmp_path):
    p = np.random.default_rng(0).uniform(size=(4, 3))
    path = tmp_path / "p.csv"
    write_marginals_csv(path, p)
    back = read_marginals_csv(path)
    assert np.allclose(back, p, rtol=1e-8, atol=0)
    write_marginals_csv(tmp_path / "q.csv", back)
    assert (tmp_path / "q.csv").read_text() == path.read_text()
