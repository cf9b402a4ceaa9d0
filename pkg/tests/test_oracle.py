import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrcrf.graph import FactorGraph, build_graph_rand
from attrcrf.inference import TableSet
from attrcrf.oracle import (
    MAX_ENUM_VARS,
    OracleError,
    assignments,
    exact_marginals,
    finite_diff,
    gibbs_sample,
    joint_table,
)


def test_assignment_bit_order():
    bits = assignments(3)
    assert bits[1].tolist() == [1, 0, 0]
    assert bits[6].tolist() == [0, 1, 1]


def test_unary_only():
    g = FactorGraph(1, ())
    assert exact_marginals(g, TableSet([[1.0, 3.0]], np.zeros((0, 4))))[0] == pytest.approx(0.75)


def test_two_variable_hand_enumeration():
    g = FactorGraph(2, ((0, 1),))
    tables = TableSet([[1.0, 2.0], [1.0, 1.0]], [[2.0, 1.0, 1.0, 2.0]])
    joint = joint_table(g, tables)
    # masses for (x0, x1) = (0,0), (1,0), (0,1), (1,1)
    assert joint.masses.tolist() == [2.0, 2.0, 1.0, 4.0]
    assert joint.partition == 9.0
    assert exact_marginals(g, tables)[0] == pytest.approx(2 / 3, abs=1e-15)


def test_uniform_tables():
    g = build_graph_rand(5, 6, seed=0)
    assert np.allclose(exact_marginals(g, TableSet(np.ones((5, 2)), np.ones((6, 4)))), 0.5)


def test_guards():
    with pytest.raises(OracleError):
        exact_marginals(FactorGraph(MAX_ENUM_VARS + 1, ()), TableSet(np.ones((21, 2)), np.zeros((0, 4))))
    with pytest.raises(OracleError):
        joint_table(FactorGraph(2, ((0, 1),)), TableSet(np.ones((2, 2)), [[1.0, 0.0, 1.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10**6))
def test_partition_and_complement(n, seed):
    rng = np.random.default_rng(seed)
    g = build_graph_rand(n, int(rng.integers(0, n * (n - 1) // 2 + 1)), seed)
    tables = TableSet(rng.uniform(0.1, 3, (n, 2)), rng.uniform(0.1, 3, (g.n_pairwise, 4)))
    joint = joint_table(g, tables)
    assert joint.partition == pytest.approx(math.fsum(joint.masses), rel=1e-15)
    bits = assignments(n).astype(bool)
    for k in range(n):
        on = math.fsum(joint.masses[bits[:, k]]) / joint.partition
        off = math.fsum(joint.masses[~bits[:, k]]) / joint.partition
        assert on + off == pytest.approx(1.0, abs=1e-12)


# --- finite differences ----------------------------------------------------------------


def test_fd_quadratic():
    assert finite_diff(lambda t: float(t[0] ** 2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-8)


def test_fd_constant():
    assert not finite_diff(lambda t: 1.5, np.zeros((2, 3))).any()


@pytest.mark.parametrize("step", [1e-8, 1e-2])
def test_fd_step_range(step):
    with pytest.raises(OracleError):
        finite_diff(lambda t: 0.0, np.zeros(1), step)


def test_fd_non_finite():
    with pytest.raises(OracleError), np.errstate(invalid="ignore"):
        finite_diff(lambda t: float(np.log(t[0])), np.array([0.0]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(-3, 3))
def test_fd_exact_on_quadratics(xs, a):
    x = np.array(xs)
    grad = finite_diff(lambda t: float(a * (t ** 2).sum() + t.sum()), x)
    assert np.allclose(grad, 2 * a * x + 1, atol=1e-6)


# --- Gibbs -----------------------------------------------------------------------------


def test_gibbs_independent_coins():
    g = FactorGraph(3, ())
    samples = gibbs_sample(g, TableSet(np.ones((3, 2)), np.zeros((0, 4))), 100_000, burn_in=5, seed=0)
    assert np.all(np.abs(samples.mean(axis=0) - 0.5) < 0.01)


def test_gibbs_attractive_pair_correlation():
    g = FactorGraph(2, ((0, 1),))
    samples = gibbs_sample(g, TableSet(np.ones((2, 2)), [[10.0, 1.0, 1.0, 10.0]]), 20_000, burn_in=50, seed=1)
    corr = np.corrcoef(samples.T)[0, 1]
    assert corr == pytest.approx(18 / 22, abs=0.05)


def test_gibbs_deterministic():
    g = build_graph_rand(5, 4, seed=0)
    tables = TableSet(np.random.default_rng(0).uniform(0.5, 2, (5, 2)), np.full((4, 4), 1.3))
    a = gibbs_sample(g, tables, 500, burn_in=10, seed=9)
    b = gibbs_sample(g, tables, 500, burn_in=10, seed=9)
    assert np.array_equal(a, b)


def test_gibbs_matches_exact_marginals():
    rng = np.random.default_rng(3)
    g = build_graph_rand(6, 7, seed=3)
    tables = TableSet(rng.uniform(0.5, 2, (6, 2)), rng.uniform(0.5, 2, (7, 4)))
    samples = gibbs_sample(g, tables, 100_000, burn_in=50, seed=4, thin=2)
    assert np.abs(samples.mean(axis=0) - exact_marginals(g, tables)).max() < 0.01


def test_gibbs_from_joint_table_agrees():
    rng = np.random.default_rng(5)
    g = build_graph_rand(4, 4, seed=5)
    tables = TableSet(rng.uniform(0.5, 2, (4, 2)), rng.uniform(0.5, 2, (4, 4)))
    samples = gibbs_sample(joint=joint_table(g, tables), n_samples=50_000, burn_in=50, seed=6)
    assert np.abs(samples.mean(axis=0) - exact_marginals(g, tables)).max() < 0.015


def test_gibbs_rejects_zero_mass():
    g = FactorGraph(2, ((0, 1),))
    with pytest.raises(OracleError):
        gibbs_sample(g, TableSet(np.ones((2, 2)), [[1.0, 0.0, 1.0, 1.0]]), 10)
    with pytest.raises(OracleError):
        gibbs_sample(n_samples=10)
