import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from derstab.errors import AssumptionError, DimensionError, ParseError, SparsityError
from derstab.netmodel import build_impedance_matrices, parse_feeder, random_tree
from derstab.placement import Placement, build_selectors, parse_placement, random_placement, selector
from derstab.sysbuild import (GainMatrix, build_open_loop, closed_loop, cluster_pattern, colocated_pattern,
                              controllability_matrix, full_pattern, observability_matrix, quadrant_mask,
                              reduce)

from conftest import random_instance, random_gain


def test_selector_basis_and_pinv():
    G = selector([3, 1], 4)
    assert G.shape == (4, 2)
    assert G[2, 0] == 1 and G[0, 1] == 1 and G.sum() == 2
    with pytest.raises(DimensionError):
        selector([5], 4)
    with pytest.raises(DimensionError):
        selector([1, 1], 4)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_kalman_permutation_orders_blocks(n, seed):
    p = random_placement(np.random.default_rng(seed), n)
    sel = build_selectors(p)
    T = sel.T
    assert np.array_equal(T.T @ T, np.eye(2 * n))
    # the first s permuted states are exactly the sensed ones
    first = {int(np.argmax(T[:, k])) + 1 for k in range(p.s)}
    assert first == set(p.S)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_reduced_model_is_minimal(n, seed):
    rng = np.random.default_rng(seed)
    net = random_tree(rng, n)
    p = random_placement(rng, n)
    ss = reduce(build_open_loop(build_impedance_matrices(net), p))
    assert ss.Bbar.shape == (p.s, p.d)
    assert np.array_equal(ss.Cbar, np.eye(p.s))
    assert np.linalg.matrix_rank(controllability_matrix(ss.Abar, ss.Bbar)) == p.s
    assert np.linalg.matrix_rank(observability_matrix(ss.Abar, ss.Cbar)) == p.s
    # observable rank of the full model equals s
    assert np.linalg.matrix_rank(observability_matrix(ss.A, ss.C)) == p.s


def test_assumption_enforced():
    p = Placement(3, (1,), (1, 2))
    net = random_tree(np.random.default_rng(0), 3)
    with pytest.raises(AssumptionError):
        reduce(build_open_loop(build_impedance_matrices(net), p))


def test_open_loop_block_layout(rng):
    net, mats, p, ss = random_instance(rng)
    nd = len(p.D1)
    X = mats.X0[:, [b - 1 for b in p.D1]]
    R = mats.R0[:, [b - 1 for b in p.D1]]
    assert np.allclose(ss.B[: p.n, :nd], X)
    assert np.allclose(ss.B[: p.n, nd:], R)
    assert np.allclose(ss.B[p.n:, :nd], -R / 2)
    assert np.allclose(ss.B[p.n:, nd:], X / 2)


def test_reduced_closed_loop_equals_sensed_block(rng):
    for _ in range(20):
        net, mats, p, ss = random_instance(rng)
        g = random_gain(rng, p)
        cl = closed_loop(ss, g)
        idx = [i - 1 for i in p.S]
        assert np.allclose(cl.Hbar, cl.H[np.ix_(idx, idx)])


def test_gain_sparsity_checked():
    pat = np.array([[True, False], [False, True]])
    with pytest.raises(SparsityError):
        GainMatrix(np.ones((2, 2)), pat)
    with pytest.raises(DimensionError):
        GainMatrix(np.ones((3, 2)), pat)
    g = GainMatrix.from_vector([1.0, 2.0], pat)
    assert np.array_equal(g.f, [1.0, 2.0]) and g.y == 2


def test_fixture_dimensions(data_dir):
    net = parse_feeder((data_dir / "ieee123_synth.feeder").read_text())
    for name in ("chi1", "chi2"):
        p = parse_placement((data_dir / f"{name}.placement").read_text(), net.buses)
        assert (p.d, p.s) == (24, 12)
        assert int(cluster_pattern(p, cross_phase=True).sum()) == 120
        assert int(cluster_pattern(p).sum()) == 48
        assert p.satisfies_assumption()


def test_patterns_and_quadrants():
    p = Placement(3, (1, 2, 3), (2,), tracks={1: 2})
    assert colocated_pattern(p).sum() == 2
    cl = cluster_pattern(p)
    # node 1 tracks 2, node 2 is the sensor, node 3 tracks nothing
    assert cl[0].any() and cl[1].any() and not cl[2].any()
    masks = [quadrant_mask(p, q) for q in ("11", "12", "21", "22")]
    assert np.array_equal(sum(m.astype(int) for m in masks), np.ones((p.d, p.s), dtype=int))
    assert full_pattern(p).all()


@pytest.mark.parametrize("text", [
    "site 9 der=1 sensor=1",
    "site 1 der=2",
    "site 1 der=1\nsite 1 der=1",
    "site 1 der=1 track=2",
    "spot 1",
    "site 1 colour=1",
])
def test_placement_parse_errors(text):
    buses = [(1, "a"), (2, "a")]
    with pytest.raises(ParseError):
        parse_placement(text, buses)


def test_controllable_rank_equals_der_count(rng):
    for _ in range(60):
        net, mats, p, ss = random_instance(rng)
        assert np.linalg.matrix_rank(controllability_matrix(ss.A, ss.B)) == p.d
