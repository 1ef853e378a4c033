import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from derstab.errors import ParseError, TopologyError
from derstab.netmodel import (Edge, RadialNetwork, build_impedance_matrices, chain, common_node_impedance,
                              format_feeder, parse_feeder, random_tree)


def brute_force_shared(net, i, j):
    """Oracle: intersect the two root paths as edge sets and sum them."""
    shared = set(net.path_edges(i)) & set(net.path_edges(j))
    r = sum(net.edges[e].r for e in shared)
    x = sum(net.edges[e].x for e in shared)
    return 2 * r, 2 * x


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_impedance_matches_path_enumeration(n, seed):
    net = random_tree(np.random.default_rng(seed), n)
    mats = build_impedance_matrices(net)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            r, x = brute_force_shared(net, i, j)
            assert mats.R0[i - 1, j - 1] == pytest.approx(r, abs=1e-12)
            assert mats.X0[i - 1, j - 1] == pytest.approx(x, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_impedance_structure(n, seed):
    mats = build_impedance_matrices(random_tree(np.random.default_rng(seed), n))
    for M in (mats.R0, mats.X0):
        assert np.array_equal(M, M.T)
        assert np.all(M >= 0)
        # an entry never exceeds either diagonal: shared path is a prefix of both
        d = np.diag(M)
        assert np.all(M <= np.minimum.outer(d, d) + 1e-15)
        assert np.all(np.linalg.eigvalsh(M) > -1e-12)


def test_chain_closed_form():
    net = chain([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
    mats = build_impedance_matrices(net)
    cum_r = np.cumsum([0.1, 0.2, 0.3])
    expect = 2 * np.minimum.outer(cum_r, cum_r)
    assert np.allclose(mats.R0, expect)
    assert common_node_impedance(net, mats, 2, 3) == pytest.approx(complex(0.6, 1.8))


def test_parse_roundtrip():
    text = "phases 3\nnode 2 phases=ab\nnode 3 phases=b\nedge 0 1 0.1 0.2\nedge 1 2 0.1 0.1\nedge 2 3 0.2 0.2\n"
    net = parse_feeder(text)
    assert net.buses == ((1, "a"), (1, "b"), (1, "c"), (2, "a"), (2, "b"), (3, "b"))
    again = parse_feeder(format_feeder(net))
    assert again.buses == net.buses
    assert np.array_equal(build_impedance_matrices(again).R0, build_impedance_matrices(net).R0)


def test_three_phase_decoupled_blocks():
    net = parse_feeder("phases 3\nedge 0 1 0.1 0.2\nedge 1 2 0.1 0.2\n")
    mats = build_impedance_matrices(net)
    a1, b2 = mats.bus_index(1, "a"), mats.bus_index(2, "b")
    assert mats.R0[a1, b2] == 0.0
    block = common_node_impedance(net, mats, 1, 2)
    assert np.allclose(block, np.eye(3) * complex(0.2, 0.4))


def test_mutual_block_coupling():
    z = " ".join(["0.1+0.2j", "0.01+0.02j", "0.01+0.02j"] * 3)
    net = parse_feeder(f"phases 3\nedge 0 1 0.1 0.2 {z}\n")
    mats = build_impedance_matrices(net)
    assert mats.X0[mats.bus_index(1, "a"), mats.bus_index(1, "b")] == pytest.approx(0.04)


@pytest.mark.parametrize("text, err", [
    ("edge 0 1 0.1 0.1\nedge 1 0 0.1 0.1\n", TopologyError),
    ("edge 0 1 0.1 0.1\nedge 2 3 0.1 0.1\nedge 3 2 0.1 0.1\n", TopologyError),
    ("edge 0 2 0.1 0.1\n", TopologyError),
    ("edge 0 1 -0.1 0.1\n", ParseError),
    ("edge 0 1 0 0\n", ParseError),
    ("wire 0 1\n", ParseError),
    ("edge 0 1 abc 0.1\n", ParseError),
    ("phases 3\nnode 1 phases=a\nnode 2 phases=b\nedge 0 1 0.1 0.1\nedge 1 2 0.1 0.1\n", TopologyError),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_feeder(text)


def test_edge_outside_shared_path_not_used():
    net = chain([0.1, 0.1], [0.1, 0.1])
    bigger = RadialNetwork(net.nodes, (net.edges[0], Edge(1, 2, 5.0, 5.0)))
    assert build_impedance_matrices(bigger).R0[0, 0] == build_impedance_matrices(net).R0[0, 0]


def test_fixture_common_node_impedances(data_dir):
    net = parse_feeder((data_dir / "ieee123_synth.feeder").read_text())
    mats = build_impedance_matrices(net)
    assert net.n == 123 and net.phase_count == 3
    z = lambda i, j: abs(common_node_impedance(net, mats, i, j, phase="a"))
    assert z(57, 57) < z(49, 49)
    assert z(49, 76) < z(57, 76)
