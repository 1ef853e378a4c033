import numpy as np
import pytest

from derstab.errors import PowerFlowDiverged
from derstab.netmodel import build_impedance_matrices, chain, parse_feeder, random_tree
from derstab.powerflow import SweepSolver, sweep


def linear(net, p, q):
    m = build_impedance_matrices(net)
    return net.v0 + m.R0 @ p + m.X0 @ q, net.delta0 - 0.5 * m.R0 @ q + 0.5 * m.X0 @ p


def test_no_load_is_flat():
    net = chain([0.1, 0.1], [0.2, 0.2])
    v, d = sweep(net, np.zeros(2), np.zeros(2))
    assert np.allclose(v, 1.0) and np.allclose(d, 0.0)


def test_two_bus_closed_form():
    # V1 = V0 - Z * conj(S / V1); check the power balance at the solution
    net = chain([0.05], [0.1])
    S = -0.3 - 0.1j
    solver = SweepSolver(net, tol=1e-12)
    v, d = solver.solve([S.real], [S.imag])
    V1 = np.sqrt(v[0]) * np.exp(1j * d[0])
    assert V1 * np.conj((1.0 - V1) / complex(0.05, 0.1)) == pytest.approx(-S, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_sweep_close_to_lindistflow_for_small_injections(seed):
    rng = np.random.default_rng(seed)
    net = random_tree(rng, 8, r_range=(0.005, 0.02), x_range=(0.005, 0.03))
    p = rng.uniform(-0.02, 0.02, 8)
    q = rng.uniform(-0.02, 0.02, 8)
    v_s, d_s = sweep(net, p, q)
    v_l, d_l = linear(net, p, q)
    assert np.max(np.abs(np.sqrt(v_s) - np.sqrt(v_l))) < 0.005
    # angle signs follow the same convention in both models
    assert np.max(np.abs(d_s - d_l)) < 0.1 * np.max(np.abs(d_l)) + 1e-6


def test_three_phase_nominal_offsets_removed():
    net = parse_feeder("phases 3\nnode 2 phases=b\nedge 0 1 0.01 0.02\nedge 1 2 0.01 0.02\n")
    v, d = sweep(net, np.zeros(4), np.zeros(4))
    assert np.allclose(d, 0.0, atol=1e-12) and np.allclose(v, 1.0)


def test_divergence_raises():
    net = chain([0.5], [1.0])
    with pytest.raises(PowerFlowDiverged):
        sweep(net, [-5.0], [-5.0], max_iter=50)
