from pathlib import Path

import numpy as np
import pytest

from derstab.netmodel import build_impedance_matrices, random_tree
from derstab.placement import random_placement
from derstab.sysbuild import GainMatrix, build_open_loop, full_pattern, reduce

DATA = Path(__file__).resolve().parents[1] / "src" / "derstab" / "data"


def random_instance(rng, n_max=10, n_min=2):
    """Random single-phase feeder, placement satisfying the sensor-has-DER
    assumption, and its reduced open-loop model."""
    n = int(rng.integers(n_min, n_max + 1))
    net = random_tree(rng, n)
    mats = build_impedance_matrices(net)
    p = random_placement(rng, n)
    ss = reduce(build_open_loop(mats, p))
    return net, mats, p, ss


def random_gain(rng, p, scale=1.0, pattern=None):
    pat = full_pattern(p) if pattern is None else pattern
    return GainMatrix(rng.normal(scale=scale, size=pat.shape) * pat, pat)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA


def reactive_instance(rng, n_max=6, n_min=2, sensors_max=3):
    """Feeder with X/R well above one and DERs exactly at the sensors. Such
    instances usually admit a nonempty stability polytope under colocated
    gains, so they exercise the LP rather than the infeasibility path."""
    from derstab.placement import Placement

    n = int(rng.integers(n_min, n_max + 1))
    net = random_tree(rng, n, r_range=(0.01, 0.05), x_range=(0.1, 0.3))
    k = int(rng.integers(1, min(sensors_max, n) + 1))
    S = tuple(int(v) for v in rng.choice(np.arange(1, n + 1), size=k, replace=False))
    p = Placement(n, S, S)
    ss = reduce(build_open_loop(build_impedance_matrices(net), p))
    return net, p, ss
