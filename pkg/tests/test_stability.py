import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from derstab.netmodel import chain, random_tree
from derstab.placement import Placement
from derstab import stability as stab
from derstab.sysbuild import GainMatrix, closed_loop, colocated_pattern, build_open_loop, reduce
from derstab.netmodel import build_impedance_matrices

from conftest import random_instance, random_gain


def two_by_two_eigs(M):
    """Closed-form eigenvalues of a 2x2 matrix."""
    tr, det = np.trace(M), np.linalg.det(M)
    disc = np.sqrt(complex(tr * tr / 4 - det))
    return np.array([tr / 2 + disc, tr / 2 - disc])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_eigenvalues_match_closed_form(vals):
    M = np.array(vals).reshape(2, 2)
    got = np.sort_complex(stab.eigenvalues(M))
    want = np.sort_complex(two_by_two_eigs(M))
    assert np.allclose(got, want, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_discs_enclose_spectrum(s, seed):
    M = np.random.default_rng(seed).normal(size=(s, s))
    centers, radii = stab.disc_arrays(M)
    for lam in stab.eigenvalues(M):
        assert np.any(np.abs(lam - centers) <= radii + 1e-9)


def test_single_bus_scalar_loop():
    # one DER and sensor on one bus; Hbar = [[X f_q, ...]] via colocated gains
    net = chain([0.1], [0.2])
    p = Placement(1, (1,), (1,))
    ss = reduce(build_open_loop(build_impedance_matrices(net), p))
    g = GainMatrix(np.diag([1.0 / 0.4, 0.0]), colocated_pattern(p))
    rep = stab.report(closed_loop(ss, g))
    # Hbar = [[0.4*2.5, 0], [-0.1*2.5, 0]]: a dead-beat magnitude mode and an
    # uncontrolled angle mode sitting on the boundary
    assert np.allclose(np.sort(np.real(rep.eigenvalues)), [0.0, 1.0])
    assert rep.rho_exact == pytest.approx(1.0)
    assert not rep.eig_verdict


def test_check_region_eps_semantics():
    H = np.array([[1.0, 0.5], [0.2, 1.5]])
    centers, radii = stab.disc_arrays(H)
    assert stab.check_region(H, 0.0)
    assert stab.check_region(H, 0.2)
    assert not stab.check_region(H, 0.4)     # 1.5 + 0.2 > 2 - 0.4
    touching = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert not stab.check_region(touching, 0.0)


def test_margin_and_rho_hat():
    H = np.array([[0.5, 0.1], [0.2, 1.2]])
    m, rh = stab.stability_margin(H)
    assert rh == pytest.approx(max(0.5 + 0.1, 0.2 + 0.2))
    assert m == pytest.approx(1 - rh)
    assert stab.rho_exact(H) <= rh + 1e-12


def test_disc_pass_implies_eig_stable(rng):
    hits = 0
    for _ in range(300):
        net, mats, p, ss = random_instance(rng, n_max=6)
        g = random_gain(rng, p, scale=rng.uniform(0.1, 4))
        cl = closed_loop(ss, g)
        if stab.check_region(cl, 0.0):
            hits += 1
            assert stab.assess_eigen(cl)
    assert hits > 0


def test_depth_scan_rebuilds_and_decreases():
    net = chain([0.05] * 4, [0.1] * 4)
    p = Placement(4, (4,), (4,))
    ss = reduce(build_open_loop(build_impedance_matrices(net), p))
    g = GainMatrix(np.diag([1.0, 1.0]), colocated_pattern(p))
    pts = stab.depth_scan(net, p, g, [0.5, 1, 2, 4, 8, 16])
    z = [pt.z_abs for pt in pts]
    assert all(b > a for a, b in zip(z, z[1:]))
    assert pts[-1].margin < pts[0].margin


def test_relevant_impedances_cover_sensor_der_pairs(rng):
    net, mats, p, ss = random_instance(rng)
    rel = stab.relevant_impedances(net, p, mats)
    assert len(rel) == len(p.S1) * len(p.D1)


def test_full_state_bounded_when_reduced_loop_stable(rng):
    """Unobservable coordinates only integrate the decaying sensed error, so
    the full state settles whenever the reduced loop is stable."""
    seen = 0
    for _ in range(200):
        net, mats, p, ss = random_instance(rng, n_max=6)
        g = random_gain(rng, p, scale=rng.uniform(0.05, 2))
        cl = closed_loop(ss, g)
        if not stab.assess_eigen(cl) or stab.rho_exact(cl) > 0.95:
            continue
        seen += 1
        x = rng.normal(size=2 * p.n)
        M = np.eye(2 * p.n) - cl.H
        norms = []
        for _ in range(600):
            x = M @ x
            norms.append(np.linalg.norm(x))
        assert np.isfinite(norms[-1]) and max(norms) < 1e6
        assert abs(norms[-1] - norms[-2]) <= 1e-8 * (1 + norms[-1])
    assert seen > 10
