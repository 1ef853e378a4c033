"""Backward/forward sweep AC power flow for radial feeders.

Loads are constant-power. Each bus carries a complex voltage in per unit;
phase b and c sit at -120 and +120 degrees nominally, and reported angles
are measured relative to those nominal offsets.
"""

from __future__ import annotations

import numpy as np

from .errors import PowerFlowDiverged
from .netmodel import PHASES, RadialNetwork

NOMINAL = {"a": 0.0, "b": -2 * np.pi / 3, "c": 2 * np.pi / 3}


class SweepSolver:
    """Precomputed topology for repeated sweeps on one feeder.

    ``solve(p, q)`` takes real/reactive bus injections (generation positive)
    ordered like ``net.buses`` and returns squared magnitudes and angles.
    """

    def __init__(self, net: RadialNetwork, tol: float = 1e-8, max_iter: int = 200):
        self.net, self.tol, self.max_iter = net, tol, max_iter
        buses = net.buses
        nodes = list(net.nodes[1:])
        self.n_nodes = len(nodes)
        # edge k feeds node k+1; P[a, k] = 1 if that edge lies on the path of node a+1
        P = np.zeros((self.n_nodes, self.n_nodes))
        for k in nodes:
            for e in net.path_edges(k):
                child = _child_of(net, e)
                P[k - 1, child - 1] = 1.0
        self.P = P
        Z = np.zeros((self.n_nodes, 3, 3), dtype=complex)
        for k in nodes:
            Z[k - 1] = net.edge_block(net._edge_of[k])
        self.Z = Z
        self.node_of = np.array([k - 1 for k, _ in buses])
        self.phase_of = np.array([PHASES.index(ph) for _, ph in buses])
        self.theta = np.array([NOMINAL[ph] for _, ph in buses])
        V0 = np.sqrt(net.v0)
        self.src = V0 * np.exp(1j * (net.delta0 + np.array([NOMINAL[ph] for ph in PHASES])))
        self.iterations = 0

    def _flat(self):
        V = np.zeros((self.n_nodes, 3), dtype=complex)
        V[:] = self.src
        return V

    def solve(self, p, q, V_init=None):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        S = np.zeros((self.n_nodes, 3), dtype=complex)
        S[self.node_of, self.phase_of] = p + 1j * q
        present = np.zeros((self.n_nodes, 3), dtype=bool)
        present[self.node_of, self.phase_of] = True
        V = self._flat() if V_init is None else V_init.copy()
        for it in range(1, self.max_iter + 1):
            # injected current at each bus; line currents sum everything downstream
            I_inj = np.where(present, np.conj(S / np.where(present, V, 1.0)), 0.0)
            I_line = -(self.P.T @ I_inj)
            drop = np.einsum("kij,kj->ki", self.Z, I_line)
            V_new = self.src[None, :] - self.P @ drop
            V_new = np.where(present, V_new, self.src[None, :])
            err = np.max(np.abs(V_new - V)) if V.size else 0.0
            V = V_new
            if not np.all(np.isfinite(V)):
                break
            if err < self.tol:
                self.iterations = it
                self.last_V = V
                Vb = V[self.node_of, self.phase_of]
                delta = np.angle(Vb * np.exp(-1j * self.theta))
                return np.abs(Vb) ** 2, delta
        raise PowerFlowDiverged(f"sweep did not converge in {self.max_iter} iterations")


def _child_of(net: RadialNetwork, edge_idx: int) -> int:
    e = net.edges[edge_idx]
    return e.dst if net.parent(e.dst) == e.src else e.src


def sweep(net: RadialNetwork, p, q, tol: float = 1e-8, max_iter: int = 200):
    """One-shot convenience wrapper around :class:`SweepSolver`."""
    return SweepSolver(net, tol, max_iter).solve(p, q)
