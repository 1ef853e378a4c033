"""Open-loop state space, its minimal realization, and the closed loop.

State ordering is ``e = [e_v; e_delta]`` over all buses and input ordering
is ``u = [u_q; u_p]`` over DER buses, so

    B = [[ X,    R  ],
         [-R/2,  X/2]]    with R = R0 T^d, X = X0 T^d.

Gain rows follow the input ordering and gain columns the reduced state
ordering ``[v-errors at sensors; angle-errors at sensors]``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import AssumptionError, DimensionError, SparsityError
from .netmodel import ImpedanceMatrices
from .placement import Placement, build_selectors


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    placement: Placement
    mats: ImpedanceMatrices
    Abar: Optional[np.ndarray] = None
    Bbar: Optional[np.ndarray] = None
    Cbar: Optional[np.ndarray] = None

    @property
    def R(self) -> np.ndarray:
        return self.mats.R0[:, [i - 1 for i in self.placement.D1]]

    @property
    def X(self) -> np.ndarray:
        return self.mats.X0[:, [i - 1 for i in self.placement.D1]]

    @property
    def reduced(self) -> bool:
        return self.Bbar is not None


def build_open_loop(mats: ImpedanceMatrices, p: Placement) -> StateSpace:
    if mats.n != p.n:
        raise DimensionError(f"placement has {p.n} buses, impedance matrices {mats.n}")
    sel = build_selectors(p)
    R = mats.R0 @ sel.Td
    X = mats.X0 @ sel.Td
    B = np.block([[X, R], [-0.5 * R, 0.5 * X]])
    return StateSpace(np.eye(2 * p.n), B, sel.Ts, p, mats)


def reduce(ss: StateSpace) -> StateSpace:
    """Observable (and, under the sensor-has-DER assumption, minimal) part."""
    p = ss.placement
    if not p.satisfies_assumption():
        raise AssumptionError("reduction requires every sensor bus to host a DER")
    sel = build_selectors(p)
    # T is a permutation, so its inverse is its transpose
    Bbar = sel.G.T @ sel.T.T @ ss.B
    Cbar = ss.C @ sel.T @ sel.G
    return replace(ss, Abar=np.eye(p.s), Bbar=Bbar, Cbar=Cbar)


@dataclass(frozen=True)
class GainMatrix:
    """Operating parameters F (d x s) confined to a boolean ``pattern``."""

    F: np.ndarray
    pattern: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        pat = np.asarray(self.pattern, dtype=bool)
        if F.shape != pat.shape:
            raise DimensionError(f"gain shape {F.shape} != pattern shape {pat.shape}")
        if np.any(F[~pat] != 0):
            raise SparsityError("gain has nonzero entries outside the communication pattern")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "pattern", pat)

    @property
    def y(self) -> int:
        return int(self.pattern.sum())

    @property
    def positions(self) -> list:
        """Permitted (row, col) positions in row-major packing order."""
        return [tuple(rc) for rc in np.argwhere(self.pattern)]

    @property
    def f(self) -> np.ndarray:
        return self.F[self.pattern]

    @classmethod
    def from_vector(cls, f, pattern) -> "GainMatrix":
        pat = np.asarray(pattern, dtype=bool)
        f = np.asarray(f, dtype=float)
        if f.shape != (pat.sum(),):
            raise DimensionError(f"expected {pat.sum()} parameters, got {f.shape}")
        F = np.zeros(pat.shape)
        F[pat] = f
        return cls(F, pat)

    @classmethod
    def zeros(cls, pattern) -> "GainMatrix":
        pat = np.asarray(pattern, dtype=bool)
        return cls(np.zeros(pat.shape), pat)


@dataclass(frozen=True)
class ClosedLoop:
    H: np.ndarray
    Hbar: np.ndarray
    Fbar: np.ndarray


def closed_loop(ss: StateSpace, gain: GainMatrix) -> ClosedLoop:
    if not ss.reduced:
        ss = reduce(ss)
    d, s = ss.B.shape[1], ss.C.shape[0]
    if gain.F.shape != (d, s):
        raise DimensionError(f"gain must be {d}x{s}, got {gain.F.shape}")
    H = ss.B @ gain.F @ ss.C
    Fbar = gain.F @ ss.Cbar
    return ClosedLoop(H, ss.Bbar @ Fbar, Fbar)


# communication patterns ----------------------------------------------------

def full_pattern(p: Placement) -> np.ndarray:
    """Every DER sees every sensor quantity."""
    return np.ones((p.d, p.s), dtype=bool)


def colocated_pattern(p: Placement) -> np.ndarray:
    """Each sensor bus drives the DER on the same bus: q from v, p from angle."""
    pat = np.zeros((p.d, p.s), dtype=bool)
    nd, ns = len(p.D1), len(p.S1)
    for col, b in enumerate(p.S1):
        row = p.D1.index(b)
        pat[row, col] = True
        pat[nd + row, ns + col] = True
    return pat


def cluster_pattern(p: Placement, cross_phase: bool = False) -> np.ndarray:
    """Each DER bus sees the v and angle errors of the sensor its node tracks.

    Only same-phase sensor buses are visible unless ``cross_phase``, in
    which case a DER bus sees every sensor phase its own node carries (a
    three-phase DER sees all three, a single-phase DER only its own).
    DER nodes that track nothing get no entries.
    """
    pat = np.zeros((p.d, p.s), dtype=bool)
    nd, ns = len(p.D1), len(p.S1)
    for row, b in enumerate(p.D1):
        node, ph = p.buses[b - 1]
        target = p.tracked_sensor(node)
        dphases = {p.buses[x - 1][1] for x in p.D1 if p.buses[x - 1][0] == node}
        if target is None:
            continue
        for col, sb in enumerate(p.S1):
            snode, sph = p.buses[sb - 1]
            if snode == target and (sph == ph or (cross_phase and sph in dphases)):
                for r in (row, nd + row):
                    pat[r, col] = True
                    pat[r, ns + col] = True
    return pat


def quadrant_mask(p: Placement, which: str) -> np.ndarray:
    """Boolean mask of one gain quadrant.

    ``"11"``: reactive-power rows x voltage-magnitude columns,
    ``"12"``: reactive x angle, ``"21"``: real x magnitude, ``"22"``: real x angle.
    """
    nd, ns = len(p.D1), len(p.S1)
    mask = np.zeros((p.d, p.s), dtype=bool)
    rows = slice(0, nd) if which[0] == "1" else slice(nd, 2 * nd)
    cols = slice(0, ns) if which[1] == "1" else slice(ns, 2 * ns)
    mask[rows, cols] = True
    return mask


def same_phase_mask(p: Placement) -> np.ndarray:
    nd, ns = len(p.D1), len(p.S1)
    dph = [p.buses[b - 1][1] for b in p.D1] * 2
    sph = [p.buses[b - 1][1] for b in p.S1] * 2
    return np.array([[dph[r] == sph[c] for c in range(2 * ns)] for r in range(2 * nd)],
                    dtype=bool).reshape(p.d, p.s)


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks, Ak = [], np.eye(n)
    for _ in range(n):
        blocks.append(Ak @ B)
        Ak = Ak @ A
    return np.hstack(blocks)


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    return controllability_matrix(A.T, C.T).T
