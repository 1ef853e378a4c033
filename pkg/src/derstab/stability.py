"""Exact (eigenvalue) and analytic (Gershgorin) stability assessment.

The closed loop is ``e[k+1] = (I - Hbar) e[k]``; it is asymptotically stable
iff every eigenvalue of Hbar lies in the open unit disc centred at 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EigenFailure
from .netmodel import RadialNetwork, build_impedance_matrices, common_node_impedance
from .placement import Placement
from .sysbuild import ClosedLoop, GainMatrix, build_open_loop, closed_loop, reduce

DEFAULT_EPS = 1e-2


@dataclass(frozen=True)
class GershgorinDisc:
    row: int
    center: float
    radius: float


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: tuple
    discs: tuple
    eig_verdict: bool
    disc_verdict: bool
    margin: float
    rho_hat: float
    rho_exact: float
    eps: float

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "discs": [{"row": d.row, "center": d.center, "radius": d.radius} for d in self.discs],
            "eig_verdict": self.eig_verdict,
            "disc_verdict": self.disc_verdict,
            "margin": self.margin,
            "rho_hat": self.rho_hat,
            "rho_exact": self.rho_exact,
            "eps": self.eps,
        }


def _hbar(cl) -> np.ndarray:
    return cl.Hbar if isinstance(cl, ClosedLoop) else np.asarray(cl, dtype=float)


def eigenvalues(cl) -> np.ndarray:
    Hb = _hbar(cl)
    if Hb.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        lam = np.linalg.eigvals(Hb)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from None
    if not np.all(np.isfinite(lam)):
        raise EigenFailure("eigensolver returned non-finite values")
    return lam


def rho_exact(cl) -> float:
    """Spectral radius of I - Hbar, i.e. max |1 - lambda|."""
    lam = eigenvalues(cl)
    return float(np.max(np.abs(1.0 - lam))) if lam.size else 0.0


def assess_eigen(cl) -> bool:
    return rho_exact(cl) < 1.0


def gershgorin(cl) -> list:
    Hb = _hbar(cl)
    absrow = np.abs(Hb).sum(axis=1) - np.abs(np.diag(Hb))
    return [GershgorinDisc(i, float(Hb[i, i]), float(absrow[i])) for i in range(Hb.shape[0])]


def disc_arrays(cl):
    Hb = _hbar(cl)
    centers = np.diag(Hb).astype(float)
    radii = np.abs(Hb).sum(axis=1) - np.abs(centers)
    return centers, radii


def check_region(cl, eps: float = DEFAULT_EPS) -> bool:
    """Disc conditions centers + radii <= 2 - eps and centers - radii >= eps.

    With ``eps == 0`` the open conditions centers + radii < 2, centers - radii > 0
    are applied instead, since a disc touching 0 or 2 certifies nothing.
    """
    centers, radii = disc_arrays(cl)
    if eps == 0:
        return bool(np.all(centers + radii < 2.0) and np.all(centers - radii > 0.0))
    return bool(np.all(centers + radii <= 2.0 - eps) and np.all(centers - radii >= eps))


def stability_margin(cl):
    """(margin, rho_hat): rho_hat is the farthest point of the disc union from 1
    and the margin is 1 - rho_hat."""
    centers, radii = disc_arrays(cl)
    rho_hat = float(np.max(np.abs(centers - 1.0) + radii)) if centers.size else 0.0
    return 1.0 - rho_hat, rho_hat


def report(cl, eps: float = DEFAULT_EPS) -> StabilityReport:
    lam = eigenvalues(cl)
    m, rh = stability_margin(cl)
    rx = float(np.max(np.abs(1.0 - lam))) if lam.size else 0.0
    return StabilityReport(
        eigenvalues=tuple(complex(z) for z in lam),
        discs=tuple(gershgorin(cl)),
        eig_verdict=rx < 1.0,
        disc_verdict=check_region(cl, eps),
        margin=m,
        rho_hat=rh,
        rho_exact=rx,
        eps=eps,
    )


@dataclass(frozen=True)
class DepthPoint:
    scale: float
    z_abs: float
    margin: float
    rho_hat: float


def depth_scan(net: RadialNetwork, placement: Placement, gain: GainMatrix,
               scales: Sequence[float]) -> list:
    """Margin of a fixed-gain single-DSP system as its path impedance grows.

    Every edge between the substation and the sensor node is multiplied by
    each scale in turn; all matrices are rebuilt from scratch per scale.
    """
    nodes = placement.sensor_nodes()
    if len(nodes) != 1:
        raise ValueError("depth_scan expects a single sensor node")
    node = nodes[0]
    path = net.path_edges(node)
    out = []
    for k in scales:
        scaled = net.scaled(path, k)
        mats = build_impedance_matrices(scaled)
        cl = closed_loop(reduce(build_open_loop(mats, placement)), gain)
        m, rh = stability_margin(cl)
        z = common_node_impedance(scaled, mats, node, node,
                                  phase=placement.buses[placement.S1[0] - 1][1])
        out.append(DepthPoint(float(k), abs(z), m, rh))
    return out


@dataclass(frozen=True)
class RelevantImpedance:
    sensor_bus: tuple
    der_bus: tuple
    z: complex


def relevant_impedances(net: RadialNetwork, p: Placement, mats=None) -> list:
    """Sensor-row / DER-column common-node impedances; nothing else enters Hbar."""
    mats = mats or build_impedance_matrices(net)
    out = []
    for i in p.S1:
        for j in p.D1:
            out.append(RelevantImpedance(p.buses[i - 1], p.buses[j - 1],
                                         complex(mats.R0[i - 1, j - 1], mats.X0[i - 1, j - 1])))
    return out


def shared_path_edges(net: RadialNetwork, p: Placement) -> set:
    """Edges lying on the shared upstream path of at least one sensor/DER node pair."""
    out = set()
    for i in p.sensor_nodes():
        pi = set(net.path_edges(i))
        for j in p.der_nodes():
            out |= pi & set(net.path_edges(j))
    return out


def drop_sensor_columns(p: Placement, gain: GainMatrix, node: int):
    """Remove the DSP whose sensor sits at ``node`` while preserving the
    remaining gains.

    Returns the reduced placement and gain; DERs whose rows become empty
    are dropped unless they sit on a remaining sensor bus.
    """
    keep_cols_bus = [b for b in p.S1 if p.buses[b - 1][0] != node]
    ns = len(p.S1)
    col_idx = [p.S1.index(b) for b in keep_cols_bus]
    cols = col_idx + [ns + c for c in col_idx]
    F = gain.F[:, cols]
    pat = gain.pattern[:, cols]
    nd = len(p.D1)
    keep_der = [r for r, b in enumerate(p.D1)
                if pat[r].any() or pat[nd + r].any() or b in keep_cols_bus]
    rows = keep_der + [nd + r for r in keep_der]
    D = tuple(p.D1[r] for r in keep_der)
    newp = Placement(p.n, D, tuple(keep_cols_bus), p.buses,
                     {k: v for k, v in p.tracks.items() if v != node})
    return newp, GainMatrix(F[rows], pat[rows])
