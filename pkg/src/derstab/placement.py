"""DER/sensor siting, the index sets built from it, and selector matrices.

Index sets follow the 1-based convention of the model: buses are numbered
1..n, the magnitude block of the state occupies 1..n and the angle block
n+1..2n. Selector matrices are returned as dense numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import AssumptionError, DimensionError, ParseError


@dataclass(frozen=True)
class SelectorMatrix:
    """Columns are the standard basis vectors e_w (1-based) of R^c."""

    indices: tuple
    c: int

    def __post_init__(self):
        idx = tuple(int(w) for w in self.indices)
        if any(w < 1 or w > self.c for w in idx):
            raise DimensionError(f"selector index outside 1..{self.c}: {idx}")
        if len(set(idx)) != len(idx):
            raise DimensionError("selector indices must be distinct")
        object.__setattr__(self, "indices", idx)

    @property
    def shape(self):
        return (self.c, len(self.indices))

    def toarray(self) -> np.ndarray:
        M = np.zeros(self.shape)
        for col, w in enumerate(self.indices):
            M[w - 1, col] = 1.0
        return M

    def __array__(self, dtype=None, copy=None):
        M = self.toarray()
        return M if dtype is None else M.astype(dtype)

    def pinv(self) -> np.ndarray:
        # orthonormal columns: the Moore-Penrose inverse is the transpose
        return self.toarray().T


def selector(omega: Sequence[int], c: int) -> np.ndarray:
    """Gamma_c(omega) as a c x |omega| array."""
    return SelectorMatrix(tuple(omega), c).toarray()


@dataclass(frozen=True)
class Placement:
    """Siting of DERs and sensors over the buses of a feeder.

    ``der_buses`` / ``sensor_buses`` hold 1-based bus indices. ``buses``
    labels each bus with its (node, phase); ``tracks`` maps a DER node to
    the sensor node whose voltage it regulates (used to build cluster
    communication patterns).
    """

    n: int
    der_buses: tuple
    sensor_buses: tuple
    buses: tuple = ()
    tracks: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("der_buses", "sensor_buses"):
            vals = tuple(sorted(set(int(v) for v in getattr(self, name))))
            if any(v < 1 or v > self.n for v in vals):
                raise DimensionError(f"{name} outside 1..{self.n}")
            object.__setattr__(self, name, vals)
        if not self.buses:
            object.__setattr__(self, "buses", tuple((k, "a") for k in range(1, self.n + 1)))
        if len(self.buses) != self.n:
            raise DimensionError("bus labels do not match n")

    @classmethod
    def from_sites(cls, sites: dict, buses: Sequence, tracks: Optional[dict] = None) -> "Placement":
        """Build from node-level triplets ``{node: (has_der, has_sensor)}``.

        A DER or sensor at a node covers every phase present there.
        """
        D, S = [], []
        for b, (node, _) in enumerate(buses, start=1):
            der, sen = sites.get(node, (0, 0))
            if der:
                D.append(b)
            if sen:
                S.append(b)
        return cls(len(buses), tuple(D), tuple(S), tuple(buses), dict(tracks or {}))

    # index sets -----------------------------------------------------------
    @property
    def D1(self) -> tuple:
        return self.der_buses

    @property
    def S1(self) -> tuple:
        return self.sensor_buses

    @property
    def D2(self) -> tuple:
        return tuple(i + self.n for i in self.D1)

    @property
    def S2(self) -> tuple:
        return tuple(i + self.n for i in self.S1)

    @property
    def D(self) -> tuple:
        return self.D1 + self.D2

    @property
    def S(self) -> tuple:
        return self.S1 + self.S2

    @property
    def Dbar(self) -> tuple:
        ds = set(self.D)
        return tuple(i for i in range(1, 2 * self.n + 1) if i not in ds)

    @property
    def Sbar(self) -> tuple:
        ss = set(self.S)
        return tuple(i for i in range(1, 2 * self.n + 1) if i not in ss)

    @property
    def d(self) -> int:
        return 2 * len(self.D1)

    @property
    def s(self) -> int:
        return 2 * len(self.S1)

    def satisfies_assumption(self) -> bool:
        """Every sensor bus also hosts a DER."""
        return set(self.S1) <= set(self.D1)

    def der_nodes(self) -> list:
        return sorted({self.buses[b - 1][0] for b in self.D1})

    def sensor_nodes(self) -> list:
        return sorted({self.buses[b - 1][0] for b in self.S1})

    def tracked_sensor(self, der_node: int) -> Optional[int]:
        if der_node in self.tracks:
            return self.tracks[der_node]
        if der_node in self.sensor_nodes():
            return der_node
        return None

    def without_sensor(self, node: int) -> "Placement":
        """Drop the sensor at ``node`` (all its phases), keeping every DER."""
        S = tuple(b for b in self.S1 if self.buses[b - 1][0] != node)
        if len(S) == len(self.S1):
            raise ValueError(f"no sensor at node {node}")
        tracks = {k: v for k, v in self.tracks.items() if v != node}
        return Placement(self.n, self.D1, S, self.buses, tracks)


class Selectors(NamedTuple):
    Td: np.ndarray
    Ts: np.ndarray
    T: np.ndarray
    G: np.ndarray


def build_selectors(p: Placement, require_assumption: bool = False) -> Selectors:
    """T^d, T^s, the Kalman permutation T and the observable-part selector G."""
    if require_assumption and not p.satisfies_assumption():
        raise AssumptionError("sensor buses without a DER: "
                              f"{sorted(set(p.S1) - set(p.D1))}")
    n2 = 2 * p.n
    S, D = set(p.S), set(p.D)
    every = range(1, n2 + 1)
    blocks = (
        [i for i in every if i in S and i in D],
        [i for i in every if i in S and i not in D],
        [i for i in every if i not in S and i in D],
        [i for i in every if i not in S and i not in D],
    )
    T = selector([i for blk in blocks for i in blk], n2)
    Td = selector(p.D1, p.n)
    Ts = selector(p.S, n2).T
    G = selector(range(1, p.s + 1), n2)
    return Selectors(Td, Ts, T, G)


def parse_placement(text: str, buses: Sequence) -> Placement:
    """Parse ``site <node> der=<0|1> sensor=<0|1> [track=<node>]`` lines."""
    nodes = {k for k, _ in buses}
    sites, tracks = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] != "site" or len(tok) < 2:
            raise ParseError(f"expected 'site <node> ...', got {line!r}", lineno)
        try:
            node = int(tok[1])
        except ValueError:
            raise ParseError(f"bad node id {tok[1]!r}", lineno) from None
        if node not in nodes:
            raise ParseError(f"node {node} is not a load node of the feeder", lineno)
        if node in sites:
            raise ParseError(f"node {node} listed twice", lineno)
        opts = {"der": "0", "sensor": "0"}
        for t in tok[2:]:
            key, sep, val = t.partition("=")
            if not sep or key not in ("der", "sensor", "track"):
                raise ParseError(f"bad option {t!r}", lineno)
            opts[key] = val
        if opts["der"] not in ("0", "1") or opts["sensor"] not in ("0", "1"):
            raise ParseError("der/sensor flags must be 0 or 1", lineno)
        sites[node] = (int(opts["der"]), int(opts["sensor"]))
        if "track" in opts:
            tracks[node] = int(opts["track"])
    for der, sen in tracks.items():
        if sites.get(sen, (0, 0))[1] != 1:
            raise ParseError(f"DER at node {der} tracks node {sen}, which has no sensor")
    return Placement.from_sites(sites, buses, tracks)


def load_placement(path, buses) -> Placement:
    with open(path, encoding="utf-8") as fh:
        return parse_placement(fh.read(), buses)


def format_placement(p: Placement) -> str:
    der, sen = set(p.der_nodes()), set(p.sensor_nodes())
    lines = []
    for node in sorted(der | sen):
        s = f"site {node} der={int(node in der)} sensor={int(node in sen)}"
        if node in p.tracks:
            s += f" track={p.tracks[node]}"
        lines.append(s)
    return "\n".join(lines) + "\n"


def random_placement(rng: np.random.Generator, n: int, assumption: bool = True,
                     min_sensors: int = 1) -> Placement:
    """Random bus-level placement on a single-phase feeder with n buses."""
    while True:
        D = [i for i in range(1, n + 1) if rng.random() < 0.5]
        if assumption:
            S = [i for i in D if rng.random() < 0.6]
        else:
            S = [i for i in range(1, n + 1) if rng.random() < 0.4]
        if len(S) >= min_sensors and D:
            return Placement(n, tuple(D), tuple(S))
