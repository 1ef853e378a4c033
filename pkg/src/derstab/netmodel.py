"""Radial feeder model and LinDistFlow impedance matrices.

A feeder is a tree rooted at the substation (node 0). Every other node
carries a set of present phases; single-phase feeders use phase ``a`` only.
The linear model is indexed by *buses*, i.e. (node, phase) pairs ordered by
node id and then phase, so a single-phase feeder with n nodes has n buses.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, TopologyError

PHASES = "abc"


@dataclass(frozen=True)
class Edge:
    """Line segment ``src -> dst``. ``z_block`` is an optional 3x3 complex
    series impedance; without it the scalar r + jx is replicated on the
    block diagonal."""

    src: int
    dst: int
    r: float
    x: float
    z_block: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass(frozen=True)
class RadialNetwork:
    nodes: tuple
    edges: tuple
    v0: float = 1.0
    delta0: float = 0.0
    phase_count: int = 1
    node_phases: dict = field(default_factory=dict)

    def __post_init__(self):
        n_nodes = len(self.nodes)
        if tuple(self.nodes) != tuple(range(n_nodes)):
            raise TopologyError("node ids must be contiguous 0..n")
        if self.phase_count not in (1, 3):
            raise ParseError(f"phase_count must be 1 or 3, got {self.phase_count}")
        for e in self.edges:
            for k in (e.src, e.dst):
                if not 0 <= k < n_nodes:
                    raise TopologyError(f"edge ({e.src},{e.dst}) references unknown node {k}")
            if e.r < 0 or e.x < 0:
                raise ParseError(f"edge ({e.src},{e.dst}) has negative impedance")
            if e.z_block is None and e.r == 0 and e.x == 0:
                raise ParseError(f"edge ({e.src},{e.dst}) has zero impedance")

        parent, edge_of, order = _orient(n_nodes, self.edges)
        object.__setattr__(self, "_parent", parent)
        object.__setattr__(self, "_edge_of", edge_of)
        object.__setattr__(self, "_order", order)

        default = PHASES if self.phase_count == 3 else "a"
        phases = {0: default}
        for k in range(1, n_nodes):
            ph = self.node_phases.get(k, default)
            if self.phase_count == 1 and ph != "a":
                raise ParseError("single-phase feeders only carry phase 'a'")
            phases[k] = "".join(sorted(set(ph)))
        for k in order[1:]:
            if not set(phases[k]) <= set(phases[parent[k]]):
                raise TopologyError(
                    f"node {k} has phases {phases[k]!r} absent upstream at node {parent[k]}")
        object.__setattr__(self, "_phases", phases)

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    def parent(self, k: int) -> int:
        return self._parent[k]

    def phases(self, k: int) -> str:
        return self._phases[k]

    def edge_to(self, k: int) -> Edge:
        """The edge whose downstream end is node ``k``."""
        return self.edges[self._edge_of[k]]

    @property
    def order(self) -> tuple:
        """Nodes in breadth-first order from the root."""
        return self._order

    def path_edges(self, k: int) -> list:
        """Edge indices on the unique path from node 0 to ``k``, root first."""
        out = []
        while k != 0:
            out.append(self._edge_of[k])
            k = self._parent[k]
        return out[::-1]

    def ancestors(self, k: int) -> list:
        """Nodes from the root down to ``k`` inclusive."""
        out = [k]
        while k != 0:
            k = self._parent[k]
            out.append(k)
        return out[::-1]

    def lca(self, i: int, j: int) -> int:
        a, b = self.ancestors(i), self.ancestors(j)
        common = 0
        for u, w in zip(a, b):
            if u != w:
                break
            common = u
        return common

    def depth_rank(self) -> dict:
        return {k: len(self.ancestors(k)) - 1 for k in self.nodes}

    @property
    def buses(self) -> tuple:
        return tuple((k, ph) for k in self.nodes[1:] for ph in self._phases[k])

    def edge_block(self, idx: int) -> np.ndarray:
        """3x3 complex series impedance of edge ``idx`` restricted to the
        phases of its downstream node (zeros elsewhere)."""
        e = self.edges[idx]
        child = e.dst if self._parent.get(e.dst) == e.src else e.src
        mask = np.array([ph in self._phases[child] for ph in PHASES])
        if e.z_block is not None:
            z = np.array(e.z_block, dtype=complex)
        else:
            z = np.eye(3) * complex(e.r, e.x)
        return z * np.outer(mask, mask)

    def scaled(self, edge_indices, factor: float) -> "RadialNetwork":
        """Copy with the impedance of the given edges multiplied by ``factor``."""
        chosen = set(edge_indices)
        edges = []
        for i, e in enumerate(self.edges):
            if i in chosen:
                zb = None if e.z_block is None else np.asarray(e.z_block) * factor
                e = Edge(e.src, e.dst, e.r * factor, e.x * factor, zb)
            edges.append(e)
        return RadialNetwork(self.nodes, tuple(edges), self.v0, self.delta0,
                             self.phase_count, dict(self.node_phases))


def _orient(n_nodes, edges):
    adj = {k: [] for k in range(n_nodes)}
    seen_pairs = set()
    # union-find catches cycles independently of traversal order
    root = list(range(n_nodes))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for idx, e in enumerate(edges):
        if e.src == e.dst:
            raise TopologyError(f"self-loop at node {e.src}")
        if (e.src, e.dst) in seen_pairs:
            raise ParseError(f"duplicate edge ({e.src},{e.dst})")
        seen_pairs.add((e.src, e.dst))
        a, b = find(e.src), find(e.dst)
        if a == b:
            raise TopologyError(f"edge ({e.src},{e.dst}) closes a cycle")
        root[a] = b
        adj[e.src].append((e.dst, idx))
        adj[e.dst].append((e.src, idx))

    parent, edge_of = {0: None}, {}
    order = [0]
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w, idx in adj[u]:
            if w not in parent:
                parent[w] = u
                edge_of[w] = idx
                order.append(w)
                queue.append(w)
    if len(order) != n_nodes:
        missing = sorted(set(range(n_nodes)) - set(order))
        raise TopologyError(f"nodes unreachable from the substation: {missing}")
    return parent, edge_of, tuple(order)


def parse_feeder(text: str) -> RadialNetwork:
    """Parse the line-oriented feeder format.

    Recognised statements::

        phases 3
        v0 1.0
        delta0 0.0
        node <id> [phases=<abc subset>]
        edge <from> <to> <r_pu> <x_pu> [9 complex entries, row-major]

    Block entries use Python complex syntax (``0.1+0.2j``).
    """
    v0, delta0, phase_count = 1.0, 0.0, 1
    declared, node_phases, edges = set(), {}, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0].lower()
        try:
            if kind == "phases":
                phase_count = int(tok[1])
            elif kind == "v0":
                v0 = float(tok[1])
            elif kind == "delta0":
                delta0 = float(tok[1])
            elif kind == "node":
                k = int(tok[1])
                declared.add(k)
                for opt in tok[2:]:
                    key, _, val = opt.partition("=")
                    if key != "phases" or not val or set(val) - set(PHASES):
                        raise ParseError(f"bad node option {opt!r}", lineno)
                    node_phases[k] = val
            elif kind == "edge":
                if len(tok) not in (5, 14):
                    raise ParseError("edge needs 4 numbers plus optional 9 block entries", lineno)
                src, dst = int(tok[1]), int(tok[2])
                r, x = float(tok[3]), float(tok[4])
                block = None
                if len(tok) == 14:
                    block = np.array([complex(t) for t in tok[5:]]).reshape(3, 3)
                edges.append(Edge(src, dst, r, x, block))
            else:
                raise ParseError(f"unknown statement {kind!r}", lineno)
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno) from None

    ids = declared | {e.src for e in edges} | {e.dst for e in edges} | {0}
    n_nodes = max(ids) + 1
    if ids != set(range(n_nodes)):
        raise TopologyError(f"node ids are not contiguous: missing {sorted(set(range(n_nodes)) - ids)}")
    if len(edges) != n_nodes - 1:
        # let orientation name the actual defect (cycle / unreachable)
        RadialNetwork(tuple(range(n_nodes)), tuple(edges), v0, delta0, phase_count, node_phases)
        raise TopologyError(f"a tree on {n_nodes} nodes needs {n_nodes - 1} edges, got {len(edges)}")
    return RadialNetwork(tuple(range(n_nodes)), tuple(edges), v0, delta0, phase_count, node_phases)


def load_feeder(path) -> RadialNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_feeder(fh.read())


def format_feeder(net: RadialNetwork) -> str:
    """Inverse of :func:`parse_feeder` (round-trips every field)."""
    lines = []
    if net.phase_count != 1:
        lines.append(f"phases {net.phase_count}")
    lines.append(f"v0 {net.v0!r}")
    lines.append(f"delta0 {net.delta0!r}")
    default = PHASES if net.phase_count == 3 else "a"
    for k in net.nodes[1:]:
        ph = net.phases(k)
        lines.append(f"node {k}" + (f" phases={ph}" if ph != default else ""))
    for e in net.edges:
        s = f"edge {e.src} {e.dst} {e.r!r} {e.x!r}"
        if e.z_block is not None:
            s += " " + " ".join(repr(complex(z)).strip("()") for z in np.ravel(e.z_block))
        lines.append(s)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ImpedanceMatrices:
    """R0 and X0 indexed by bus; ``buses[b]`` is the (node, phase) of row b."""

    R0: np.ndarray
    X0: np.ndarray
    buses: tuple

    @property
    def n(self) -> int:
        return len(self.buses)

    def bus_index(self, node: int, phase: str = "a") -> int:
        return self.buses.index((node, phase))

    def node_buses(self, node: int) -> list:
        return [b for b, (k, _) in enumerate(self.buses) if k == node]


def build_impedance_matrices(net: RadialNetwork) -> ImpedanceMatrices:
    """R0_ij = 2 * sum of r over the shared upstream path of buses i and j.

    The shared path of two nodes is the path to their lowest common
    ancestor, so each entry is twice a root-to-LCA prefix sum. Edges off
    that path never enter the arithmetic for the entry.
    """
    cum = {0: np.zeros((3, 3), dtype=complex)}
    for k in net.order[1:]:
        cum[k] = cum[net.parent(k)] + net.edge_block(net._edge_of[k])

    buses = net.buses
    n_nodes = len(net.nodes)
    lca = np.zeros((n_nodes, n_nodes), dtype=int)
    for i in range(n_nodes):
        for j in range(i, n_nodes):
            lca[i, j] = lca[j, i] = net.lca(i, j)
    stack = np.stack([cum[k] for k in range(n_nodes)])
    nodes = np.array([k for k, _ in buses], dtype=int)
    pidx = np.array([PHASES.index(ph) for _, ph in buses], dtype=int)
    Z = 2.0 * stack[lca[np.ix_(nodes, nodes)], pidx[:, None], pidx[None, :]]
    return ImpedanceMatrices(Z.real.copy(), Z.imag.copy(), buses)


def common_node_impedance(net: RadialNetwork, mats: ImpedanceMatrices, i: int, j: int,
                          phase: Optional[str] = None):
    """Common-node impedance between nodes ``i`` and ``j``.

    Returns a complex scalar on single-phase feeders (or when ``phase`` is
    given) and the 3x3 complex block over phases abc otherwise.
    """
    for k in (i, j):
        if not 1 <= k <= net.n:
            raise IndexError(f"node {k} outside 1..{net.n}")
    if net.phase_count == 1 or phase is not None:
        ph = phase or "a"
        a, b = mats.bus_index(i, ph), mats.bus_index(j, ph)
        return complex(mats.R0[a, b], mats.X0[a, b])
    block = np.zeros((3, 3), dtype=complex)
    for pa in net.phases(i):
        for pb in net.phases(j):
            a, b = mats.bus_index(i, pa), mats.bus_index(j, pb)
            block[PHASES.index(pa), PHASES.index(pb)] = complex(mats.R0[a, b], mats.X0[a, b])
    return block


def chain(r: Sequence[float], x: Sequence[float], v0: float = 1.0) -> RadialNetwork:
    """Convenience constructor for the path graph 0-1-...-n."""
    edges = tuple(Edge(k, k + 1, float(rk), float(xk)) for k, (rk, xk) in enumerate(zip(r, x)))
    return RadialNetwork(tuple(range(len(edges) + 1)), edges, v0=v0)


def random_tree(rng: np.random.Generator, n: int, r_range=(0.01, 0.2), x_range=(0.01, 0.3)) -> RadialNetwork:
    """Random recursive tree on nodes 0..n with uniform impedances."""
    edges = []
    for k in range(1, n + 1):
        p = int(rng.integers(0, k))
        edges.append(Edge(p, k, float(rng.uniform(*r_range)), float(rng.uniform(*x_range))))
    return RadialNetwork(tuple(range(n + 1)), tuple(edges))
