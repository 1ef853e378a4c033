"""Regenerate the bundled synthetic 123-node feeder and sitings.

The layout loosely follows the IEEE 123-node test feeder: a three-phase
trunk, a long three-phase lateral, and many single- and two-phase laterals.
Impedances are per unit and decoupled across phases. Node labels 49, 57,
76 and 87 are reserved for the sites used by the bundled scenarios.

Run from the repository root: ``python3 tools/make_fixtures.py``.
"""

from __future__ import annotations

from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "derstab" / "data"

TRUNK = (0.0075, 0.015)     # three-phase overhead
LATERAL = (0.012, 0.012)    # single/two-phase laterals


class Builder:
    def __init__(self):
        self.phases = {0: "abc"}
        self.edges = []      # (parent, child, r, x), temporary ids
        self.next = 1

    def line(self, parent, count, phases, z=TRUNK):
        out = []
        for _ in range(count):
            k = self.next
            self.next += 1
            self.phases[k] = phases
            self.edges.append((parent, k, *z))
            out.append(k)
            parent = k
        return out


def build():
    b = Builder()
    trunk = b.line(0, 32, "abc")
    t = lambda i: trunk[i - 1]          # 1-based position along the trunk
    lat49 = b.line(t(8), 20, "abc")
    l = lambda i: lat49[i - 1]
    key = {57: t(15), 76: t(27), 49: l(16)}

    # DER laterals hanging off each sensor site
    near57_2 = b.line(t(15), 4, "abc")
    near57_1 = b.line(t(15), 4, "b", LATERAL)
    near76_2 = b.line(t(27), 4, "b", LATERAL)
    near76_1 = b.line(t(27), 3, "a", LATERAL)
    near49_2 = b.line(l(16), 4, "abc")
    near49_1 = b.line(l(16), 3, "c", LATERAL)
    key[87] = near76_2[1]

    # filler laterals
    b.line(t(6), 10, "abc")
    for pos, ph, cnt in [(2, "a", 6), (5, "c", 5), (10, "b", 6), (12, "a", 5), (20, "c", 6), (23, "b", 5)]:
        b.line(t(pos), cnt, ph, LATERAL)
    b.line(l(5), 3, "b", LATERAL)
    b.line(l(10), 3, "a", LATERAL)

    # relabel: reserved labels for key sites, creation order for the rest
    n = b.next - 1
    label = {0: 0}
    for lab, tmp in key.items():
        label[tmp] = lab
    free = iter(i for i in range(1, n + 1) if i not in key)
    for tmp in range(1, n + 1):
        if tmp not in label:
            label[tmp] = next(free)

    sites = {
        "chi1": [(key[57], 1, 1, None), (key[76], 1, 1, None),
                 (near57_2[1], 1, 0, 57), (near57_1[1], 1, 0, 57),
                 (near76_2[1], 1, 0, 76), (near76_1[1], 1, 0, 76)],
        "chi2": [(key[49], 1, 1, None), (key[76], 1, 1, None),
                 (near49_2[1], 1, 0, 49), (near49_1[1], 1, 0, 49),
                 (near76_2[1], 1, 0, 76), (near76_1[1], 1, 0, 76)],
    }
    return b, label, sites, n


def main():
    b, label, sites, n = build()
    lines = ["# synthetic 123-node radial feeder, per-unit, decoupled phases", "phases 3", "v0 1.0", "delta0 0.0"]
    for k in range(1, n + 1):
        tmp = next(t for t, lab in label.items() if lab == k)
        ph = b.phases[tmp]
        lines.append(f"node {k}" + ("" if ph == "abc" else f" phases={ph}"))
    for src, dst, r, x in b.edges:
        lines.append(f"edge {label[src]} {label[dst]} {r} {x}")
    (DATA / "ieee123_synth.feeder").write_text("\n".join(lines) + "\n")

    for name, rows in sites.items():
        out = [f"# siting {name}: two three-phase DER-sensor pairs with DER clusters"]
        for tmp, der, sen, track in sorted(rows, key=lambda r: label[r[0]]):
            s = f"site {label[tmp]} der={der} sensor={sen}"
            if track is not None:
                s += f" track={track}"
            out.append(s)
        (DATA / f"{name}.placement").write_text("\n".join(out) + "\n")
    print(f"wrote feeder with {n} load nodes")


if __name__ == "__main__":
    main()
