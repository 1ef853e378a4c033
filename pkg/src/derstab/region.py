"""Stability polytope over the packed gain vector and its Chebyshev ball.

Every entry of Hbar = Bbar F is linear in the packed parameters f, so each
disc condition

    phi_i(f) + sum_g |l_g(f)| <= 2 - eps,      -phi_i(f) + sum_g |l_g(f)| <= -eps

expands into 2^(#groups) linear rows per condition, one per sign pattern of
the off-diagonal forms l_g. Identically-zero forms are pruned first.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateError, ExplosionError, InfeasibleError, NumericalError, UnboundedError
from .lp import linprog
from .sysbuild import GainMatrix, StateSpace, reduce

log = logging.getLogger(__name__)

MAX_ROWS = 10**6
DIRECT_LP_ROWS = 4000
TIE_SHRINK = 1e-9


@dataclass(frozen=True)
class ParameterPolytope:
    """Rows ``A @ f <= b``. ``disc_row[k]`` is the Hbar row a constraint came
    from, ``kind[k]`` is 0 for the upper-edge and 1 for the lower-edge
    condition and ``signs[k]`` the sign pattern as a bitmask over
    ``groups[disc_row[k]]`` (bit set = negative sign)."""

    A: np.ndarray
    b: np.ndarray
    pattern: np.ndarray
    eps: float
    disc_row: np.ndarray
    kind: np.ndarray
    signs: np.ndarray
    groups: tuple
    forms: np.ndarray = field(repr=False)   # (s, s, y): Hbar_ij = forms[i, j] @ f
    pruned: int = 0

    @property
    def y(self) -> int:
        return self.A.shape[1]

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    def hbar(self, f) -> np.ndarray:
        return self.forms @ np.asarray(f, dtype=float)

    def discs(self, f):
        """Disc centers and radii evaluated through the linear forms."""
        Hb = self.hbar(f)
        centers = np.diag(Hb).copy()
        radii = np.abs(Hb).sum(axis=1) - np.abs(centers)
        return centers, radii

    def contains(self, f, tol: float = 0.0) -> bool:
        return bool(np.all(self.A @ np.asarray(f, dtype=float) <= self.b + tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"a{k + 1}" for k in range(self.y)] + ["b"])
            for a, bk in zip(self.A, self.b):
                w.writerow([repr(float(v)) for v in a] + [repr(float(bk))])


def linear_forms(Bbar: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    """forms[i, j, k] = d Hbar_ij / d f_k for the row-major packing of ``pattern``."""
    s = Bbar.shape[0]
    pos = np.argwhere(pattern)
    forms = np.zeros((s, s, len(pos)))
    for k, (r, c) in enumerate(pos):
        forms[:, c, k] = Bbar[:, r]
    return forms


def row_count(forms: np.ndarray) -> int:
    s = forms.shape[0]
    total = 0
    for i in range(s):
        g = sum(1 for j in range(s) if j != i and np.any(forms[i, j] != 0))
        total += 2 * 2**g
    return total


def build_polytope(ss: StateSpace, pattern, eps: float = 1e-2, max_rows: int = MAX_ROWS) -> ParameterPolytope:
    if not ss.reduced:
        ss = reduce(ss)
    pattern = np.asarray(pattern, dtype=bool)
    forms = linear_forms(ss.Bbar, pattern)
    s, y = forms.shape[0], forms.shape[2]

    groups, pruned = [], 0
    for i in range(s):
        gi = tuple(j for j in range(s) if j != i and np.any(forms[i, j] != 0))
        pruned += (s - 1) - len(gi)
        groups.append(gi)
    total = sum(2 * 2**len(g) for g in groups)
    if total > max_rows:
        raise ExplosionError(f"polytope would have {total} rows (cap {max_rows}); coarsen the pattern")
    if pruned:
        log.info("pruned %d identically-zero off-diagonal terms", pruned)

    A = np.empty((total, y))
    b = np.empty(total)
    disc_row = np.empty(total, dtype=np.int64)
    kind = np.empty(total, dtype=np.int8)
    signs = np.empty(total, dtype=np.int64)
    at = 0
    for i, gi in enumerate(groups):
        diag = forms[i, i]
        g = len(gi)
        if g:
            sig = np.array(list(itertools.product((1.0, -1.0), repeat=g)))
            off = sig @ forms[i, list(gi)]
            mask = ((sig < 0) * (1 << np.arange(g)[::-1])).sum(axis=1)
        else:
            off = np.zeros((1, y))
            mask = np.zeros(1, dtype=np.int64)
        cnt = off.shape[0]
        for kd, (sgn, bound) in enumerate(((1.0, 2.0 - eps), (-1.0, -eps))):
            sl = slice(at, at + cnt)
            A[sl] = sgn * diag + off
            b[sl] = bound
            disc_row[sl] = i
            kind[sl] = kd
            signs[sl] = mask
            at += cnt
    return ParameterPolytope(A, b, pattern, eps, disc_row, kind, signs, tuple(groups), forms, pruned)


@dataclass(frozen=True)
class ChebyshevResult:
    center: np.ndarray
    radius: float
    active: tuple
    mode: str = "safe"
    ranges: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "radius": self.radius,
            "active_constraints": list(self.active),
            "mode": self.mode,
            "ranges": None if self.ranges is None else [[float(lo), float(hi)] for lo, hi in self.ranges],
        }


def _cheb_lp(A, norms, b):
    y = A.shape[1]
    c = np.zeros(y + 1)
    c[-1] = -1.0
    free = np.ones(y + 1, dtype=bool)
    free[-1] = False
    res = linprog(c, np.hstack([A, norms[:, None]]), b, free=free)
    return res.x[:y], res.x[-1]


def chebyshev_ball(A, b, tol: float = 1e-9, direct_rows: int = DIRECT_LP_ROWS):
    """Largest ball {x : ||x - center|| <= r} inside {x : A x <= b}.

    Small systems go straight to the simplex. Large ones use constraint
    generation: solve on a working set (boxed to keep it bounded), add the
    most violated rows, repeat; the box is widened until it is slack.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    zero = norms == 0
    if np.any(b[zero] < -tol):
        raise InfeasibleError("a constraint with zero normal is violated everywhere")
    A, b, norms = A[~zero], b[~zero], norms[~zero]
    y = A.shape[1]
    if A.shape[0] == 0:
        raise UnboundedError("no constraints: the radius is unbounded")

    if A.shape[0] <= direct_rows:
        x, r = _cheb_lp(A, norms, b)
    else:
        x, r = _generate(A, norms, b, tol)

    if r < -tol:
        raise InfeasibleError("polytope is empty")
    r = max(float(r), 0.0)
    lhs = A @ x + r * norms
    if np.any(lhs > b + 1e-9 * (1.0 + np.abs(b))):
        raise NumericalError(f"ball violates constraints by {np.max(lhs - b):.3e}")
    return x, r, norms, np.nonzero(~zero)[0]


def _generate(A, norms, b, tol, batch=64):
    y = A.shape[1]
    scale = 1.0 + float(np.max(np.abs(b) / norms))
    box = 1e3 * scale
    # seed with the rows best aligned with +/- each coordinate axis
    seed = set()
    for k in range(y):
        seed.add(int(np.argmax(A[:, k] / norms)))
        seed.add(int(np.argmin(A[:, k] / norms)))
    while True:
        work = sorted(seed)
        while True:
            Abox = np.vstack([np.eye(y), -np.eye(y)])
            Aw = np.vstack([A[work], Abox])
            nw = np.concatenate([norms[work], np.ones(2 * y)])
            bw = np.concatenate([b[work], np.full(2 * y, box)])
            x, r = _cheb_lp(Aw, nw, bw)
            viol = A @ x + r * norms - b
            bad = np.nonzero(viol > tol * (1.0 + np.abs(b)))[0]
            if bad.size == 0:
                break
            order = bad[np.argsort(-viol[bad])][:batch]
            work = sorted(set(work) | set(int(k) for k in order))
        if np.max(np.abs(x)) + r < box * (1 - 1e-6):
            return x, r
        if box > 1e12:
            raise UnboundedError("Chebyshev radius grows with the bounding box")
        box *= 100.0
        seed = set(work)


def _lifted_rows(poly: ParameterPolytope, extra: int):
    """Constraint rows of the absolute-value LP over [f, t, extra...].

    The off-diagonal forms of one Hbar row act on disjoint columns of F, so
    every sign-expanded row of a disc has the same norm. Bounding each
    |l_g(f)| by an auxiliary t_g >= 0 reproduces the expanded polytope with
    only 2 rows per group plus 2 per disc. Returns (rows, rhs, disc norms,
    disc row indices, number of t variables).
    """
    forms, y = poly.forms, poly.y
    pairs = [(i, j) for i, gi in enumerate(poly.groups) for j in gi]
    nv = y + len(pairs) + extra
    rows, rhs, disc_at, norms = [], [], [], []
    for g, (i, j) in enumerate(pairs):
        for sgn in (1.0, -1.0):
            a = np.zeros(nv)
            a[:y] = sgn * forms[i, j]
            a[y + g] = -1.0
            rows.append(a)
            rhs.append(0.0)
    for i, gi in enumerate(poly.groups):
        norm = np.sqrt(np.sum(forms[i, i] ** 2) + sum(np.sum(forms[i, j] ** 2) for j in gi))
        for sgn, bound in ((1.0, 2.0 - poly.eps), (-1.0, -poly.eps)):
            a = np.zeros(nv)
            a[:y] = sgn * forms[i, i]
            for g, pr in enumerate(pairs):
                if pr[0] == i:
                    a[y + g] = 1.0
            disc_at.append(len(rows))
            norms.append(norm)
            rows.append(a)
            rhs.append(bound)
    return np.array(rows), np.array(rhs), np.array(norms), np.array(disc_at), len(pairs)


def _lifted_ball(poly: ParameterPolytope):
    """Chebyshev ball of a disc polytope without enumerating sign patterns."""
    y = poly.y
    A, b, norms, at, npair = _lifted_rows(poly, extra=1)
    A[at, -1] = norms
    c = np.zeros(A.shape[1])
    c[-1] = -1.0
    free = np.zeros(A.shape[1], dtype=bool)
    free[:y] = True
    res = linprog(c, A, b, free=free)
    return res.x[:y], float(res.x[-1])


def _min_norm_center(poly: ParameterPolytope, radius: float):
    """Among centers admitting ``radius``, the one of least l1 norm.

    Gains that cancel inside Hbar (two DERs with proportional columns of
    Bbar, say) leave the optimal center free to drift along those
    directions; the tie-break removes that drift. Components in the null
    space of every linear form are projected out afterwards, which leaves
    each constraint value unchanged.
    """
    y = poly.y
    A, b, norms, at, npair = _lifted_rows(poly, extra=y)
    b = b.copy()
    b[at] -= radius * norms
    nv = A.shape[1]
    box = np.zeros((2 * y, nv))
    box[:y, :y] = np.eye(y)
    box[y:, :y] = -np.eye(y)
    box[:y, nv - y:] = -np.eye(y)
    box[y:, nv - y:] = -np.eye(y)
    c = np.zeros(nv)
    c[nv - y:] = 1.0
    free = np.zeros(nv, dtype=bool)
    free[:y] = True
    res = linprog(c, np.vstack([A, box]), np.concatenate([b, np.zeros(2 * y)]), free=free)
    x = res.x[:y]
    # drop components no constraint can see; parallel DERs then share gains evenly
    basis = np.linalg.svd(poly.forms.reshape(-1, y), full_matrices=False)
    keep = basis.S > 1e-12 * max(basis.S.max(initial=0.0), 1.0)
    Vt = basis.Vh[keep]
    return Vt.T @ (Vt @ x)


def chebyshev(poly: ParameterPolytope, mode: str = "safe", method: str = "auto",
              tie_break: bool = True) -> ChebyshevResult:
    """Chebyshev ball of the stability polytope.

    ``method="lifted"`` uses the compact absolute-value LP, ``"rows"`` the
    explicit row set; ``"auto"`` picks lifted once the row set is large.
    With ``tie_break`` the radius is shrunk by a relative 1e-9 and the
    least-l1 center admitting it is returned, since the optimal center is
    rarely unique. The ball is always re-checked against every explicit row.
    """
    if method == "auto":
        method = "lifted" if poly.rows > DIRECT_LP_ROWS else "rows"
    norms = np.linalg.norm(poly.A, axis=1)
    if method == "rows":
        x, r, _, _ = chebyshev_ball(poly.A, poly.b)
    elif method == "lifted":
        x, r = _lifted_ball(poly)
        if r < -1e-9:
            raise InfeasibleError("polytope is empty")
        r = max(r, 0.0)
    else:
        raise ValueError(f"unknown method {method!r}")
    if tie_break and r > 0:
        r = r * (1.0 - TIE_SHRINK)
        x = _min_norm_center(poly, r)
    if np.any(poly.A @ x + r * norms > poly.b + 1e-9 * (1.0 + np.abs(poly.b))):
        raise NumericalError("Chebyshev ball violates an explicit constraint")
    slack = poly.b - poly.A @ x - r * norms
    active = tuple(int(k) for k in np.nonzero(slack <= 1e-7 * (1.0 + np.abs(poly.b)))[0])
    res = ChebyshevResult(x, r, active, mode)
    if r > 0:
        res = ChebyshevResult(x, r, active, mode, parameter_ranges(res, mode))
    return res


def range_width(radius: float, y: int, mode: str) -> float:
    if mode == "paper":
        return radius * np.sqrt(2.0)
    if mode == "safe":
        return 2.0 * radius / np.sqrt(y)
    raise ValueError(f"unknown range mode {mode!r}")


def parameter_ranges(cheb: ChebyshevResult, mode: Optional[str] = None) -> np.ndarray:
    """Per-parameter intervals (y x 2) centred at the Chebyshev center.

    ``safe`` widths 2c/sqrt(y) keep the whole hypercube inside the ball;
    ``paper`` widths c*sqrt(2) are the inscribed square of the planar case.
    """
    mode = mode or cheb.mode
    if cheb.radius <= 0:
        raise DegenerateError("Chebyshev radius is zero; no operating range exists")
    w = range_width(cheb.radius, cheb.center.size, mode)
    return np.column_stack([cheb.center - w / 2, cheb.center + w / 2])


def sample_gain(ranges, pattern, policy: str = "midpoint", overrides=None) -> GainMatrix:
    """Pick one value per parameter.

    ``policy`` is midpoint/upper/lower; ``overrides`` is a list of
    ``(mask, policy)`` pairs, mask being a boolean d x s array, applied in
    order on top of the base policy (used for per-quadrant schedules).
    """
    ranges = np.asarray(ranges, dtype=float)
    pattern = np.asarray(pattern, dtype=bool)
    pick = {"midpoint": ranges.mean(axis=1), "upper": ranges[:, 1], "lower": ranges[:, 0]}
    if policy not in pick:
        raise ValueError(f"unknown gain policy {policy!r}")
    f = pick[policy].copy()
    for mask, pol in overrides or ():
        sel = np.asarray(mask, dtype=bool)[pattern]
        f[sel] = pick[pol][sel]
    return GainMatrix.from_vector(f, pattern)


def sample_uniform(ranges, rng: np.random.Generator, count: int) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)
    return rng.uniform(ranges[:, 0], ranges[:, 1], size=(count, ranges.shape[0]))


def hypercube_certified(poly: ParameterPolytope, cheb: ChebyshevResult, ranges) -> bool:
    """The box fits in the ball iff its half-diagonal does, which makes every
    corner feasible without enumerating them."""
    half = (np.asarray(ranges)[:, 1] - np.asarray(ranges)[:, 0]) / 2
    return bool(np.linalg.norm(half) <= cheb.radius * (1 + 1e-12))


def slice_grid(poly: ParameterPolytope, cheb: ChebyshevResult, dims=(0, 1), half_width=None,
               resolution: int = 61):
    """2-D cut through the parameter space with every other coordinate fixed at
    the Chebyshev center. Returns (u, v, in_polytope, eig_stable) grids."""
    from .stability import assess_eigen

    i, j = dims
    hw = half_width if half_width is not None else 4 * max(cheb.radius, 1e-6)
    u = np.linspace(cheb.center[i] - hw, cheb.center[i] + hw, resolution)
    v = np.linspace(cheb.center[j] - hw, cheb.center[j] + hw, resolution)
    inside = np.zeros((resolution, resolution), dtype=bool)
    stable = np.zeros_like(inside)
    f = cheb.center.copy()
    for a, fu in enumerate(u):
        for c, fv in enumerate(v):
            f[i], f[j] = fu, fv
            inside[c, a] = poly.contains(f)
            stable[c, a] = assess_eigen(poly.hbar(f))
    return u, v, inside, stable


def slice_svg(path, poly, cheb, dims=(0, 1), ranges=None, resolution: int = 61) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    u, v, inside, stable = slice_grid(poly, cheb, dims, resolution=resolution)
    fig, ax = plt.subplots(figsize=(5, 5))
    U, V = np.meshgrid(u, v)
    ax.scatter(U[stable], V[stable], s=4, c="tab:green", label="eigen-stable")
    ax.scatter(U[~stable], V[~stable], s=4, c="tab:red", label="unstable")
    ax.contour(U, V, inside.astype(float), levels=[0.5], colors="k")
    i, j = dims
    ax.add_patch(plt.Circle((cheb.center[i], cheb.center[j]), cheb.radius, fill=False, color="b"))
    if ranges is not None:
        ri, rj = ranges[i], ranges[j]
        ax.add_patch(plt.Rectangle((ri[0], rj[0]), ri[1] - ri[0], rj[1] - rj[0], fill=False, color="orange"))
    ax.set_xlabel(f"f{i + 1}")
    ax.set_ylabel(f"f{j + 1}")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7)
    fig.savefig(path, format="svg")
    plt.close(fig)
