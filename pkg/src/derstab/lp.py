"""Small dense two-phase simplex solver.

Solves ``min c @ x  s.t.  A_ub @ x <= b_ub``, with each variable either
non-negative or free. Pricing is Dantzig's rule; once the objective stalls
on degenerate pivots the solver switches to Bland's rule for the rest of
the phase, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NumericalError, UnboundedError

TOL = 1e-9


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    slack: np.ndarray
    iterations: int


class _Tableau:
    def __init__(self, M, basis, tol):
        self.M = M            # rows 0..m-1: constraints, row m: reduced costs
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, i, j):
        M = self.M
        M[i] /= M[i, j]
        col = M[:, j].copy()
        col[i] = 0.0
        M -= np.outer(col, M[i])
        self.basis[i] = j
        self.iterations += 1

    def run(self, ncols, max_iter, stall_limit=50):
        M, tol = self.M, self.tol
        m = M.shape[0] - 1
        bland = False
        best, stall = np.inf, 0
        for _ in range(max_iter):
            cost = M[m, :ncols]
            if bland:
                cand = np.nonzero(cost < -tol)[0]
                if cand.size == 0:
                    return
                j = int(cand[0])
            else:
                j = int(np.argmin(cost))
                if cost[j] >= -tol:
                    return
            colj = M[:m, j]
            pos = colj > tol
            if not pos.any():
                raise UnboundedError("LP objective is unbounded")
            ratios = np.full(m, np.inf)
            ratios[pos] = M[:m, -1][pos] / colj[pos]
            rmin = ratios.min()
            ties = np.nonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))[0]
            i = int(min(ties, key=lambda r: self.basis[r])) if bland else int(ties[np.argmax(colj[ties])])
            self.pivot(i, j)
            obj = -M[m, -1]
            if obj < best - tol * max(1.0, abs(best)):
                best, stall = obj, 0
            else:
                stall += 1
                if stall >= stall_limit:
                    bland = True
        raise NumericalError(f"simplex did not terminate within {max_iter} pivots")


def linprog(c, A_ub, b_ub, free=None, tol: float = TOL, max_iter: int = 50000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float)
    m, n = A.shape
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)

    # standard form columns: [x_nonneg | x_free+ | x_free- | slack | artificial]
    nn = np.nonzero(~free)[0]
    fr = np.nonzero(free)[0]
    Astd = np.hstack([A[:, nn], A[:, fr], -A[:, fr], np.eye(m)])
    cstd = np.concatenate([c[nn], c[fr], -c[fr], np.zeros(m)])
    nstd = Astd.shape[1]
    rhs = b.copy()
    neg = rhs < 0
    Astd[neg] *= -1.0
    rhs[neg] *= -1.0
    art_rows = np.nonzero(neg)[0]
    na = art_rows.size
    Aart = np.zeros((m, na))
    Aart[art_rows, np.arange(na)] = 1.0

    M = np.zeros((m + 1, nstd + na + 1))
    M[:m, :nstd] = Astd
    M[:m, nstd:nstd + na] = Aart
    M[:m, -1] = rhs
    basis = list(range(nstd - m, nstd))
    for k, r in enumerate(art_rows):
        basis[r] = nstd + k
    tab = _Tableau(M, basis, tol)

    if na:
        # phase 1: minimise the sum of artificials
        M[m, :] = 0.0
        M[m, nstd:nstd + na] = 1.0
        for r in art_rows:
            M[m] -= M[r]
        tab.run(nstd + na, max_iter)
        if -M[m, -1] > tol * max(1.0, np.abs(rhs).max()):
            raise InfeasibleError("LP constraints are infeasible")
        # drive zero-level artificials out of the basis
        for r in range(m):
            if tab.basis[r] >= nstd:
                row = M[r, :nstd]
                cand = np.nonzero(np.abs(row) > tol)[0]
                if cand.size:
                    tab.pivot(r, int(cand[np.argmax(np.abs(row[cand]))]))
        keep = [r for r in range(m) if tab.basis[r] < nstd]
        M = np.vstack([M[keep], M[m:m + 1]])
        M = np.hstack([M[:, :nstd], M[:, -1:]])
        tab = _Tableau(M, [tab.basis[r] for r in keep], tol)
        tab.iterations = 0

    mm = M.shape[0] - 1
    M[mm, :] = 0.0
    M[mm, :nstd] = cstd
    for r, j in enumerate(tab.basis):
        if cstd[j] != 0.0:
            M[mm] -= cstd[j] * M[r]
    tab.run(nstd, max_iter)

    z = np.zeros(nstd)
    for r, j in enumerate(tab.basis):
        z[j] = M[r, -1]
    x = np.zeros(n)
    x[nn] = z[:nn.size]
    x[fr] = z[nn.size:nn.size + fr.size] - z[nn.size + fr.size:nn.size + 2 * fr.size]
    slack = b - A @ x
    return LPResult(x, float(c @ x), slack, tab.iterations)
