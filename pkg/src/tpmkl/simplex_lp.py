"""Dense two-phase tableau simplex for small linear programs.

Solves ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  0 <= x <= upper``.
Finite upper bounds are handled implicitly: a nonbasic variable at its
upper bound is replaced by its complement ``upper - x``. Pivoting follows
Dantzig's rule until a degenerate step is taken, then switches to Bland's
smallest-index rule for the rest of the phase, which rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverStallError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8


@dataclass
class LpResult:
    x: np.ndarray
    fun: float
    pivots: int
    #: Lagrange multipliers of the ``A_ub`` rows (<= 0) and ``A_eq`` rows.
    y_ub: np.ndarray
    y_eq: np.ndarray


class _Tableau:
    def __init__(self, T, basis, upper, max_pivots):
        self.T = T
        self.basis = basis
        self.upper = upper
        self.flipped = np.zeros(upper.size, dtype=bool)
        self.pivots = 0
        self.max_pivots = max_pivots

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c
        self.pivots += 1

    def flip_nonbasic(self, c):
        # x_c -> upper_c - x_c
        T = self.T
        T[:, -1] -= self.upper[c] * T[:, c]
        T[:, c] *= -1.0
        self.flipped[c] = ~self.flipped[c]

    def flip_basic(self, r):
        T = self.T
        c = self.basis[r]
        T[r, -1] = self.upper[c] - T[r, -1]
        T[r, :-1] *= -1.0
        T[r, c] = 1.0
        self.flipped[c] = ~self.flipped[c]

    def run(self, allowed):
        """Minimise the objective held in the last row over ``allowed`` columns."""
        T = self.T
        m = T.shape[0] - 1
        bland = False
        while True:
            if self.pivots >= self.max_pivots:
                raise SolverStallError(f"no optimum after {self.pivots} pivots")
            cost = T[-1, :-1]
            scale = max(1.0, np.max(np.abs(cost[allowed]), initial=0.0))
            candidates = np.flatnonzero(allowed & (cost < -PIVOT_TOL * scale))
            if candidates.size == 0:
                return
            if bland:
                c = int(candidates[0])
            else:
                c = int(candidates[np.argmin(cost[candidates])])
            column = T[:m, c]
            rhs = T[:m, -1]
            ub_basic = self.upper[self.basis]
            step = self.upper[c]
            r = -1
            to_upper = False
            dec = np.flatnonzero(column > PIVOT_TOL)
            if dec.size:
                ratios = rhs[dec] / column[dec]
                best = ratios.min()
                if best < step:
                    ties = dec[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
                    # smallest basic index among tied rows (Bland)
                    r = int(ties[np.argmin(self.basis[ties])])
                    step = best
            inc = np.flatnonzero((column < -PIVOT_TOL) & np.isfinite(ub_basic))
            if inc.size:
                ratios = (ub_basic[inc] - rhs[inc]) / -column[inc]
                best = ratios.min()
                if best < step:
                    ties = inc[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
                    r = int(ties[np.argmin(self.basis[ties])])
                    step = best
                    to_upper = True
            if not np.isfinite(step):
                raise SolverStallError("objective is unbounded below")
            if step <= PIVOT_TOL:
                bland = True
            if r < 0:
                self.flip_nonbasic(c)
                self.pivots += 1
                continue
            if to_upper:
                self.flip_basic(r)
            self.pivot(r, c)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, upper=None,
            max_pivots=None) -> LpResult:
    c = np.asarray(c, dtype=np.float64)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.asarray(A_ub, dtype=np.float64)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=np.float64)
    A_eq = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=np.float64)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64)
    upper = np.full(nv, np.inf) if upper is None else np.asarray(upper, dtype=np.float64)
    if np.any(upper < 0):
        raise ValueError("upper bounds must be >= 0")
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    # columns: originals | slacks | artificials | rhs
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign

    basis = np.full(m, -1, dtype=np.int64)
    slack_ok = np.flatnonzero(sign[:m_ub] > 0)
    basis[slack_ok] = nv + slack_ok
    art_rows = np.flatnonzero(basis < 0)
    n_art = art_rows.size
    ncol = nv + m_ub + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :nv + m_ub] = A
    T[art_rows, nv + m_ub + np.arange(n_art)] = 1.0
    basis[art_rows] = nv + m_ub + np.arange(n_art)
    # column holding B^-1 e_i for every row i
    ident = basis.copy()
    T[:m, -1] = b
    if max_pivots is None:
        max_pivots = 50 * (m + ncol) + 1000
    all_upper = np.concatenate([upper, np.full(m_ub + n_art, np.inf)])
    tab = _Tableau(T, basis, all_upper, max_pivots)

    allowed = np.ones(ncol, dtype=bool)
    keep = np.ones(m, dtype=bool)
    if n_art:
        # phase 1: minimise the sum of artificials
        T[-1, :] = 0.0
        T[-1, nv + m_ub:ncol] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        tab.run(allowed)
        if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            raise SolverStallError(f"problem is infeasible (phase-1 residual {-T[-1, -1]:.3g})")
        # drive remaining zero-level artificials out of the basis
        for r in range(m):
            if tab.basis[r] >= nv + m_ub:
                nz = np.flatnonzero(np.abs(T[r, :nv + m_ub]) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        allowed[nv + m_ub:] = False
        if not keep.all():
            tab.T = np.vstack([T[:m][keep], T[-1:]])
            tab.basis = tab.basis[keep]

    # phase 2
    T = tab.T
    mk = T.shape[0] - 1
    T[-1, :] = 0.0
    T[-1, :ncol] = np.concatenate([c, np.zeros(m_ub + n_art)])
    T[-1, :nv][tab.flipped[:nv]] *= -1.0
    T[-1, -1] = -float(c[tab.flipped[:nv]] @ upper[tab.flipped[:nv]])
    for r in range(mk):
        j = tab.basis[r]
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    tab.run(allowed)

    x = np.zeros(ncol)
    x[tab.basis] = T[:mk, -1]
    x = np.where(tab.flipped, all_upper - x, x)[:nv]
    y = np.zeros(m)
    y[keep] = 0.0
    # reduced cost of the identity column of row i is -y_i for the scaled row
    y_scaled = -T[-1, ident]
    y = np.where(keep, y_scaled * sign, 0.0)
    return LpResult(x, float(c @ x), tab.pivots, y[:m_ub], y[m_ub:])
