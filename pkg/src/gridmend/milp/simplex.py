"""Dense bounded-variable simplex.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``lb <= x <= ub``. Rows are brought to equality form with slack columns and a
full artificial basis; the tableau ``B^-1 [A | b]`` is kept explicitly so that
branch-and-bound children can be warm-started with the dual simplex after a
bound change.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFRESH_EVERY = 60
DEGENERATE_LIMIT = 40
DRIFT_TOL = 1e-9


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @classmethod
    def build(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None):
        c = np.asarray(c, dtype=float)
        n = c.size
        A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
        A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
        b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float).copy()
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
        if A_ub.shape[0] != b_ub.size or A_eq.shape[0] != b_eq.size:
            raise ValueError("row count mismatch between constraint matrix and rhs")
        if np.any(~np.isfinite(lb)):
            raise ValueError("every variable needs a finite lower bound")
        return cls(c, A_ub, b_ub, A_eq, b_eq, lb, ub)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LPResult:
    status: LPStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    state: "_Tableau | None" = field(default=None, repr=False)


class _Tableau:
    """Equality-form simplex state: ``x_B = beta - T_N x_N``."""

    def __init__(self, A, b, c, lb, ub, basis, x):
        self.A = A
        self.b = b
        self.c = c
        self.lb = lb
        self.ub = ub
        self.basis = basis
        self.x = x
        self.m, self.N = A.shape
        self.refresh()

    def copy(self) -> "_Tableau":
        new = object.__new__(_Tableau)
        new.A, new.b, new.c = self.A, self.b, self.c
        new.lb, new.ub = self.lb.copy(), self.ub.copy()
        new.basis = self.basis.copy()
        new.x = self.x.copy()
        new.m, new.N = self.m, self.N
        new.T = self.T.copy()
        new.d = self.d.copy()
        new.is_basic = self.is_basic.copy()
        new.stale = self.stale
        return new

    def refresh(self) -> None:
        """Refactor from the basis: rebuild tableau, basic values, reduced costs."""
        B = self.A[:, self.basis]
        aug = np.hstack([self.A, self.b[:, None]])
        self.T = np.linalg.solve(B, aug) if self.m else aug
        self.stale = 0
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.is_basic[self.basis] = True
        self._recompute_basic_values()
        cB = self.c[self.basis]
        self.d = self.c - cB @ self.T[:, :-1]
        self.d[self.basis] = 0.0

    def drift(self) -> float:
        """Scaled residual of ``A x = b``; large values mean the tableau needs refactoring."""
        resid = self.A @ self.x - self.b
        return float(np.abs(resid).max(initial=0.0)) / (1.0 + float(np.abs(self.b).max(initial=0.0)))

    def _recompute_basic_values(self) -> None:
        xn = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self.T[:, -1] - self.T[:, :-1] @ xn

    def set_cost(self, c) -> None:
        self.c = c
        cB = self.c[self.basis]
        self.d = self.c - cB @ self.T[:, :-1]
        self.d[self.basis] = 0.0

    def pivot(self, r: int, q: int) -> None:
        T = self.T
        prow = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        # tableau columns are mostly sparse; touch only the nonzero block
        rows = np.flatnonzero(col)
        cols = np.flatnonzero(prow)
        if rows.size and cols.size:
            T[np.ix_(rows, cols)] -= np.outer(col[rows], prow[cols])
        T[r] = prow
        self.d -= self.d[q] * prow[:-1]
        self.d[q] = 0.0
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.basis[r] = q
        self.stale += 1

    def objective(self) -> float:
        return float(self.c @ self.x)

    # -- primal simplex -----------------------------------------------------

    def primal(self, max_iter: int) -> tuple[LPStatus, int]:
        it = 0
        degenerate = 0
        since_refresh = 0
        while it < max_iter:
            bland = degenerate >= DEGENERATE_LIMIT
            q, s = self._entering(bland)
            if q < 0:
                # confirm on a fresh factorisation before declaring optimality
                if self.stale:
                    self.refresh()
                    since_refresh = 0
                    if self._entering(False)[0] < 0 and self.primal_infeasibility() <= FEAS_TOL:
                        return LPStatus.OPTIMAL, it
                    continue
                return LPStatus.OPTIMAL, it
            alpha = self.T[:, q]
            t, r, hit_upper = self._ratio(alpha, s, q, bland)
            if not np.isfinite(t):
                return LPStatus.UNBOUNDED, it
            degenerate = degenerate + 1 if t <= PIVOT_TOL else 0
            self.x[self.basis] -= t * s * alpha
            self.x[q] += t * s
            if r >= 0:
                leaving = self.basis[r]
                self.pivot(r, q)
                self.x[leaving] = self.ub[leaving] if hit_upper else self.lb[leaving]
            else:
                self.x[q] = self.ub[q] if s > 0 else self.lb[q]
            it += 1
            since_refresh += 1
            if since_refresh >= REFRESH_EVERY:
                if self.drift() > DRIFT_TOL:
                    self.refresh()
                since_refresh = 0
        return LPStatus.ITERATION_LIMIT, it

    def _entering(self, bland: bool) -> tuple[int, int]:
        nb = ~self.is_basic & (self.ub - self.lb > FEAS_TOL)
        at_lower = self.x <= self.lb + FEAS_TOL
        at_upper = self.x >= self.ub - FEAS_TOL
        up = nb & at_lower & (self.d < -OPT_TOL)
        down = nb & at_upper & (self.d > OPT_TOL)
        cand = up | down
        if not cand.any():
            return -1, 0
        if bland:
            q = int(np.flatnonzero(cand)[0])
        else:
            score = np.where(cand, np.abs(self.d), -1.0)
            q = int(np.argmax(score))
        return q, (1 if up[q] else -1)

    def _ratio(self, alpha, s, q, bland):
        """Two-pass (Harris) ratio test; returns (step, row or -1 for a bound flip, hits upper)."""
        xb = self.x[self.basis]
        lb = self.lb[self.basis]
        ub = self.ub[self.basis]
        sa = s * alpha
        tol = PIVOT_TOL * max(1.0, float(np.abs(alpha).max(initial=0.0)))
        dec = sa > tol
        inc = sa < -tol
        flip = self.ub[q] - self.lb[q]
        if not (dec.any() or inc.any()):
            return flip, -1, False
        with np.errstate(divide="ignore", invalid="ignore"):
            relaxed = np.minimum(
                np.where(dec, (xb - lb + FEAS_TOL) / sa, np.inf),
                np.where(inc, (ub - xb + FEAS_TOL) / -sa, np.inf),
            )
            t_dec = np.where(dec, (xb - lb) / sa, np.inf)
            t_inc = np.where(inc, (ub - xb) / -sa, np.inf)
        t_max = relaxed.min()
        if flip <= t_max:
            return flip, -1, False
        t_rows = np.maximum(np.minimum(t_dec, t_inc), 0.0)
        cand = np.flatnonzero(t_rows <= t_max)
        if bland:
            r = int(cand[np.argmin(self.basis[cand])])
        else:
            r = int(cand[np.argmax(np.abs(alpha[cand]))])
        return float(t_rows[r]), r, bool(t_inc[r] <= t_dec[r])

    # -- dual simplex -------------------------------------------------------

    def dual(self, max_iter: int) -> tuple[LPStatus, int]:
        it = 0
        since_refresh = 0
        while it < max_iter:
            xb = self.x[self.basis]
            lb = self.lb[self.basis]
            ub = self.ub[self.basis]
            below = lb - xb
            above = xb - ub
            viol = np.maximum(below, above)
            r = int(np.argmax(viol)) if viol.size else 0
            if not viol.size or viol[r] <= FEAS_TOL:
                if self.stale:
                    self.refresh()
                    since_refresh = 0
                    continue
                return LPStatus.OPTIMAL, it
            increase = below[r] > above[r]
            row = self.T[r, :-1]
            nb = ~self.is_basic & (self.ub - self.lb > FEAS_TOL)
            at_lower = self.x <= self.lb + FEAS_TOL
            if increase:
                elig = nb & ((at_lower & (row < -PIVOT_TOL)) | (~at_lower & (row > PIVOT_TOL)))
            else:
                elig = nb & ((at_lower & (row > PIVOT_TOL)) | (~at_lower & (row < -PIVOT_TOL)))
            if not elig.any():
                return LPStatus.INFEASIBLE, it
            idx = np.flatnonzero(elig)
            ratios = np.abs(self.d[idx]) / np.abs(row[idx])
            rmin = ratios.min()
            ties = idx[ratios <= rmin + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            leaving = self.basis[r]
            target = self.lb[leaving] if increase else self.ub[leaving]
            step = (self.x[leaving] - target) / row[q]
            self.x[self.basis] -= step * self.T[:, q]
            self.x[q] += step
            self.pivot(r, q)
            self.x[leaving] = target
            it += 1
            since_refresh += 1
            if since_refresh >= REFRESH_EVERY:
                if self.drift() > DRIFT_TOL:
                    self.refresh()
                since_refresh = 0
        return LPStatus.ITERATION_LIMIT, it

    # -- diagnostics --------------------------------------------------------

    def primal_infeasibility(self) -> float:
        lo = np.maximum(self.lb - self.x, 0.0)
        hi = np.maximum(self.x - self.ub, 0.0)
        return float(max(lo.max(initial=0.0), hi.max(initial=0.0)))

    def dual_infeasibility(self) -> float:
        nb = ~self.is_basic & (self.ub - self.lb > FEAS_TOL)
        at_lower = self.x <= self.lb + FEAS_TOL
        at_upper = self.x >= self.ub - FEAS_TOL
        bad_low = np.where(nb & at_lower & ~at_upper, np.maximum(-self.d, 0.0), 0.0)
        bad_up = np.where(nb & at_upper & ~at_lower, np.maximum(self.d, 0.0), 0.0)
        return float(max(bad_low.max(initial=0.0), bad_up.max(initial=0.0)))


class SimplexSolver:
    """Bounded simplex for :class:`LinearProgram` with warm-start support."""

    def __init__(self, lp: LinearProgram, max_iter: int = 50_000):
        self.lp = lp
        self.max_iter = max_iter
        m_ub, n = lp.A_ub.shape
        m_eq = lp.A_eq.shape[0]
        m = m_ub + m_eq
        self.n, self.m = n, m
        # columns: structural | slacks for <= rows | artificials
        A = np.zeros((m, n + m_ub + m))
        A[:m_ub, :n] = lp.A_ub
        A[m_ub:, :n] = lp.A_eq
        A[:m_ub, n:n + m_ub] = np.eye(m_ub)
        self._art0 = n + m_ub
        self.b = np.concatenate([lp.b_ub, lp.b_eq])
        self.A = A
        self.lb = np.concatenate([lp.lb, np.zeros(m_ub), np.zeros(m)])
        self.ub = np.concatenate([lp.ub, np.full(m_ub, np.inf), np.full(m, np.inf)])
        self.c = np.concatenate([lp.c, np.zeros(m_ub + m)])

    def solve(self, lb=None, ub=None, warm: _Tableau | None = None) -> LPResult:
        """Solve with optional overridden structural bounds.

        ``warm`` is a solved tableau of the same problem; when given, the new
        bounds are applied to it and the dual simplex restores feasibility.
        """
        lb_s = self.lp.lb if lb is None else np.asarray(lb, dtype=float)
        ub_s = self.lp.ub if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb_s > ub_s + FEAS_TOL):
            return LPResult(LPStatus.INFEASIBLE, None, np.inf, 0)
        if warm is not None:
            res = self._solve_warm(warm, lb_s, ub_s)
            if res is not None:
                return res
        return self._solve_cold(lb_s, ub_s)

    def _full_bounds(self, lb_s, ub_s):
        lb = self.lb.copy()
        ub = self.ub.copy()
        lb[:self.n] = lb_s
        ub[:self.n] = ub_s
        return lb, ub

    def _solve_cold(self, lb_s, ub_s) -> LPResult:
        n, m, a0 = self.n, self.m, self._art0
        m_ub = self.lp.A_ub.shape[0]
        lb, ub = self._full_bounds(lb_s, ub_s)
        x0 = lb[:a0].copy()
        resid = self.b - self.A[:, :a0] @ x0
        # a <= row whose slack can absorb the residual starts with the slack basic
        slack_ok = np.zeros(m, dtype=bool)
        slack_ok[:m_ub] = resid[:m_ub] >= 0
        need = np.flatnonzero(~slack_ok)
        k = need.size
        art = np.zeros((m, k))
        art[need, np.arange(k)] = np.where(resid[need] >= 0, 1.0, -1.0)
        A = np.hstack([self.A[:, :a0], art])
        lb = np.concatenate([lb[:a0], np.zeros(k)])
        ub = np.concatenate([ub[:a0], np.full(k, np.inf)])
        x = np.concatenate([x0, np.abs(resid[need])])
        basis = np.empty(m, dtype=np.intp)
        ok = np.flatnonzero(slack_ok)
        basis[ok] = n + ok
        x[n + ok] = resid[ok]
        basis[need] = a0 + np.arange(k)
        phase1_cost = np.zeros(a0 + k)
        phase1_cost[a0:] = 1.0
        tab = _Tableau(A, self.b, phase1_cost, lb, ub, basis, x)
        status, it1 = tab.primal(self.max_iter)
        if status is not LPStatus.OPTIMAL:
            return LPResult(status, None, np.inf, it1)
        if tab.objective() > 1e-7 * max(1.0, float(np.abs(self.b).max(initial=0.0))):
            return LPResult(LPStatus.INFEASIBLE, None, np.inf, it1)
        tab.ub[a0:] = 0.0
        tab.x[a0:] = 0.0
        tab._recompute_basic_values()
        tab.set_cost(np.concatenate([self.c[:a0], np.zeros(k)]))
        status, it2 = tab.primal(self.max_iter)
        return self._result(tab, status, it1 + it2)

    def _solve_warm(self, warm: _Tableau, lb_s, ub_s) -> LPResult | None:
        tab = warm.copy()
        tab.lb[:self.n] = lb_s
        tab.ub[:self.n] = ub_s
        nb = ~tab.is_basic
        # keep nonbasics on the side they sat on; this preserves dual feasibility
        on_upper = nb & (warm.x >= warm.ub - FEAS_TOL) & np.isfinite(tab.ub)
        tab.x = np.where(nb, np.where(on_upper, tab.ub, tab.lb), tab.x)
        tab._recompute_basic_values()
        if tab.dual_infeasibility() > 1e-7:
            return None
        status, it = tab.dual(self.max_iter)
        if status is LPStatus.ITERATION_LIMIT:
            return None
        if status is LPStatus.OPTIMAL:
            st2, it2 = tab.primal(self.max_iter)
            return self._result(tab, st2, it + it2)
        return LPResult(status, None, np.inf, it)

    def _result(self, tab: _Tableau, status: LPStatus, iters: int) -> LPResult:
        if status is not LPStatus.OPTIMAL:
            return LPResult(status, None, np.inf, iters)
        x = tab.x[:self.n].copy()
        return LPResult(status, x, float(self.lp.c @ x), iters, state=tab)


def solve_lp(lp: LinearProgram, max_iter: int = 50_000) -> LPResult:
    return SimplexSolver(lp, max_iter=max_iter).solve()


def check_optimality(result: LPResult, tol: float = 1e-8) -> tuple[float, float]:
    """Return (primal, dual) infeasibility of the final basis."""
    tab = result.state
    if tab is None:
        raise ValueError("result carries no basis")
    resid = tab.A @ tab.x - tab.b
    primal = max(tab.primal_infeasibility(), float(np.abs(resid).max(initial=0.0)))
    return primal, tab.dual_infeasibility()
