"""Two-phase dense simplex with a compiled kernel, and size-based
delegation of large instances to scipy's HiGHS interface.

The simplex itself is self-contained: standard-form conversion, artificial
variables for phase 1, Dantzig pricing with a permanent switch to Bland's
rule after a cycling-suspicion stall, and an explicit pivot cap that is
surfaced as an error -- an aborted solve is never reported as a bound.
Large verification LPs (long unrolled horizons) are routed to HiGHS by the
``"auto"`` backend; the spec'd desk-scale path always runs in-house.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import IterationLimit, LPError
from .build import VerificationLP

if os.environ.get("NNREACH_PURE_SIMPLEX"):
    from . import _simplex_py as _kernel
else:
    try:
        from . import _simplex as _kernel  # compiled extension
    except ImportError:  # pragma: no cover - exercised when ext not built
        from . import _simplex_py as _kernel

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
MAX_ITER = 1_000_000

# beyond this size the "auto" backend hands off to HiGHS
AUTO_SIMPLEX_MAX_ROWS = 420
AUTO_SIMPLEX_MAX_COLS = 600


def simplex_backend() -> str:
    """Name of the active pivot kernel ("cython" or "numpy")."""
    return _kernel.BACKEND


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray | None = None

    @property
    def optimal(self):
        return self.status == "optimal"


def _as_matrices(lp, c, extra_ub):
    c = lp.c if c is None else (c if c.shape == (lp.n_vars,) else lp.objective_for(c))
    A_ub, b_ub = lp.A_ub, lp.b_ub
    if extra_ub is not None:
        A_x, b_x = extra_ub
        A_ub = sp.vstack([A_ub, sp.csr_matrix(A_x)], format="csr")
        b_ub = np.concatenate([b_ub, np.asarray(b_x, dtype=float)])
    return c, lp.A_eq, lp.b_eq, A_ub, b_ub, lp.lo, lp.hi


def solve_lp(lp: VerificationLP, c=None, backend="auto", extra_ub=None,
             tol=FEAS_TOL, max_iter=MAX_ITER) -> LPSolution:
    """Minimise ``c . x`` over the LP; ``c`` defaults to ``lp.c`` and may be
    given as a direction over the output block.

    extra_ub: optional (A, b) inequality rows appended at solve time (used
    by branch-and-bound to fix activation phases).
    """
    c = np.asarray(c, dtype=float) if c is not None else None
    c, A_eq, b_eq, A_ub, b_ub, lo, hi = _as_matrices(lp, c, extra_ub)
    m = b_eq.shape[0] + b_ub.shape[0]
    if backend == "auto":
        backend = (
            "simplex"
            if m <= AUTO_SIMPLEX_MAX_ROWS and lp.n_vars <= AUTO_SIMPLEX_MAX_COLS
            else "highs"
        )
    if backend == "highs":
        return _solve_highs(c, A_eq, b_eq, A_ub, b_ub, lo, hi)
    if backend != "simplex":
        raise ValueError(f"unknown LP backend {backend!r}")
    return simplex_solve(c, A_eq, b_eq, A_ub, b_ub, lo, hi, tol=tol, max_iter=max_iter)


def _solve_highs(c, A_eq, b_eq, A_ub, b_ub, lo, hi):
    from scipy.optimize import linprog

    bounds = np.column_stack([lo, hi])
    res = linprog(
        c,
        A_ub=A_ub if b_ub.size else None,
        b_ub=b_ub if b_ub.size else None,
        A_eq=A_eq if b_eq.size else None,
        b_eq=b_eq if b_eq.size else None,
        bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9,
        },
    )
    if res.status == 0:
        return LPSolution("optimal", float(res.fun), np.asarray(res.x))
    if res.status == 2:
        return LPSolution("infeasible", np.inf)
    if res.status == 3:
        return LPSolution("unbounded", -np.inf)
    if res.status == 1:
        raise IterationLimit("HiGHS hit its iteration limit")
    raise LPError(f"HiGHS failed: {res.message}")  # pragma: no cover


def _pivot(T, basis, pr, pc):
    """One pivot step outside the kernel (drive-out of artificials)."""
    T[pr, :] /= T[pr, pc]
    colv = T[:, pc].copy()
    colv[pr] = 0.0
    T -= colv[:, None] * T[pr, :][None, :]
    T[:, pc] = 0.0
    T[pr, pc] = 1.0
    basis[pr] = pc


def simplex_solve(c, A_eq, b_eq, A_ub, b_ub, lo, hi, tol=FEAS_TOL, max_iter=MAX_ITER) -> LPSolution:
    """Two-phase dense tableau simplex on general bounded-variable input.

    Variables with finite lower bound are shifted to be nonnegative; free
    variables are split into positive/negative parts; finite upper bounds
    become inequality rows.  Bland's rule engages after
    ``5 * (rows + cols)`` pivots without objective progress.
    """
    c = np.asarray(c, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = c.shape[0]
    A_eq = sp.csr_matrix(A_eq) if not sp.issparse(A_eq) else A_eq.tocsr()
    A_ub = sp.csr_matrix(A_ub) if not sp.issparse(A_ub) else A_ub.tocsr()
    if np.any(lo > hi):
        return LPSolution("infeasible", np.inf)

    finite_lo = np.isfinite(lo)
    shift = np.where(finite_lo, lo, 0.0)
    free = ~finite_lo
    free_idx = np.flatnonzero(free)
    n_free = free_idx.shape[0]
    n_cols = n + n_free  # shifted originals plus negative parts of free vars

    def expand(A):
        """Append negated copies of the free-variable columns."""
        if n_free == 0:
            return A.toarray() if sp.issparse(A) else np.asarray(A)
        A = A.tocsc() if sp.issparse(A) else sp.csc_matrix(A)
        return np.hstack([A.toarray(), -A[:, free_idx].toarray()])

    b_eq2 = b_eq - A_eq @ shift if b_eq.size else b_eq
    b_ub2 = b_ub - A_ub @ shift if b_ub.size else b_ub

    # finite upper bounds become rows over the shifted/split variables
    up_idx = np.flatnonzero(np.isfinite(hi))
    n_up = up_idx.shape[0]
    rows_eq = expand(A_eq) if b_eq.size else np.zeros((0, n_cols))
    rows_ub = expand(A_ub) if b_ub.size else np.zeros((0, n_cols))
    if n_up:
        U = np.zeros((n_up, n_cols))
        U[np.arange(n_up), up_idx] = 1.0
        in_free = free[up_idx]
        if in_free.any():
            # column of the negative part for those free variables
            pos_in_free = np.searchsorted(free_idx, up_idx[in_free])
            U[np.flatnonzero(in_free), n + pos_in_free] = -1.0
        rows_ub = np.vstack([rows_ub, U])
        b_ub2 = np.concatenate([b_ub2, hi[up_idx] - shift[up_idx]])

    m_eq = rows_eq.shape[0]
    m_ub = rows_ub.shape[0]
    m = m_eq + m_ub

    c2 = np.concatenate([c, -c[free_idx]]) if n_free else c.copy()

    # tableau: [structurals | slacks | artificials | rhs]
    A = np.vstack([rows_eq, rows_ub]) if m else np.zeros((0, n_cols))
    b = np.concatenate([b_eq2, b_ub2]) if m else np.zeros(0)
    slack = np.zeros((m, m_ub))
    if m_ub:
        slack[m_eq:, :] = np.eye(m_ub)

    neg = b < 0
    A[neg] = -A[neg]
    slack[neg] = -slack[neg]
    b = np.abs(b)

    # artificials: every eq row, and ub rows whose slack got flipped
    need_art = np.ones(m, dtype=bool)
    need_art[m_eq:] = neg[m_eq:]
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.shape[0]
    n_sl = n_cols + m_ub

    T = np.zeros((m + 1, n_sl + n_art + 1))
    T[:m, :n_cols] = A
    T[:m, n_cols : n_cols + m_ub] = slack
    if n_art:
        T[art_rows, n_sl + np.arange(n_art)] = 1.0
    T[:m, -1] = b

    basis = np.empty(m, dtype=np.int64)
    basis[~need_art] = n_cols + (np.flatnonzero(~need_art) - m_eq)
    basis[art_rows] = n_sl + np.arange(n_art)

    bland_after = 5 * (m + n_sl)

    if n_art:
        # phase 1: minimise the artificial sum (priced out against the basis)
        T[m, :] = -T[art_rows, :].sum(axis=0)
        T[m, n_sl : n_sl + n_art] = 0.0
        status, it1 = _kernel.iterate(T, basis, n_sl, tol, bland_after, max_iter)
        if status == 2:
            raise IterationLimit(f"simplex phase 1 exceeded {max_iter} pivots")
        if status == 1:  # pragma: no cover - phase 1 is bounded below
            raise LPError("phase 1 reported unbounded")
        if -T[m, -1] > 1e-7 * max(1.0, np.abs(b).max() if m else 1.0):
            return LPSolution("infeasible", np.inf)
        # drive residual artificials out of the basis, dropping redundant rows
        drop = []
        for i in np.flatnonzero(basis >= n_sl):
            piv_col = -1
            for j in range(n_sl):
                if abs(T[i, j]) > 1e-8:
                    piv_col = j
                    break
            if piv_col < 0:
                drop.append(i)
            else:
                _pivot(T, basis, i, piv_col)
        if drop:
            keep = np.setdiff1d(np.arange(m), drop)
            T = np.ascontiguousarray(np.vstack([T[keep], T[m:]]))
            basis = basis[keep]
            m = keep.shape[0]

    # phase 2 on the tableau without artificial columns
    T2 = np.ascontiguousarray(np.hstack([T[:, :n_sl], T[:, -1:]]))
    T2[m, :] = 0.0
    T2[m, :n_cols] = c2
    for i in range(m):
        cb = T2[m, basis[i]]
        if cb != 0.0:
            T2[m, :] -= cb * T2[i, :]
    status, it2 = _kernel.iterate(T2, basis, n_sl, tol, bland_after, max_iter)
    if status == 2:
        raise IterationLimit(f"simplex phase 2 exceeded {max_iter} pivots")
    if status == 1:
        return LPSolution("unbounded", -np.inf)

    xh = np.zeros(n_sl)
    xh[basis] = T2[:m, -1]
    x = shift + xh[:n]
    if n_free:
        x[free_idx] -= xh[n : n + n_free]
    return LPSolution("optimal", float(c @ x), x)
