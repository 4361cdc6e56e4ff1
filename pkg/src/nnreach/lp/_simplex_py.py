"""Pure-numpy simplex pivot kernel.

Fallback for the compiled kernel in ``_simplex.pyx``; both implement the
same pivot sequence (Dantzig pricing, min-ratio leaving rule with ties
broken by smallest basis variable, permanent switch to Bland's rule after a
stall) so their results agree and can be cross-checked.
"""

import numpy as np

BACKEND = "numpy"


def iterate(T, basis, ncols, tol, bland_after, max_iter):
    """Pivot the tableau in place until optimal/unbounded/limit.

    T: (m+1, N+1) array, last row = reduced costs, last column = RHS.
    basis: int64 array of the m basic column indices, updated in place.
    Entering columns are restricted to ``j < ncols``.
    Returns (status, iterations): 0 optimal, 1 unbounded, 2 iteration limit.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    bland = False
    stall = 0
    last_obj = T[m, rhs]
    it = 0
    while it < max_iter:
        rc = T[m, :ncols]
        if bland:
            neg = np.flatnonzero(rc < -tol)
            if neg.size == 0:
                return 0, it
            j = int(neg[0])
        else:
            j = int(np.argmin(rc))
            if rc[j] >= -tol:
                return 0, it

        col = T[:m, j]
        mask = col > tol
        if not mask.any():
            return 1, it
        ratios = np.full(m, np.inf)
        np.divide(T[:m, rhs], col, out=ratios, where=mask)
        best = ratios.min()
        cand = np.flatnonzero(ratios == best)
        pr = int(cand[np.argmin(basis[cand])])

        piv = T[pr, j]
        T[pr, :] /= piv
        colv = T[:, j].copy()
        colv[pr] = 0.0
        T -= colv[:, None] * T[pr, :][None, :]
        T[:, j] = 0.0
        T[pr, j] = 1.0
        basis[pr] = j
        it += 1

        obj = T[m, rhs]
        if abs(obj - last_obj) > 1e-12:
            stall = 0
            last_obj = obj
        else:
            stall += 1
            if stall >= bland_after:
                bland = True
    return 2, it
