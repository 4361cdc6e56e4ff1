"""Shared oracles and generators.

The oracles here are deliberately independent of the code paths they
check: exhaustive vertex/pattern enumeration, Monte-Carlo sampling, and
plain forward evaluation.
"""

import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from nnreach.graph import CompGraph, evaluate
from nnreach.lp import VerificationLP, solve_lp
from nnreach.relax import IntervalBound


def vertex_enumeration_min(c, A_ub, b_ub, lo, hi, tol=1e-9):
    """Exact minimum of a bounded LP by enumerating all basis vertices.

    Stacks the inequality rows with the box faces and tests every n-subset
    as an active set; the optimum of a bounded feasible LP is attained at
    one of those intersection points.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows = [np.asarray(A_ub, dtype=float)] if len(b_ub) else []
    rhs = [np.asarray(b_ub, dtype=float)] if len(b_ub) else []
    rows.append(np.eye(n))
    rhs.append(np.asarray(hi, dtype=float))
    rows.append(-np.eye(n))
    rhs.append(-np.asarray(lo, dtype=float))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]

    best = np.inf
    for combo in itertools.combinations(range(m), n):
        A_sq = A[list(combo)]
        if abs(np.linalg.det(A_sq)) < 1e-12:
            continue
        v = np.linalg.solve(A_sq, b[list(combo)])
        if np.all(A @ v <= b + tol):
            best = min(best, float(c @ v))
    return best


def random_bounded_lp(seed, n_max=6, m_max=16):
    """Feasible bounded LP: random halfspaces through a known interior
    point, plus a box. Returns (c, A_ub, b_ub, lo, hi)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    x0 = rng.uniform(-0.5, 0.5, n)
    A = rng.normal(size=(m, n))
    slack = rng.uniform(0.1, 1.5, m)
    b = A @ x0 + slack
    lo = x0 - rng.uniform(0.5, 2.0, n)
    hi = x0 + rng.uniform(0.5, 2.0, n)
    c = rng.normal(size=n)
    return c, A, b, lo, hi


def pattern_rows(lp: VerificationLP, pattern):
    """Phase-fixing rows for a full activation pattern, written
    independently of the branch-and-bound implementation."""
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for idx, active in enumerate(pattern):
        xv, yv = (int(v) for v in lp.relu_pairs[idx])
        if active:
            rows += [r, r, r + 1]
            cols += [yv, xv, xv]
            vals += [1.0, -1.0, -1.0]  # y <= x and -x <= 0
        else:
            rows += [r, r + 1]
            cols += [yv, xv]
            vals += [1.0, 1.0]  # y <= 0 and x <= 0
        rhs += [0.0, 0.0]
        r += 2
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, lp.n_vars)), np.array(rhs)


def enumerate_exact_min(lp: VerificationLP, c=None, backend="auto"):
    """Exact ReLU minimum by brute force over all 2^k activation patterns."""
    k = lp.relu_pairs.shape[0]
    best = np.inf
    for pattern in itertools.product((0, 1), repeat=k):
        sol = solve_lp(lp, c, backend=backend, extra_ub=pattern_rows(lp, pattern))
        if sol.status == "optimal":
            best = min(best, sol.objective)
    return best


def sampled_min(g: CompGraph, c, input_boxes, n=10_000, seed=0):
    """Upper estimate of min c.f(z) over the box by uniform sampling."""
    rng = np.random.default_rng(seed)
    vals = {nid: box.sample(n, rng) for nid, box in input_boxes.items()}
    out = evaluate(g, vals)
    return float(np.min(out @ np.asarray(c, dtype=float)))


def sampled_outputs(g: CompGraph, input_boxes, n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    vals = {nid: box.sample(n, rng) for nid, box in input_boxes.items()}
    return evaluate(g, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def box(lo, hi):
    return IntervalBound(np.atleast_1d(np.asarray(lo, dtype=float)),
                         np.atleast_1d(np.asarray(hi, dtype=float)))
