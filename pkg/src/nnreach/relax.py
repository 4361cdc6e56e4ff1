"""Per-node interval bounds, activation relaxations, and linear bound
propagation over general graphs.

All bounding here is *sound*: every computed enclosure contains the true
range of the node over the given input boxes.  The relaxation families are
also *inclusion monotone* -- shrinking a neuron's input interval shrinks
(never grows) its relaxed constraint set -- which is what makes the
one-shot/recursive tightness comparison hold at the numerical level and
not just in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GraphError,
    InvalidInterval,
    MissingPreactivation,
)
from .graph import CompGraph

# relaxation case codes for ReLU neurons
RELU_IDENTITY = 0  # lo >= 0, the neuron is linear
RELU_ZERO = 1      # hi <= 0, the neuron is constant zero
RELU_UNSTABLE = 2  # lo < 0 < hi

_CASE_NAMES = {RELU_IDENTITY: "identity", RELU_ZERO: "zero", RELU_UNSTABLE: "unstable"}


@dataclass(frozen=True)
class IntervalBound:
    """Elementwise box ``lo <= x <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise InvalidInterval(f"lo shape {lo.shape} != hi shape {hi.shape}")
        if np.any(lo > hi):
            raise InvalidInterval("interval has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def mid(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self):
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self):
        return self.hi - self.lo

    def intersect(self, other: "IntervalBound") -> "IntervalBound":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        # guard against inconsistent float noise between two sound bounds
        hi = np.maximum(hi, lo)
        return IntervalBound(lo, hi)

    def contains(self, x, tol=0.0):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, n, rng):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))


@dataclass(frozen=True)
class LineBounds:
    """Per-coordinate linear envelopes ``ls*x + li <= phi(x) <= us*x + ui``."""

    lower_slope: np.ndarray
    lower_icpt: np.ndarray
    upper_slope: np.ndarray
    upper_icpt: np.ndarray


@dataclass(frozen=True)
class ReluRelaxation(LineBounds):
    """Convex envelope data of elementwise ReLU on ``[lo, hi]``.

    For unstable coordinates the upper line passes through ``(lo, 0)`` and
    ``(hi, hi)``; the lower line is ``y >= alpha * x`` through the origin.
    """

    case: np.ndarray

    def case_name(self, i=0):
        return _CASE_NAMES[int(self.case[i])]


@dataclass(frozen=True)
class TanhRelaxation(LineBounds):
    pass


def _resolve_alpha(alpha_rule, lo, hi):
    if isinstance(alpha_rule, str):
        if alpha_rule == "adaptive":
            # pick the lower slope that minimises the relaxation area per neuron
            return np.where(hi >= -lo, 1.0, 0.0)
        raise ValueError(f"unknown alpha rule {alpha_rule!r}")
    alpha = float(alpha_rule)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return np.full_like(lo, alpha)


def relu_relaxation(lo, hi, alpha_rule="adaptive") -> ReluRelaxation:
    """Linear envelopes of ReLU on ``[lo, hi]`` (vectorised over coordinates).

    Unstable coordinates use the chord ``y <= hi/(hi-lo) * (x - lo)`` as the
    upper bound; the slope and intercept stay bounded because instability
    implies ``hi - lo >= max(hi, -lo)``, so no degenerate-interval guard is
    required.  Stable coordinates degenerate to the exact line (identity or
    zero), which also covers point intervals.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(lo > hi):
        raise InvalidInterval("relu relaxation needs lo <= hi")

    identity = lo >= 0.0
    zero = (hi <= 0.0) & ~identity
    unstable = ~identity & ~zero

    us = np.where(identity, 1.0, 0.0)
    ui = np.zeros_like(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(unstable, hi / (hi - lo), 0.0)
    us = np.where(unstable, slope, us)
    ui = np.where(unstable, -slope * lo, ui)

    ls = np.where(identity, 1.0, 0.0)
    alpha = _resolve_alpha(alpha_rule, lo, hi)
    ls = np.where(unstable, alpha, ls)
    li = np.zeros_like(lo)

    case = np.where(identity, RELU_IDENTITY, np.where(zero, RELU_ZERO, RELU_UNSTABLE))
    return ReluRelaxation(ls, li, us, ui, case.astype(np.int8))


def tanh_relaxation(lo, hi) -> TanhRelaxation:
    """Linear envelopes of tanh on ``[lo, hi]``.

    The lower line passes through ``(lo, tanh(lo))`` and the upper line
    through ``(hi, tanh(hi))``.  Each uses the chord slope when its whole
    interval sits in the convex (resp. concave) half-line, and otherwise the
    smaller endpoint derivative; since tanh' is unimodal that slope is a
    lower bound on tanh' over the interval, which keeps both lines on the
    correct side.  Point intervals degenerate to the constant tanh(lo).

    Both envelopes are inclusion monotone: a subinterval's lines lie inside
    the enclosing interval's lines on the common domain.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(lo > hi):
        raise InvalidInterval("tanh relaxation needs lo <= hi")

    t_lo = np.tanh(lo)
    t_hi = np.tanh(hi)
    point = hi == lo
    gap = np.where(point, 1.0, hi - lo)
    chord = (t_hi - t_lo) / gap
    lam = np.minimum(1.0 - t_lo**2, 1.0 - t_hi**2)

    ls = np.where(lo >= 0.0, chord, lam)
    us = np.where(hi <= 0.0, chord, lam)
    ls = np.where(point, 0.0, ls)
    us = np.where(point, 0.0, us)
    li = t_lo - ls * lo
    ui = t_hi - us * hi
    return TanhRelaxation(ls, li, us, ui)


def activation_lines(kind: str, ival: IntervalBound, alpha_rule="adaptive") -> LineBounds:
    if kind == "relu":
        return relu_relaxation(ival.lo, ival.hi, alpha_rule)
    if kind == "tanh":
        return tanh_relaxation(ival.lo, ival.hi)
    raise GraphError(f"node kind {kind!r} is not an activation")


# ---------------------------------------------------------------------------
# Interval propagation
# ---------------------------------------------------------------------------


def _iter_nodes(g: CompGraph, members, reverse=False):
    topo = g._topo if not reverse else reversed(g._topo)
    if members is None:
        yield from topo
    else:
        for nid in topo:
            if nid in members:
                yield nid


def interval_propagate(g: CompGraph, input_boxes, members=None) -> dict[int, IntervalBound]:
    """Sound interval enclosure for every node over the given input boxes.

    Affine nodes use midpoint/radius arithmetic, activations their monotone
    image.  ``members`` optionally restricts the walk to a subgraph whose
    boundary nodes all appear in ``input_boxes``.
    """
    ivals: dict[int, IntervalBound] = {}
    for nid, box in input_boxes.items():
        if box.dim != g.dims[nid]:
            raise InvalidInterval(
                f"box for node {nid} has dim {box.dim}, node has dim {g.dims[nid]}"
            )
        ivals[nid] = box

    for nid in _iter_nodes(g, members):
        if nid in ivals:
            continue
        op = g.ops[nid]
        if op.kind == "input":
            raise MissingPreactivation(f"no box given for input node {nid}")
        pre = [ivals[p] for p in g.preds[nid]]
        if op.kind == "affine":
            mid = np.concatenate([b.mid for b in pre])
            rad = np.concatenate([b.rad for b in pre])
            center = op.W @ mid + op.b
            spread = np.abs(op.W) @ rad
            ivals[nid] = IntervalBound(center - spread, center + spread)
        elif op.kind == "relu":
            ivals[nid] = IntervalBound(np.maximum(pre[0].lo, 0.0), np.maximum(pre[0].hi, 0.0))
        elif op.kind == "tanh":
            ivals[nid] = IntervalBound(np.tanh(pre[0].lo), np.tanh(pre[0].hi))
        elif op.kind == "add":
            ivals[nid] = IntervalBound(
                np.sum([b.lo for b in pre], axis=0), np.sum([b.hi for b in pre], axis=0)
            )
        elif op.kind == "concat":
            ivals[nid] = IntervalBound(
                np.concatenate([b.lo for b in pre]), np.concatenate([b.hi for b in pre])
            )
        else:  # pragma: no cover
            raise GraphError(f"unknown operator kind {op.kind!r}")
    return ivals


# ---------------------------------------------------------------------------
# Backward linear bound propagation
# ---------------------------------------------------------------------------


def _lines_for(g, nid, ivals, alpha_rule, cache):
    lines = cache.get(nid)
    if lines is None:
        pre = g.preds[nid][0]
        if pre not in ivals:
            raise MissingPreactivation(f"activation node {nid} lacks bounds for node {pre}")
        lines = activation_lines(g.ops[nid].kind, ivals[pre], alpha_rule)
        cache[nid] = lines
    return lines


def backward_bounds_matrix(
    g: CompGraph,
    out_node: int,
    C: np.ndarray,
    input_boxes: dict[int, IntervalBound],
    ivals: dict[int, IntervalBound],
    alpha_rule="adaptive",
    line_cache=None,
) -> np.ndarray:
    """Lower bounds of every row of ``C @ z[out_node]`` over the input boxes.

    Substitutes each activation by its linear envelope, choosing the lower
    or upper line per coordinate by the sign of the accumulated coefficient,
    then concretises the resulting affine functions at the boxes.  Nodes in
    ``input_boxes`` act as the boundary: coefficients reaching them are
    concretised there, so the same pass serves whole graphs and extracted
    subgraphs (with concretised interior nodes as boundary).
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    k = C.shape[0]
    lam: dict[int, np.ndarray] = {out_node: C.copy()}
    const = np.zeros(k)
    if line_cache is None:
        line_cache = {}

    if out_node in input_boxes:
        box = input_boxes[out_node]
        return const + np.minimum(C, 0.0) @ box.hi + np.maximum(C, 0.0) @ box.lo

    for nid in reversed(g._topo):
        coeff = lam.pop(nid, None)
        if coeff is None:
            continue
        if nid in input_boxes:
            box = input_boxes[nid]
            const += np.maximum(coeff, 0.0) @ box.lo + np.minimum(coeff, 0.0) @ box.hi
            continue
        op = g.ops[nid]
        if op.kind == "input":
            raise MissingPreactivation(f"input node {nid} has no box")
        preds = g.preds[nid]
        if op.kind == "affine":
            spread = coeff @ op.W
            const += coeff @ op.b
            off = 0
            for p in preds:
                d = g.dims[p]
                piece = spread[:, off : off + d]
                off += d
                lam[p] = lam[p] + piece if p in lam else piece.copy()
        elif op.kind in ("relu", "tanh"):
            lines = _lines_for(g, nid, ivals, alpha_rule, line_cache)
            pos = coeff >= 0.0
            slope = np.where(pos, lines.lower_slope, lines.upper_slope)
            icpt = np.where(pos, lines.lower_icpt, lines.upper_icpt)
            const += np.sum(coeff * icpt, axis=1)
            piece = coeff * slope
            p = preds[0]
            lam[p] = lam[p] + piece if p in lam else piece
        elif op.kind == "add":
            for p in preds:
                lam[p] = lam[p] + coeff if p in lam else coeff.copy()
        elif op.kind == "concat":
            off = 0
            for p in preds:
                d = g.dims[p]
                piece = coeff[:, off : off + d]
                off += d
                lam[p] = lam[p] + piece if p in lam else piece.copy()
        else:  # pragma: no cover
            raise GraphError(f"unknown operator kind {op.kind!r}")

    if lam:  # pragma: no cover - would indicate a malformed boundary
        raise MissingPreactivation(f"coefficients stranded at nodes {sorted(lam)}")
    return const


def backward_lin_prop(
    g: CompGraph,
    c: np.ndarray,
    input_boxes: dict[int, IntervalBound],
    preact: dict[int, IntervalBound],
    alpha_rule="adaptive",
    out_node=None,
) -> float:
    """Sound lower bound on ``c . z_out`` by backward substitution."""
    out = g.output_node if out_node is None else out_node
    lo = backward_bounds_matrix(g, out, np.asarray(c, dtype=float)[None, :], input_boxes, preact, alpha_rule)
    return float(lo[0])


# ---------------------------------------------------------------------------
# Node interval refinement (pre-activation bounds)
# ---------------------------------------------------------------------------


def node_intervals(
    g: CompGraph,
    input_boxes: dict[int, IntervalBound],
    method: str = "crown",
    alpha_rule: str | float = "adaptive",
    members=None,
    lp_options=None,
    input_polytopes=None,
    clamps=None,
    base=None,
) -> dict[int, IntervalBound] | None:
    """Intervals for all (sub)graph nodes, with activation inputs refined.

    ``method`` selects how the input interval of each activation is bounded,
    working through the graph inductively in topological order:

    - ``"interval"``: plain interval arithmetic only.
    - ``"crown"``: a backward linear-bound pass per activation input, using
      the envelopes of the activations already processed.
    - ``"lp"``: per-coordinate LP solves over the prefix subgraph, using the
      relaxation rows of the activations already processed.  Much tighter
      and much slower; intended for small graphs.

    Refined bounds are intersected with the interval-arithmetic ones (and
    with ``base`` when given), so the result is never looser than either.

    ``clamps`` maps a node id to ``[(coord, phase)]`` sign restrictions
    (phase 1: coordinate >= 0, phase 0: <= 0), used by branch-and-bound to
    push activation-phase hypotheses through the bounds.  Returns None when
    a clamp empties an interval.
    """
    if method not in ("interval", "crown", "lp"):
        raise ValueError(f"unknown preactivation method {method!r}")

    clamps = clamps or {}

    def clamp(nid, ival):
        if base is not None and nid in base:
            ival = ival.intersect(base[nid])
        items = clamps.get(nid)
        if not items:
            return ival
        lo = ival.lo.copy()
        hi = ival.hi.copy()
        for coord, phase in items:
            if phase == 1:
                lo[coord] = max(lo[coord], 0.0)
            else:
                hi[coord] = min(hi[coord], 0.0)
        if np.any(lo > hi):
            return None
        return IntervalBound(lo, hi)

    ivals: dict[int, IntervalBound] = {}
    for nid, b in input_boxes.items():
        b = clamp(nid, b)
        if b is None:
            return None
        ivals[nid] = b
    line_cache: dict[int, LineBounds] = {}
    refined: set[int] = set(input_boxes)
    boundary = {k: ivals[k] for k in input_boxes}

    if method == "lp":
        from .lp.build import build_lp  # local import: lp builds on top of relax
        from .lp.solver import solve_lp
        from .graph import extract_subgraph

    for nid in _iter_nodes(g, members):
        if nid in ivals:
            continue
        op = g.ops[nid]
        if op.kind in ("relu", "tanh"):
            p = g.preds[nid][0]
            if p not in refined and method != "interval":
                cur = ivals[p]
                if method == "crown":
                    dim = g.dims[p]
                    C = np.vstack([np.eye(dim), -np.eye(dim)])
                    vals = backward_bounds_matrix(
                        g, p, C, boundary, ivals, alpha_rule, line_cache
                    )
                    tight = IntervalBound(vals[:dim], -vals[dim:])
                else:
                    sub = extract_subgraph(g, set(boundary), p)
                    lp = build_lp(
                        g, sub, boundary, ivals, np.zeros(g.dims[p]), alpha_rule,
                        input_polytopes=input_polytopes,
                    )
                    dim = g.dims[p]
                    lo = np.empty(dim)
                    hi = np.empty(dim)
                    for j in range(dim):
                        e = np.zeros(dim)
                        e[j] = 1.0
                        lo[j] = solve_lp(lp, e, **(lp_options or {})).objective
                        hi[j] = -solve_lp(lp, -e, **(lp_options or {})).objective
                    tight = IntervalBound(lo, hi)
                merged = clamp(p, cur.intersect(tight))
                if merged is None:
                    return None
                ivals[p] = merged
                refined.add(p)
        # plain interval step for this node, reusing any refined predecessors
        sub_boxes = {q: ivals[q] for q in g.preds[nid]}
        step = interval_propagate(g, sub_boxes, members={nid, *g.preds[nid]})
        out = clamp(nid, step[nid])
        if out is None:
            return None
        ivals[nid] = out
    return ivals


# ---------------------------------------------------------------------------
# Forward linear bound propagation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearBoundFn:
    """Affine envelopes of a node in the flattened input variables.

    ``lower_A @ z + lower_b <= node <= upper_A @ z + upper_b`` for every z
    in the input box, with z the slot-order concatenation of the graph's
    input blocks.
    """

    lower_A: np.ndarray
    lower_b: np.ndarray
    upper_A: np.ndarray
    upper_b: np.ndarray

    def concretize(self, box: IntervalBound) -> IntervalBound:
        lo = (
            np.maximum(self.lower_A, 0.0) @ box.lo
            + np.minimum(self.lower_A, 0.0) @ box.hi
            + self.lower_b
        )
        hi = (
            np.maximum(self.upper_A, 0.0) @ box.hi
            + np.minimum(self.upper_A, 0.0) @ box.lo
            + self.upper_b
        )
        return IntervalBound(lo, np.maximum(hi, lo))


def _compose_affine(W, b, child: LinearBoundFn) -> LinearBoundFn:
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return LinearBoundFn(
        Wp @ child.lower_A + Wn @ child.upper_A,
        Wp @ child.lower_b + Wn @ child.upper_b + b,
        Wp @ child.upper_A + Wn @ child.lower_A,
        Wp @ child.upper_b + Wn @ child.lower_b + b,
    )


def _stack_lbf(parts: list[LinearBoundFn]) -> LinearBoundFn:
    return LinearBoundFn(
        np.vstack([p.lower_A for p in parts]),
        np.concatenate([p.lower_b for p in parts]),
        np.vstack([p.upper_A for p in parts]),
        np.concatenate([p.upper_b for p in parts]),
    )


def forward_lin_prop(
    g: CompGraph,
    input_boxes: dict[int, IntervalBound],
    alpha_rule="adaptive",
    members=None,
    boundary_order=None,
) -> dict[int, LinearBoundFn]:
    """Affine lower/upper envelopes for every node, composed forward.

    Activations are relaxed against the interval obtained by concretising
    their incoming envelope.  The relaxation slopes are nonnegative for both
    supported activations, so composition needs no sign split there.
    """
    order = list(boundary_order) if boundary_order is not None else list(g.input_nodes)
    offsets = {}
    off = 0
    for nid in order:
        offsets[nid] = off
        off += g.dims[nid]
    D = off
    box = IntervalBound(
        np.concatenate([input_boxes[nid].lo for nid in order]),
        np.concatenate([input_boxes[nid].hi for nid in order]),
    )

    out: dict[int, LinearBoundFn] = {}
    for nid in order:
        d = g.dims[nid]
        A = np.zeros((d, D))
        A[:, offsets[nid] : offsets[nid] + d] = np.eye(d)
        out[nid] = LinearBoundFn(A, np.zeros(d), A.copy(), np.zeros(d))

    for nid in _iter_nodes(g, members):
        if nid in out:
            continue
        op = g.ops[nid]
        if op.kind == "input":
            raise MissingPreactivation(f"no box given for input node {nid}")
        pre = [out[p] for p in g.preds[nid]]
        if op.kind == "affine":
            child = pre[0] if len(pre) == 1 else _stack_lbf(pre)
            out[nid] = _compose_affine(op.W, op.b, child)
        elif op.kind in ("relu", "tanh"):
            child = pre[0]
            ival = child.concretize(box)
            lines = activation_lines(op.kind, ival, alpha_rule)
            ls, us = lines.lower_slope, lines.upper_slope
            # slopes are in [0, 1] for both activations; composition keeps sides
            out[nid] = LinearBoundFn(
                ls[:, None] * child.lower_A,
                ls * child.lower_b + lines.lower_icpt,
                us[:, None] * child.upper_A,
                us * child.upper_b + lines.upper_icpt,
            )
        elif op.kind == "add":
            out[nid] = LinearBoundFn(
                np.sum([p.lower_A for p in pre], axis=0),
                np.sum([p.lower_b for p in pre], axis=0),
                np.sum([p.upper_A for p in pre], axis=0),
                np.sum([p.upper_b for p in pre], axis=0),
            )
        elif op.kind == "concat":
            out[nid] = _stack_lbf(pre)
        else:  # pragma: no cover
            raise GraphError(f"unknown operator kind {op.kind!r}")
    return out


def forward_support(
    g: CompGraph,
    c: np.ndarray,
    input_boxes: dict[int, IntervalBound],
    bounds: dict[int, LinearBoundFn] | None = None,
    alpha_rule="adaptive",
    members=None,
    boundary_order=None,
    out_node=None,
) -> float:
    """Lower bound on ``c . z_out`` from forward envelopes."""
    order = list(boundary_order) if boundary_order is not None else list(g.input_nodes)
    if bounds is None:
        bounds = forward_lin_prop(g, input_boxes, alpha_rule, members, order)
    fn = bounds[g.output_node if out_node is None else out_node]
    c = np.asarray(c, dtype=float)
    cp = np.maximum(c, 0.0)
    cn = np.minimum(c, 0.0)
    A = cp @ fn.lower_A + cn @ fn.upper_A
    b = cp @ fn.lower_b + cn @ fn.upper_b
    box = IntervalBound(
        np.concatenate([input_boxes[nid].lo for nid in order]),
        np.concatenate([input_boxes[nid].hi for nid in order]),
    )
    return float(b + np.maximum(A, 0.0) @ box.lo + np.minimum(A, 0.0) @ box.hi)
