"""Reachable-set over-approximation over a finite horizon.

A *propagator* bounds the output range of a network over a bounded input
set by computing, for each direction c of a fixed template, a sound lower
bound J on ``c . output``; the resulting polytope ``{z | c_i.z >= J_i}``
over-approximates the output set.  Two frameworks chain propagators over a
horizon:

- recursive: each step feeds the previous step's polytope (plus its
  bounding box) forward as the state input set;
- one-shot: each horizon t is bounded directly on the t-step unrolled
  network from the initial set and t fresh disturbance blocks.

Both operate on the same unrolled graph, so step subgraphs are literally
identical networks and the frameworks differ only in where dependent nodes
get concretised.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import LPError, IterationLimit, NNReachError, TemplateMismatch
from .graph import CompGraph, SubgraphSpec, extract_subgraph, unroll
from .lp import branch_and_bound, build_lp, solve_lp
from .lp.bnb import BnBContext
from .lp.solver import simplex_solve
from .relax import (
    IntervalBound,
    backward_bounds_matrix,
    forward_lin_prop,
    forward_support,
    node_intervals,
)

SEPARABLE_METHODS = frozenset({"interval", "backward", "lp", "bnb"})
METHODS = ("interval", "forward", "backward", "lp", "bnb")


@dataclass(frozen=True)
class Template:
    """Fixed outward bounding directions (unit rows) in output space."""

    directions: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.directions, dtype=float))
        norms = np.linalg.norm(D, axis=1)
        if np.any(norms == 0):
            raise ValueError("template contains a zero direction")
        object.__setattr__(self, "directions", D / norms[:, None])

    @property
    def n_dirs(self):
        return self.directions.shape[0]

    @property
    def dim(self):
        return self.directions.shape[1]

    @staticmethod
    def box(n: int) -> "Template":
        D = np.zeros((2 * n, n))
        for i in range(n):
            D[2 * i, i] = 1.0
            D[2 * i + 1, i] = -1.0
        return Template(D, name="box")

    @staticmethod
    def octagon(n: int) -> "Template":
        """Box directions plus all normalised two-coordinate sign patterns."""
        rows = [Template.box(n).directions]
        for i in range(n):
            for j in range(i + 1, n):
                for si in (1.0, -1.0):
                    for sj in (1.0, -1.0):
                        d = np.zeros(n)
                        d[i], d[j] = si, sj
                        rows.append(d[None, :] / np.sqrt(2.0))
        return Template(np.vstack(rows), name="octagon")

    @staticmethod
    def preset(name: str, n: int) -> "Template":
        if name == "box":
            return Template.box(n)
        if name == "octagon":
            return Template.octagon(n)
        raise ValueError(f"unknown template preset {name!r}")

    def box_direction_rows(self):
        """Indices (pos, neg) such that directions[pos[j]] = +e_j and
        directions[neg[j]] = -e_j, or None if some axis is missing."""
        n = self.dim
        pos = np.full(n, -1)
        neg = np.full(n, -1)
        for i, d in enumerate(self.directions):
            j = int(np.argmax(np.abs(d)))
            if abs(abs(d[j]) - 1.0) < 1e-12 and np.sum(np.abs(d) > 1e-12) == 1:
                if d[j] > 0 and pos[j] < 0:
                    pos[j] = i
                elif d[j] < 0 and neg[j] < 0:
                    neg[j] = i
        if np.any(pos < 0) or np.any(neg < 0):
            return None
        return pos, neg

    def spans_positively(self) -> bool:
        """True iff ``{z | directions @ z >= -1}`` is bounded."""
        n = self.dim
        A_ub = -self.directions
        b_ub = np.ones(self.n_dirs)
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for j in range(n):
            for sign in (1.0, -1.0):
                e = np.zeros(n)
                e[j] = sign
                sol = simplex_solve(e, np.zeros((0, n)), np.zeros(0), A_ub, b_ub, lo, hi)
                if sol.status != "optimal":
                    return False
        return True


@dataclass
class PolytopeApprox:
    """Template polytope ``{z | directions_i . z >= support_i}`` plus a box
    enclosure of it (used to seed the next step's interval bookkeeping)."""

    directions: np.ndarray
    support: np.ndarray
    box: IntervalBound
    dir_status: tuple[str, ...] = ()

    @property
    def n_dirs(self):
        return self.directions.shape[0]

    @classmethod
    def from_box(cls, template: Template, box: IntervalBound) -> "PolytopeApprox":
        D = template.directions
        support = np.maximum(D, 0.0) @ box.lo + np.minimum(D, 0.0) @ box.hi
        return cls(D.copy(), support, box, ("ok",) * D.shape[0])

    def halfspaces(self):
        """(C, d) with the set equal to {z | C z >= d}."""
        return self.directions, self.support

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.directions @ x >= self.support - tol))

    def violation(self, x) -> float:
        """max_i (support_i - c_i . x); <= 0 iff x lies inside."""
        x = np.asarray(x, dtype=float)
        return float(np.max(self.support - self.directions @ x))


def _box_from_supports(template: Template, support: np.ndarray) -> IntervalBound:
    """A box containing {z | C z >= support}.

    Uses the template's own axis directions when present (exact, no solver
    noise); otherwise falls back to one small LP per face with a safety
    margin on the solver tolerance.
    """
    axes = template.box_direction_rows()
    if axes is not None:
        pos, neg = axes
        return IntervalBound(support[pos], -support[neg])
    n = template.dim
    A_ub = -template.directions
    b_ub = -support
    lo_inf = np.full(n, -np.inf)
    hi_inf = np.full(n, np.inf)
    lo = np.empty(n)
    hi = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        a = simplex_solve(e, np.zeros((0, n)), np.zeros(0), A_ub, b_ub, lo_inf, hi_inf)
        b = simplex_solve(-e, np.zeros((0, n)), np.zeros(0), A_ub, b_ub, lo_inf, hi_inf)
        if a.status != "optimal" or b.status != "optimal":
            raise LPError("template polytope is unbounded; directions must span positively")
        pad_a = 1e-9 * (1.0 + abs(a.objective))
        pad_b = 1e-9 * (1.0 + abs(b.objective))
        lo[j] = a.objective - pad_a
        hi[j] = -b.objective + pad_b
    return IntervalBound(lo, hi)


@dataclass(frozen=True)
class Propagator:
    """A bounding method plus its configuration.

    method: "interval", "forward", "backward", "lp", or "bnb".
    alpha_rule: lower-slope rule for unstable ReLU envelopes ("adaptive" or
        a constant in [0, 1]).  Comparisons that rely on a fixed relaxation
        family per neuron (the one-shot/recursive ordering) should pin a
        constant; the default follows the per-neuron area heuristic.
    preact: how activation input intervals are bounded ("crown" backward
        passes, "interval" arithmetic, or "lp" per-neuron solves).
    support_margin_*: subtracted from every emitted support value so that
        solver tolerance can never make a bound unsound.
    """

    method: str
    alpha_rule: str | float = "adaptive"
    preact: str = "crown"
    lp_backend: str = "auto"
    support_margin_abs: float = 2e-9
    support_margin_rel: float = 1e-8
    bnb_time_limit: float | None = None
    bnb_max_nodes: int = 200_000
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown propagator method {self.method!r}")

    @property
    def separable(self) -> bool:
        return self.method in SEPARABLE_METHODS

    def margin(self, value: float) -> float:
        return self.support_margin_abs + self.support_margin_rel * abs(value)


def _split_input_sets(input_sets):
    boxes = {}
    polys = {}
    for nid, s in input_sets.items():
        if isinstance(s, PolytopeApprox):
            boxes[nid] = s.box
            C, d = s.halfspaces()
            polys[nid] = (C, d)
        else:
            boxes[nid] = s
    return boxes, polys


def propagate(
    p: Propagator,
    g: CompGraph,
    input_sets,
    template: Template,
    subgraph: SubgraphSpec | None = None,
) -> PolytopeApprox:
    """Bound the subgraph output with the selected method, one sound lower
    bound per template direction.

    ``input_sets`` maps each boundary node to an IntervalBound or a
    PolytopeApprox (whose halfspaces join the LP and whose box seeds the
    interval bookkeeping).  A failed direction degrades to the interval
    bound for that direction and is flagged in ``dir_status``.
    """
    if subgraph is None:
        subgraph = extract_subgraph(g, set(g.input_nodes), g.output_node)
    out = subgraph.output_node
    if template.dim != g.dims[out]:
        raise ValueError(
            f"template dim {template.dim} != output dim {g.dims[out]}"
        )
    boxes, polys = _split_input_sets(input_sets)
    members = subgraph.member_nodes
    dirs = template.directions

    preact_method = "interval" if p.method == "interval" else p.preact
    ivals = node_intervals(
        g, boxes, method=preact_method, alpha_rule=p.alpha_rule, members=members,
        input_polytopes=polys or None,
    )
    out_box = ivals[out]
    fallback = np.maximum(dirs, 0.0) @ out_box.lo + np.minimum(dirs, 0.0) @ out_box.hi

    status = ["ok"] * template.n_dirs
    if p.method == "interval":
        support = fallback.copy()
    elif p.method == "forward":
        order = sorted(subgraph.input_nodes)
        bounds = forward_lin_prop(g, boxes, p.alpha_rule, members, order)
        support = np.array(
            [
                forward_support(g, c, boxes, bounds, p.alpha_rule, members, order, out)
                for c in dirs
            ]
        )
    elif p.method == "backward":
        support = backward_bounds_matrix(g, out, dirs, boxes, ivals, p.alpha_rule)
    elif p.method in ("lp", "bnb"):
        lp = build_lp(
            g, subgraph, boxes, ivals, np.zeros(g.dims[out]), p.alpha_rule,
            input_polytopes=polys or None,
        )
        ctx = None
        if p.method == "bnb":
            ctx = BnBContext(g, subgraph, boxes, ivals, p.alpha_rule, polys or None)

        def solve_dir(i):
            c = lp.objective_for(dirs[i])
            try:
                if p.method == "lp":
                    sol = solve_lp(lp, c, backend=p.lp_backend)
                    if sol.status != "optimal":
                        raise LPError(f"direction LP status {sol.status}")
                    return sol.objective, "ok"
                res = branch_and_bound(
                    lp, c,
                    time_limit=p.bnb_time_limit,
                    max_nodes=p.bnb_max_nodes,
                    backend=p.lp_backend,
                    context=ctx,
                )
                return res.bound, ("ok" if res.complete else "incomplete")
            except (LPError, IterationLimit):
                return fallback[i], "fallback"

        if p.threads > 1:
            with ThreadPoolExecutor(max_workers=p.threads) as pool:
                results = list(pool.map(solve_dir, range(template.n_dirs)))
        else:
            results = [solve_dir(i) for i in range(template.n_dirs)]
        support = np.array([r[0] for r in results])
        status = [r[1] for r in results]
        # an LP bound can never be looser than the interval bound it relaxes
        support = np.maximum(support, fallback)
    else:  # pragma: no cover
        raise ValueError(p.method)

    margins = p.support_margin_abs + p.support_margin_rel * np.abs(support)
    support = support - margins
    box = _box_from_supports(template, support)
    return PolytopeApprox(dirs.copy(), support, box, tuple(status))


@dataclass
class StepBound:
    t: int
    poly: PolytopeApprox
    wall_ms: float
    status: str  # "ok" | "solver-incomplete"


@dataclass
class ReachResult:
    framework: str  # "recursive" | "one-shot"
    template: Template
    steps: list[StepBound] = field(default_factory=list)

    @property
    def horizon(self):
        return len(self.steps) - 1

    def poly(self, t: int) -> PolytopeApprox:
        return self.steps[t].poly

    def widths(self) -> np.ndarray:
        """Per-step box widths, shape (T+1, n)."""
        return np.stack([s.poly.box.width for s in self.steps])

    def to_json_obj(self):
        return [
            {
                "t": s.t,
                "directions": [[float(v) for v in row] for row in s.poly.directions],
                "support": [float(v) for v in s.poly.support],
                "box_lo": [float(v) for v in s.poly.box.lo],
                "box_hi": [float(v) for v in s.poly.box.hi],
                "wall_ms": float(s.wall_ms),
                "status": s.status,
            }
            for s in self.steps
        ]

    @classmethod
    def from_json_obj(cls, obj, framework="unknown"):
        steps = []
        for entry in obj:
            poly = PolytopeApprox(
                np.array(entry["directions"], dtype=float),
                np.array(entry["support"], dtype=float),
                IntervalBound(np.array(entry["box_lo"]), np.array(entry["box_hi"])),
            )
            steps.append(StepBound(int(entry["t"]), poly, float(entry["wall_ms"]), entry["status"]))
        template = Template(steps[0].poly.directions)
        return cls(framework, template, steps)


def _step_status(poly: PolytopeApprox) -> str:
    return "ok" if all(s == "ok" for s in poly.dir_status) else "solver-incomplete"


def _disturbance_sets(f: CompGraph, W):
    """Normalise W into {one-step disturbance node id: box}."""
    dist_in = list(f.input_nodes[1:])
    if not dist_in:
        if W is not None:
            raise ValueError("dynamics has no disturbance inputs but W was given")
        return {}
    if W is None:
        raise ValueError("dynamics has disturbance inputs; W is required")
    if isinstance(W, IntervalBound):
        if len(dist_in) == 1:
            return {dist_in[0]: W}
        # split one box across the disturbance blocks in input order
        out = {}
        off = 0
        for d in dist_in:
            k = f.dims[d]
            out[d] = IntervalBound(W.lo[off : off + k], W.hi[off : off + k])
            off += k
        if off != W.dim:
            raise ValueError(f"W has dim {W.dim}, disturbance blocks need {off}")
        return out
    return {d: W[d] for d in dist_in}


def _interval_fallback_step(p, g, input_sets, template, sub):
    fb = replace(p, method="interval")
    return propagate(fb, g, input_sets, template, sub)


def recursive_reach(
    p: Propagator,
    f: CompGraph,
    X0: IntervalBound,
    W,
    T: int,
    template: Template,
) -> ReachResult:
    """Step-by-step reachability: each step's polytope (halfspaces plus its
    bounding box) becomes the next step's state input set; the disturbance
    set enters fresh every step."""
    g, state_nodes, dist_nodes = unroll(f, T)
    w_sets = _disturbance_sets(f, W)
    res = ReachResult("recursive", template)
    res.steps.append(StepBound(0, PolytopeApprox.from_box(template, X0), 0.0, "ok"))
    current: IntervalBound | PolytopeApprox = X0
    for t in range(1, T + 1):
        boundary = {state_nodes[t - 1], *dist_nodes[t]}
        sub = extract_subgraph(g, boundary, state_nodes[t])
        input_sets = {state_nodes[t - 1]: current}
        for d_orig, d_new in zip(f.input_nodes[1:], dist_nodes[t]):
            input_sets[d_new] = w_sets[d_orig]
        t0 = time.perf_counter()
        try:
            poly = propagate(p, g, input_sets, template, sub)
        except NNReachError:
            poly = _interval_fallback_step(p, g, input_sets, template, sub)
            poly = PolytopeApprox(poly.directions, poly.support, poly.box,
                                  ("fallback",) * poly.n_dirs)
        wall = (time.perf_counter() - t0) * 1e3
        res.steps.append(StepBound(t, poly, wall, _step_status(poly)))
        current = poly
    return res


def one_shot_reach(
    p: Propagator,
    f: CompGraph,
    X0: IntervalBound,
    W,
    T: int,
    template: Template,
) -> ReachResult:
    """Direct reachability on the unrolled dynamics: horizon t is bounded on
    the t-step composition from the initial set and t fresh disturbance
    blocks, with no intermediate concretisation."""
    g, state_nodes, dist_nodes = unroll(f, T)
    w_sets = _disturbance_sets(f, W)
    res = ReachResult("one-shot", template)
    res.steps.append(StepBound(0, PolytopeApprox.from_box(template, X0), 0.0, "ok"))
    for t in range(1, T + 1):
        boundary = {state_nodes[0]}
        input_sets = {state_nodes[0]: X0}
        for s in range(1, t + 1):
            for d_orig, d_new in zip(f.input_nodes[1:], dist_nodes[s]):
                boundary.add(d_new)
                input_sets[d_new] = w_sets[d_orig]
        sub = extract_subgraph(g, boundary, state_nodes[t])
        t0 = time.perf_counter()
        try:
            poly = propagate(p, g, input_sets, template, sub)
        except NNReachError:
            poly = _interval_fallback_step(p, g, input_sets, template, sub)
            poly = PolytopeApprox(poly.directions, poly.support, poly.box,
                                  ("fallback",) * poly.n_dirs)
        wall = (time.perf_counter() - t0) * 1e3
        res.steps.append(StepBound(t, poly, wall, _step_status(poly)))
    return res


@dataclass
class TightnessStep:
    t: int
    gaps: np.ndarray  # support(a) - support(b) per direction
    a_contained_in_b: bool


def compare_tightness(a: ReachResult, b: ReachResult, tol: float = 1e-9) -> list[TightnessStep]:
    """Per-step, per-direction support gaps between two runs on the same
    template; with identical templates, a is contained in b at step t iff
    every gap is nonnegative."""
    if a.horizon != b.horizon:
        raise TemplateMismatch(f"horizons differ: {a.horizon} vs {b.horizon}")
    if a.template.directions.shape != b.template.directions.shape or not np.allclose(
        a.template.directions, b.template.directions, atol=1e-12
    ):
        raise TemplateMismatch("direction templates differ")
    out = []
    for sa, sb in zip(a.steps, b.steps):
        gaps = sa.poly.support - sb.poly.support
        out.append(TightnessStep(sa.t, gaps, bool(np.all(gaps >= -tol))))
    return out


def check_avoid(result: ReachResult, avoid: list[IntervalBound]) -> list[str]:
    """Per-step verdicts against unsafe boxes: "safe" iff the step polytope
    is disjoint from every avoid box (LP feasibility per pair), else
    "unknown" -- an over-approximation can never certify "unsafe"."""
    verdicts = []
    for s in result.steps:
        poly = s.poly
        verdict = "safe"
        for box in avoid:
            lo = np.maximum(poly.box.lo, box.lo)
            hi = np.minimum(poly.box.hi, box.hi)
            if np.any(lo > hi):
                continue  # boxes already disjoint
            C, d = poly.halfspaces()
            n = C.shape[1]
            sol = simplex_solve(
                np.zeros(n), np.zeros((0, n)), np.zeros(0), -C, -d, lo, hi
            )
            if sol.status == "optimal":
                verdict = "unknown"
                break
        verdicts.append(verdict)
    return verdicts
