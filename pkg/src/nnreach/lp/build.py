"""Assembly of the node-wise verification LP.

Every subgraph node owns one variable block.  Constraint rows are emitted
per node and tagged with the owning node id, and each row only references
variables of that node and its predecessors, so the constraint system is
separable by construction (auditable by a row scan).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import MissingPreactivation, UnboundedInput
from ..graph import CompGraph, SubgraphSpec
from ..relax import relu_relaxation, tanh_relaxation


@dataclass
class VerificationLP:
    """minimize c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi."""

    n_vars: int
    blocks: dict[int, tuple[int, int]]  # node id -> (offset, dim)
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_owner: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    ub_owner: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    c: np.ndarray
    output_node: int
    # unstable ReLU bookkeeping for branch-and-bound: variable columns
    # (x_var, y_var), the pre-activation interval, and the owning
    # (pre-activation node, coordinate) of each unstable neuron
    relu_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    relu_bounds: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    relu_meta: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def n_rows(self):
        return self.b_eq.shape[0] + self.b_ub.shape[0]

    def objective_for(self, direction) -> np.ndarray:
        off, dim = self.blocks[self.output_node]
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (dim,):
            raise ValueError(f"direction has shape {direction.shape}, output dim is {dim}")
        c = np.zeros(self.n_vars)
        c[off : off + dim] = direction
        return c

    def dump_rows(self) -> str:
        """Plain-text row dump for external cross-checks."""
        lines = [f"vars {self.n_vars}"]
        for name, A, b, owner, rel in (
            ("eq", self.A_eq, self.b_eq, self.eq_owner, "="),
            ("ub", self.A_ub, self.b_ub, self.ub_owner, "<="),
        ):
            A = A.tocsr()
            for i in range(b.shape[0]):
                row = A.getrow(i)
                terms = " + ".join(f"{v:.17g}*x{j}" for j, v in zip(row.indices, row.data))
                lines.append(f"{name}[{i}] node={owner[i]}: {terms} {rel} {b[i]:.17g}")
        for j in range(self.n_vars):
            lines.append(f"bound x{j} in [{self.lo[j]:.17g}, {self.hi[j]:.17g}]")
        return "\n".join(lines)


class _Rows:
    """Incremental COO triplet accumulator, one owner tag per row."""

    def __init__(self):
        self.r, self.c, self.v, self.b, self.owner = [], [], [], [], []
        self.n_rows = 0

    def add(self, rows, cols, vals, rhs, owner):
        rows = np.asarray(rows, dtype=np.int64)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        self.r.append(rows + self.n_rows)
        self.c.append(np.asarray(cols, dtype=np.int64))
        self.v.append(np.asarray(vals, dtype=float))
        self.b.append(rhs)
        self.owner.append(np.full(rhs.shape[0], owner, dtype=np.int64))
        self.n_rows += rhs.shape[0]

    def build(self, n_vars):
        if self.n_rows == 0:
            return sp.csr_matrix((0, n_vars)), np.zeros(0), np.zeros(0, dtype=np.int64)
        A = sp.coo_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
            shape=(self.n_rows, n_vars),
        ).tocsr()
        return A, np.concatenate(self.b), np.concatenate(self.owner)


def build_lp(
    g: CompGraph,
    subgraph: SubgraphSpec,
    input_sets,
    preact,
    c,
    alpha_rule="adaptive",
    input_polytopes=None,
) -> VerificationLP:
    """Assemble the verification LP for a subgraph.

    input_sets: box per boundary input node.  input_polytopes optionally
    adds halfspace rows ``C z >= d`` for an input node (its box must still
    be supplied so every variable stays box-bounded).  preact supplies an
    interval for every member node; activation nodes contribute their
    relaxation rows built from the interval of their predecessor, affine,
    add and concat nodes contribute equality rows.  The objective is the
    given direction over the output node's block.
    """
    members = subgraph.member_nodes
    boundary = subgraph.input_nodes
    out = subgraph.output_node

    blocks: dict[int, tuple[int, int]] = {}
    offset = 0
    for nid in g._topo:
        if nid in boundary or nid in members:
            blocks[nid] = (offset, g.dims[nid])
            offset += g.dims[nid]
    n_vars = offset

    lo = np.empty(n_vars)
    hi = np.empty(n_vars)
    for nid, (off, dim) in blocks.items():
        if nid in boundary:
            if nid not in input_sets:
                raise UnboundedInput(f"boundary node {nid} has no input box")
            box = input_sets[nid]
        else:
            box = preact.get(nid)
            if box is None:
                raise MissingPreactivation(f"no interval for member node {nid}")
        lo[off : off + dim] = box.lo
        hi[off : off + dim] = box.hi
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedInput("every variable needs finite box bounds")

    eq = _Rows()
    ub = _Rows()
    relu_pairs = []
    relu_bounds = []
    relu_meta = []

    if input_polytopes:
        for nid, (C, d) in input_polytopes.items():
            if nid not in blocks:
                continue
            C = np.atleast_2d(np.asarray(C, dtype=float))
            d = np.asarray(d, dtype=float).ravel()
            off, dim = blocks[nid]
            k = C.shape[0]
            rows = np.repeat(np.arange(k), dim)
            cols = np.tile(np.arange(off, off + dim), k)
            ub.add(rows, cols, (-C).ravel(), -d, nid)

    for nid in g._topo:
        if nid not in members or nid in boundary:
            continue
        op = g.ops[nid]
        off, dim = blocks[nid]
        out_idx = np.arange(off, off + dim)

        if op.kind == "affine":
            pre_idx = np.concatenate(
                [np.arange(blocks[p][0], blocks[p][0] + g.dims[p]) for p in g.preds[nid]]
            )
            n_in = pre_idx.shape[0]
            rows = np.concatenate([np.arange(dim), np.repeat(np.arange(dim), n_in)])
            cols = np.concatenate([out_idx, np.tile(pre_idx, dim)])
            vals = np.concatenate([np.ones(dim), -op.W.ravel()])
            eq.add(rows, cols, vals, op.b, nid)

        elif op.kind == "add":
            rows = [np.arange(dim)]
            cols = [out_idx]
            vals = [np.ones(dim)]
            for p in g.preds[nid]:
                poff = blocks[p][0]
                rows.append(np.arange(dim))
                cols.append(np.arange(poff, poff + dim))
                vals.append(-np.ones(dim))
            eq.add(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.zeros(dim), nid)

        elif op.kind == "concat":
            cursor = 0
            rows, cols, vals = [], [], []
            for p in g.preds[nid]:
                poff, pdim = blocks[p][0], g.dims[p]
                rows.append(np.arange(cursor, cursor + pdim))
                cols.append(out_idx[cursor : cursor + pdim])
                vals.append(np.ones(pdim))
                rows.append(np.arange(cursor, cursor + pdim))
                cols.append(np.arange(poff, poff + pdim))
                vals.append(-np.ones(pdim))
                cursor += pdim
            eq.add(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.zeros(dim), nid)

        elif op.kind == "relu":
            p = g.preds[nid][0]
            ival = preact.get(p) if p not in boundary else input_sets[p]
            if ival is None:
                raise MissingPreactivation(f"relu node {nid} lacks bounds for node {p}")
            x_idx = np.arange(blocks[p][0], blocks[p][0] + dim)
            rel = relu_relaxation(ival.lo, ival.hi, alpha_rule)
            stable_id = np.flatnonzero(rel.case == 0)
            stable_zero = np.flatnonzero(rel.case == 1)
            unstable = np.flatnonzero(rel.case == 2)

            if stable_id.size:
                k = stable_id.size
                eq.add(
                    np.concatenate([np.arange(k), np.arange(k)]),
                    np.concatenate([out_idx[stable_id], x_idx[stable_id]]),
                    np.concatenate([np.ones(k), -np.ones(k)]),
                    np.zeros(k),
                    nid,
                )
            if stable_zero.size:
                k = stable_zero.size
                eq.add(np.arange(k), out_idx[stable_zero], np.ones(k), np.zeros(k), nid)
            if unstable.size:
                k = unstable.size
                y_u = out_idx[unstable]
                x_u = x_idx[unstable]
                s = rel.upper_slope[unstable]
                t = rel.upper_icpt[unstable]
                # y >= 0 ; y >= x ; y <= s x + t
                rows = np.concatenate([np.arange(k), np.repeat(np.arange(k, 2 * k), 2), np.repeat(np.arange(2 * k, 3 * k), 2)])
                cols = np.concatenate([y_u, np.stack([x_u, y_u], axis=1).ravel(), np.stack([y_u, x_u], axis=1).ravel()])
                vals = np.concatenate([-np.ones(k), np.tile([1.0, -1.0], k), np.stack([np.ones(k), -s], axis=1).ravel()])
                rhs = np.concatenate([np.zeros(2 * k), t])
                ub.add(rows, cols, vals, rhs, nid)
                relu_pairs.append(np.stack([x_u, y_u], axis=1))
                relu_bounds.append(np.stack([ival.lo[unstable], ival.hi[unstable]], axis=1))
                relu_meta.append(np.stack([np.full(k, p, dtype=np.int64), unstable], axis=1))

        elif op.kind == "tanh":
            p = g.preds[nid][0]
            ival = preact.get(p) if p not in boundary else input_sets[p]
            if ival is None:
                raise MissingPreactivation(f"tanh node {nid} lacks bounds for node {p}")
            x_idx = np.arange(blocks[p][0], blocks[p][0] + dim)
            lines = tanh_relaxation(ival.lo, ival.hi)
            # y <= us x + ui ; y >= ls x + li
            rows = np.concatenate([np.repeat(np.arange(dim), 2), np.repeat(np.arange(dim, 2 * dim), 2)])
            cols = np.concatenate([np.stack([out_idx, x_idx], axis=1).ravel(), np.stack([x_idx, out_idx], axis=1).ravel()])
            vals = np.concatenate(
                [
                    np.stack([np.ones(dim), -lines.upper_slope], axis=1).ravel(),
                    np.stack([lines.lower_slope, -np.ones(dim)], axis=1).ravel(),
                ]
            )
            rhs = np.concatenate([lines.upper_icpt, -lines.lower_icpt])
            ub.add(rows, cols, vals, rhs, nid)

        elif op.kind == "input":  # pragma: no cover - inputs sit on the boundary
            raise UnboundedInput(f"graph input {nid} must be a boundary node")

    A_eq, b_eq, eq_owner = eq.build(n_vars)
    A_ub, b_ub, ub_owner = ub.build(n_vars)
    lp = VerificationLP(
        n_vars=n_vars,
        blocks=blocks,
        A_eq=A_eq,
        b_eq=b_eq,
        eq_owner=eq_owner,
        A_ub=A_ub,
        b_ub=b_ub,
        ub_owner=ub_owner,
        lo=lo,
        hi=hi,
        c=np.zeros(n_vars),
        output_node=out,
    )
    if relu_pairs:
        lp.relu_pairs = np.concatenate(relu_pairs, axis=0)
        lp.relu_bounds = np.concatenate(relu_bounds, axis=0)
        lp.relu_meta = np.concatenate(relu_meta, axis=0)
    lp.c = lp.objective_for(c)
    return lp
