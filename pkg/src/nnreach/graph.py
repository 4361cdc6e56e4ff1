"""Computational-graph IR for neural-network dynamical systems.

A network is a DAG of vector-valued nodes.  Node ids are dense integers
``0..L``; the ordered ``input_nodes`` are the independent nodes and
``output_node`` is the single node whose range is analysed.  The same
representation serves the one-step dynamics and its multi-step unrolling,
so every bounding method in the package operates on one structure.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArityMismatch,
    CycleDetected,
    DanglingEdge,
    DimensionMismatch,
    GraphError,
    StateDimMismatch,
    UnreachableOutput,
)


@dataclass(frozen=True, eq=False)
class Operator:
    """Base class for node operators; subclasses carry their parameters."""

    kind = "abstract"
    arity_min = 1

    def output_dim(self, in_dims):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Input(Operator):
    kind = "input"
    arity_min = 0

    def output_dim(self, in_dims):
        raise GraphError("input nodes have a declared dim, not a derived one")


@dataclass(frozen=True, eq=False)
class Affine(Operator):
    """y = W x + b where x is the slot-order concatenation of the inputs."""

    W: np.ndarray
    b: np.ndarray
    kind = "affine"

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if W.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"affine W has {W.shape[0]} rows but b has {b.shape[0]} entries"
            )
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    def output_dim(self, in_dims):
        if self.W.shape[1] != sum(in_dims):
            raise DimensionMismatch(
                f"affine W has {self.W.shape[1]} columns, inputs supply {sum(in_dims)}"
            )
        return self.W.shape[0]


@dataclass(frozen=True, eq=False)
class ReLU(Operator):
    kind = "relu"

    def output_dim(self, in_dims):
        if len(in_dims) != 1:
            raise ArityMismatch("relu takes exactly one input")
        return in_dims[0]


@dataclass(frozen=True, eq=False)
class Tanh(Operator):
    kind = "tanh"

    def output_dim(self, in_dims):
        if len(in_dims) != 1:
            raise ArityMismatch("tanh takes exactly one input")
        return in_dims[0]


@dataclass(frozen=True, eq=False)
class Add(Operator):
    kind = "add"
    arity_min = 2

    def output_dim(self, in_dims):
        if len(set(in_dims)) != 1:
            raise DimensionMismatch(f"add inputs must share a dim, got {in_dims}")
        return in_dims[0]


@dataclass(frozen=True, eq=False)
class Concat(Operator):
    kind = "concat"

    def output_dim(self, in_dims):
        return sum(in_dims)


ACTIVATION_KINDS = ("relu", "tanh")


@dataclass(frozen=True)
class SubgraphSpec:
    """Result of constraint extraction: the dependent nodes between declared
    boundary inputs and one output node."""

    input_nodes: frozenset[int]
    output_node: int
    member_nodes: frozenset[int]


class CompGraph:
    """Validated, immutable computational graph.

    Construction is single-threaded; instances are safe to share across
    threads afterwards.  Use :func:`build_graph` rather than the raw
    constructor.
    """

    __slots__ = ("ops", "dims", "preds", "input_nodes", "output_node", "_topo")

    def __init__(self, ops, dims, preds, input_nodes, output_node, topo):
        self.ops = tuple(ops)
        self.dims = tuple(int(d) for d in dims)
        self.preds = tuple(tuple(p) for p in preds)
        self.input_nodes = tuple(int(i) for i in input_nodes)
        self.output_node = int(output_node)
        self._topo = tuple(topo)

    def __len__(self):
        return len(self.ops)

    @property
    def n_nodes(self):
        return len(self.ops)

    @property
    def output_dim(self):
        return self.dims[self.output_node]

    def input_dim(self):
        return sum(self.dims[i] for i in self.input_nodes)

    def is_input(self, node):
        return self.ops[node].kind == "input"

    def activation_nodes(self):
        return [i for i, op in enumerate(self.ops) if op.kind in ACTIVATION_KINDS]


def topological_order(g: CompGraph) -> list[int]:
    """Topological order of ``g``; deterministic (ties broken by ascending id)."""
    return list(g._topo)


def _toposort(n_nodes, preds):
    succs = [[] for _ in range(n_nodes)]
    indeg = [0] * n_nodes
    for dst in range(n_nodes):
        for src in preds[dst]:
            succs[src].append(dst)
            indeg[dst] += 1
    ready = [i for i in range(n_nodes) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for s in succs[node]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, s)
    if len(order) != n_nodes:
        raise CycleDetected("graph contains a cycle")
    return order


def build_graph(nodes, edges, inputs, output) -> CompGraph:
    """Validate and freeze a graph.

    nodes:  iterable of (id, Operator, dim); ids must be dense 0..L.
    edges:  iterable of (src, dst, slot); slots per dst node must form a
            permutation of 0..arity-1.
    inputs: ordered iterable of input node ids.
    output: output node id.
    """
    nodes = list(nodes)
    if not nodes:
        raise GraphError("node list is empty")
    ids = [nid for nid, _, _ in nodes]
    n = len(nodes)
    if sorted(ids) != list(range(n)):
        raise GraphError(f"node ids must be dense 0..{n - 1}, got {sorted(ids)}")

    ops: list[Operator] = [None] * n
    dims = [0] * n
    for nid, op, dim in nodes:
        ops[nid] = op
        dims[nid] = int(dim)

    slot_map: list[dict[int, int]] = [{} for _ in range(n)]
    for src, dst, slot in edges:
        if not (0 <= src < n and 0 <= dst < n):
            raise DanglingEdge(f"edge ({src}->{dst}) references an unknown node")
        if slot in slot_map[dst]:
            raise ArityMismatch(f"node {dst} has two edges in slot {slot}")
        slot_map[dst][slot] = src

    preds: list[list[int]] = []
    for nid in range(n):
        slots = slot_map[nid]
        if sorted(slots) != list(range(len(slots))):
            raise ArityMismatch(
                f"node {nid} argument slots {sorted(slots)} are not 0..{len(slots) - 1}"
            )
        preds.append([slots[k] for k in range(len(slots))])

    inputs = [int(i) for i in inputs]
    input_set = set(inputs)
    if len(input_set) != len(inputs):
        raise GraphError("duplicate input node ids")
    for nid in range(n):
        op = ops[nid]
        if op.kind == "input":
            if preds[nid]:
                raise ArityMismatch(f"input node {nid} has predecessors")
            if nid not in input_set:
                raise GraphError(f"input-kind node {nid} missing from the input list")
        else:
            if nid in input_set:
                raise GraphError(f"declared input {nid} is not an input-kind node")
            if len(preds[nid]) < op.arity_min:
                raise ArityMismatch(
                    f"node {nid} ({op.kind}) needs >= {op.arity_min} inputs, has {len(preds[nid])}"
                )
            derived = op.output_dim([dims[p] for p in preds[nid]])
            if derived != dims[nid]:
                raise DimensionMismatch(
                    f"node {nid} ({op.kind}) declares dim {dims[nid]} but derives {derived}"
                )

    output = int(output)
    if not (0 <= output < n):
        raise DanglingEdge(f"output node {output} does not exist")

    topo = _toposort(n, preds)

    # the output must depend on at least one declared input
    seen = set()
    stack = [output]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(preds[nid])
    if not (seen & input_set):
        raise UnreachableOutput(f"output node {output} depends on no declared input")

    return CompGraph(ops, dims, preds, inputs, output, topo)


def evaluate(g: CompGraph, input_values, members=None, output=None) -> np.ndarray:
    """Exact forward pass in topological order.

    ``input_values`` is a dict {input node id: array} or a sequence aligned
    with ``g.input_nodes``.  Values may be single vectors ``(dim,)`` or
    batches ``(batch, dim)``; the result has matching shape.  Summation
    order inside each operator is fixed (slot-order concatenation, one
    matmul), so repeated calls with identical batch shapes are bit-exact;
    different batch shapes may differ at machine precision (BLAS kernels).

    ``members``/``output`` evaluate an extracted subgraph instead: values
    must then be given for every boundary node and only member nodes are
    walked.
    """
    if not isinstance(input_values, dict):
        vals_list = list(input_values)
        if len(vals_list) != len(g.input_nodes):
            raise DimensionMismatch(
                f"expected {len(g.input_nodes)} input arrays, got {len(vals_list)}"
            )
        input_values = dict(zip(g.input_nodes, vals_list))

    vals: dict[int, np.ndarray] = {}
    for nid, v in input_values.items():
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != g.dims[nid]:
            raise DimensionMismatch(
                f"input node {nid} expects dim {g.dims[nid]}, got {v.shape[-1]}"
            )
        vals[nid] = v

    for nid in g._topo:
        if members is not None and nid not in members:
            continue
        if nid in vals:
            continue
        op = g.ops[nid]
        if op.kind == "input":
            if members is None:
                raise DimensionMismatch(f"no value for input node {nid}")
            continue
        xs = [vals[p] for p in g.preds[nid]]
        if op.kind == "affine":
            x = xs[0] if len(xs) == 1 else np.concatenate(xs, axis=-1)
            vals[nid] = x @ op.W.T + op.b
        elif op.kind == "relu":
            vals[nid] = np.maximum(xs[0], 0.0)
        elif op.kind == "tanh":
            vals[nid] = np.tanh(xs[0])
        elif op.kind == "add":
            acc = xs[0]
            for x in xs[1:]:
                acc = acc + x
            vals[nid] = acc
        elif op.kind == "concat":
            vals[nid] = np.concatenate(xs, axis=-1)
        else:  # pragma: no cover - closed operator set
            raise GraphError(f"unknown operator kind {op.kind!r}")
    return vals[g.output_node if output is None else output]


def extract_subgraph(g: CompGraph, input_nodes, output_node) -> SubgraphSpec:
    """Collect the dependent nodes bounding ``output_node``, stopping at
    ``input_nodes``.

    Breadth-first from the output toward the inputs: a queue seeded with the
    output, an explored mark per node, and predecessor traversal that does
    not pass declared boundary nodes.  Boundary nodes may be dependent nodes
    of ``g`` whose range has been concretized elsewhere.
    """
    input_nodes = {int(i) for i in input_nodes}
    output_node = int(output_node)
    if output_node >= g.n_nodes:
        raise DanglingEdge(f"output node {output_node} does not exist")
    if output_node in input_nodes:
        raise GraphError("output node is itself a declared boundary input")

    queue = deque([output_node])
    explored = {output_node}
    members = set()
    touched_boundary = set()
    while queue:
        nid = queue.popleft()
        if g.is_input(nid) and nid not in input_nodes:
            raise UnreachableOutput(
                f"reached graph input {nid} which is not a declared boundary node"
            )
        members.add(nid)
        for p in g.preds[nid]:
            if p in input_nodes:
                touched_boundary.add(p)
                continue
            if p not in explored:
                explored.add(p)
                queue.append(p)
    if not touched_boundary:
        raise UnreachableOutput(
            f"output node {output_node} is not connected to any declared input"
        )
    return SubgraphSpec(frozenset(input_nodes), output_node, frozenset(members))


def unroll(f: CompGraph, T: int):
    """Compose the one-step dynamics ``T`` times into a single graph.

    The first input node of ``f`` is the state block; remaining input nodes
    form the (possibly empty) disturbance block and are replicated fresh for
    every step.  Returns ``(graph, state_nodes, dist_nodes)``:
    ``state_nodes[t]`` is the node holding the state after t steps
    (``state_nodes[0]`` is the initial-state input) and ``dist_nodes[t]``
    lists step t's fresh disturbance input nodes (t = 1..T), aligned with
    ``f.input_nodes[1:]``.
    """
    if T < 1:
        raise GraphError(f"horizon must be >= 1, got {T}")
    state_in = f.input_nodes[0]
    dist_in = list(f.input_nodes[1:])
    n_x = f.dims[state_in]
    if f.output_dim != n_x:
        raise StateDimMismatch(
            f"state input has dim {n_x} but output has dim {f.output_dim}"
        )

    nodes = [(0, Input(), n_x)]
    edges = []
    inputs = [0]
    next_id = 1
    state_nodes = {0: 0}
    dist_nodes: dict[int, list[int]] = {}
    topo = topological_order(f)

    for t in range(1, T + 1):
        mapping = {state_in: state_nodes[t - 1]}
        dist_nodes[t] = []
        for d in dist_in:
            mapping[d] = next_id
            dist_nodes[t].append(next_id)
            nodes.append((next_id, Input(), f.dims[d]))
            inputs.append(next_id)
            next_id += 1
        for nid in topo:
            if f.is_input(nid):
                continue
            mapping[nid] = next_id
            nodes.append((next_id, f.ops[nid], f.dims[nid]))
            for slot, p in enumerate(f.preds[nid]):
                edges.append((mapping[p], next_id, slot))
            next_id += 1
        state_nodes[t] = mapping[f.output_node]

    g = build_graph(nodes, edges, inputs, state_nodes[T])
    return g, state_nodes, dist_nodes


# ---------------------------------------------------------------------------
# JSON network format (the interchange point with the fixture trainer)
# ---------------------------------------------------------------------------

_OP_NAMES = {"input", "affine", "relu", "tanh", "add", "concat"}


@dataclass
class NetworkFile:
    """A network plus the state/disturbance split of its input blocks."""

    graph: CompGraph
    state_dim: int
    disturbance_dim: int
    path: str | None = field(default=None, compare=False)


def network_to_dict(g: CompGraph, state_dim: int, disturbance_dim: int) -> dict:
    nodes = []
    for nid in range(g.n_nodes):
        op = g.ops[nid]
        entry = {
            "id": nid,
            "op": op.kind,
            "dim": g.dims[nid],
            "inputs": list(g.preds[nid]),
        }
        if op.kind == "affine":
            entry["W"] = [list(map(float, row)) for row in op.W]
            entry["b"] = [float(v) for v in op.b]
        nodes.append(entry)
    return {
        "inputs": list(g.input_nodes),
        "output": g.output_node,
        "state_dim": int(state_dim),
        "disturbance_dim": int(disturbance_dim),
        "nodes": nodes,
    }


def network_from_dict(doc: dict) -> NetworkFile:
    try:
        raw_nodes = doc["nodes"]
        inputs = doc["inputs"]
        output = doc["output"]
        state_dim = int(doc["state_dim"])
        disturbance_dim = int(doc["disturbance_dim"])
    except KeyError as exc:
        raise GraphError(f"network document is missing field {exc}") from exc

    nodes = []
    edges = []
    for entry in raw_nodes:
        kind = entry["op"]
        if kind not in _OP_NAMES:
            raise GraphError(f"unknown operator {kind!r} in network file")
        if kind == "input":
            op = Input()
        elif kind == "affine":
            op = Affine(np.array(entry["W"], dtype=float), np.array(entry["b"], dtype=float))
        elif kind == "relu":
            op = ReLU()
        elif kind == "tanh":
            op = Tanh()
        elif kind == "add":
            op = Add()
        else:
            op = Concat()
        nodes.append((int(entry["id"]), op, int(entry["dim"])))
        for slot, src in enumerate(entry.get("inputs", [])):
            edges.append((int(src), int(entry["id"]), slot))

    g = build_graph(nodes, edges, inputs, output)
    declared = [g.dims[i] for i in g.input_nodes]
    if declared[0] != state_dim:
        raise StateDimMismatch(
            f"first input block has dim {declared[0]}, state_dim says {state_dim}"
        )
    if sum(declared[1:]) != disturbance_dim:
        raise DimensionMismatch(
            f"disturbance blocks sum to {sum(declared[1:])}, "
            f"disturbance_dim says {disturbance_dim}"
        )
    return NetworkFile(g, state_dim, disturbance_dim)


def save_network(g: CompGraph, state_dim: int, disturbance_dim: int, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(g, state_dim, disturbance_dim), fh)


def load_network(path) -> NetworkFile:
    with open(path) as fh:
        doc = json.load(fh)
    net = network_from_dict(doc)
    net.path = str(path)
    return net
