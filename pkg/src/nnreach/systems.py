"""Benchmark dynamical systems, random instance generation, trajectory
sampling, and the soundness / counterexample-search harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import NNReachError
from .graph import (
    Add,
    Affine,
    CompGraph,
    Concat,
    Input,
    NetworkFile,
    ReLU,
    Tanh,
    build_graph,
    evaluate,
    network_from_dict,
)
from .relax import IntervalBound
from .reach import (
    Propagator,
    ReachResult,
    Template,
    one_shot_reach,
    recursive_reach,
)


class GraphBuilder:
    """Incremental node/edge accumulator for assembling graphs in code."""

    def __init__(self):
        self.nodes = []
        self.edges = []
        self.inputs = []

    def _new(self, op, dim, preds):
        nid = len(self.nodes)
        self.nodes.append((nid, op, dim))
        for slot, p in enumerate(preds):
            self.edges.append((p, nid, slot))
        return nid

    def add_input(self, dim):
        nid = self._new(Input(), dim, [])
        self.inputs.append(nid)
        return nid

    def affine(self, W, b, *preds):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return self._new(Affine(W, np.asarray(b, dtype=float)), W.shape[0], preds)

    def relu(self, pred, dim):
        return self._new(ReLU(), dim, [pred])

    def tanh(self, pred, dim):
        return self._new(Tanh(), dim, [pred])

    def add(self, dim, *preds):
        return self._new(Add(), dim, preds)

    def concat(self, dim, *preds):
        return self._new(Concat(), dim, preds)

    def splice(self, g: CompGraph, input_map: dict[int, int]) -> int:
        """Copy a whole graph in, wiring its input nodes to existing nodes;
        returns the id of the copied output node."""
        mapping = dict(input_map)
        for nid in g._topo:
            if g.is_input(nid):
                if nid not in mapping:
                    raise NNReachError(f"splice misses a wiring for input node {nid}")
                continue
            mapping[nid] = self._new(g.ops[nid], g.dims[nid], [mapping[p] for p in g.preds[nid]])
        return mapping[g.output_node]

    def build(self, output) -> CompGraph:
        return build_graph(self.nodes, self.edges, self.inputs, output)


def random_nnds(seed, n_x, n_w, widths, activation="relu") -> CompGraph:
    """Deterministic random feedforward dynamics ``x+ = net([x; w])``.

    ``widths`` lists the affine output dims; the last entry must equal
    ``n_x``.  Activations sit between consecutive affine layers, so a
    single-entry ``widths`` yields an affine system.  Weights are uniform
    with scale 1/sqrt(fan-in), which keeps interval ranges finite over the
    short horizons the property suites use.
    """
    widths = list(widths)
    if not widths:
        raise ValueError("widths must be nonempty")
    if widths[-1] != n_x:
        raise ValueError(f"last width {widths[-1]} must equal n_x={n_x}")
    if activation not in ("relu", "tanh"):
        raise ValueError(f"unknown activation {activation!r}")

    rng = np.random.default_rng(seed)
    b = GraphBuilder()
    x = b.add_input(n_x)
    if n_w > 0:
        w = b.add_input(n_w)
        cur = b.concat(n_x + n_w, x, w)
        in_dim = n_x + n_w
    else:
        cur = x
        in_dim = n_x

    for i, width in enumerate(widths):
        scale = 1.0 / np.sqrt(in_dim)
        W = rng.uniform(-scale, scale, size=(width, in_dim))
        bias = rng.uniform(-0.1, 0.1, size=width)
        cur = b.affine(W, bias, cur)
        if i < len(widths) - 1:
            cur = b.relu(cur, width) if activation == "relu" else b.tanh(cur, width)
        in_dim = width
    return b.build(cur)


# ---------------------------------------------------------------------------
# Trajectory sampling and the soundness audit
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryBatch:
    """Exact sampled trajectories plus the disturbance draws that made them."""

    states: np.ndarray            # (n, T+1, n_x)
    disturbances: np.ndarray | None  # (n, T, n_w) or None

    @property
    def n(self):
        return self.states.shape[0]

    @property
    def horizon(self):
        return self.states.shape[1] - 1


def sample_trajectories(f: CompGraph, X0: IntervalBound, W, T: int, n: int, seed) -> TrajectoryBatch:
    """n trajectories with x0 uniform in X0 and w_t uniform in W per step,
    evolved by exact forward evaluation of the one-step graph."""
    rng = np.random.default_rng(seed)
    n_x = f.dims[f.input_nodes[0]]
    dist_in = list(f.input_nodes[1:])
    n_w = sum(f.dims[d] for d in dist_in)

    states = np.empty((n, T + 1, n_x))
    states[:, 0, :] = X0.sample(n, rng)
    dists = None
    if n_w:
        if W is None:
            raise ValueError("dynamics has disturbance inputs; W is required")
        if isinstance(W, IntervalBound):
            lo = W.lo
            hi = W.hi
        else:
            lo = np.concatenate([W[d].lo for d in dist_in])
            hi = np.concatenate([W[d].hi for d in dist_in])
        dists = rng.uniform(lo, hi, size=(n, T, n_w))

    for t in range(T):
        vals = {f.input_nodes[0]: states[:, t, :]}
        off = 0
        for d in dist_in:
            k = f.dims[d]
            vals[d] = dists[:, t, off : off + k]
            off += k
        states[:, t + 1, :] = evaluate(f, vals)
    return TrajectoryBatch(states, dists)


def replay(f: CompGraph, batch: TrajectoryBatch) -> np.ndarray:
    """Re-evaluate the stored draws; equals ``batch.states`` bit-exactly."""
    n, T = batch.n, batch.horizon
    out = np.empty_like(batch.states)
    out[:, 0, :] = batch.states[:, 0, :]
    dist_in = list(f.input_nodes[1:])
    for t in range(T):
        vals = {f.input_nodes[0]: out[:, t, :]}
        off = 0
        for d in dist_in:
            k = f.dims[d]
            vals[d] = batch.disturbances[:, t, off : off + k]
            off += k
        out[:, t + 1, :] = evaluate(f, vals)
    return out


def soundness_audit(result: ReachResult, batch: TrajectoryBatch) -> np.ndarray:
    """Per-step worst containment violation of the sampled trajectories.

    Step t's value is max over trajectories and directions of
    ``support_i - c_i . x_t``; nonpositive (up to 1e-9) means every sample
    lies inside the reported set.
    """
    T = min(result.horizon, batch.horizon)
    out = np.empty(T + 1)
    for t in range(T + 1):
        poly = result.poly(t)
        proj = batch.states[:, t, :] @ poly.directions.T  # (n, N)
        out[t] = float(np.max(poly.support[None, :] - proj))
    return out


# ---------------------------------------------------------------------------
# Counterexample search: forward propagation, one-shot looser than recursive
# ---------------------------------------------------------------------------


@dataclass
class SearchResult:
    found: bool
    seed: int | None = None
    config: dict = field(default_factory=dict)
    step: int | None = None
    coord: int | None = None
    rel_gap: float = 0.0
    seeds_tried: int = 0

    def to_json_obj(self):
        return {
            "found": self.found,
            "seed": self.seed,
            "config": self.config,
            "step": self.step,
            "coord": self.coord,
            "rel_gap": self.rel_gap,
            "seeds_tried": self.seeds_tried,
        }


def _search_instance(seed):
    rng = np.random.default_rng(seed ^ 0xC0FFEE)
    hidden = int(rng.integers(4, 10))
    depth = int(rng.integers(1, 3))
    scale = float(rng.uniform(0.8, 2.0))
    center = rng.uniform(-0.5, 0.5, size=2)
    half = rng.uniform(0.1, 0.5, size=2)
    config = {
        "n_x": 2,
        "widths": [hidden] * depth + [2],
        "activation": "relu",
        "weight_gain": scale,
        "x0_lo": (center - half).tolist(),
        "x0_hi": (center + half).tolist(),
    }
    return config


def instance_from_config(seed, config) -> tuple[CompGraph, IntervalBound]:
    f = random_nnds(seed, config["n_x"], 0, config["widths"], config["activation"])
    gain = config.get("weight_gain", 1.0)
    if gain != 1.0:
        # rescale the affine weights in place via a rebuilt graph
        b = GraphBuilder()
        x = b.add_input(f.dims[f.input_nodes[0]])
        mapping = {f.input_nodes[0]: x}
        for nid in f._topo:
            if f.is_input(nid):
                continue
            op = f.ops[nid]
            preds = [mapping[p] for p in f.preds[nid]]
            if op.kind == "affine":
                mapping[nid] = b.affine(op.W * gain, op.b, *preds)
            elif op.kind == "relu":
                mapping[nid] = b.relu(preds[0], f.dims[nid])
            elif op.kind == "tanh":
                mapping[nid] = b.tanh(preds[0], f.dims[nid])
            else:  # pragma: no cover - generator emits chains only
                raise NNReachError(f"unexpected op {op.kind}")
        f = b.build(mapping[f.output_node])
    X0 = IntervalBound(np.array(config["x0_lo"]), np.array(config["x0_hi"]))
    return f, X0


def counterexample_search(
    seed_start=0,
    seed_stop=10_000,
    T=2,
    rel_gap=0.01,
    propagator: Propagator | None = None,
) -> SearchResult:
    """Scan random instances for one where forward propagation is *looser*
    in one-shot than recursively at horizon T.

    Existence at a given seed budget is empirical; exhausting the budget is
    reported, not raised.
    """
    p = propagator or Propagator("forward")
    tried = 0
    for seed in range(seed_start, seed_stop):
        config = _search_instance(seed)
        f, X0 = instance_from_config(seed, config)
        template = Template.box(2)
        tried += 1
        os_run = one_shot_reach(p, f, X0, None, T, template)
        re_run = recursive_reach(p, f, X0, None, T, template)
        os_w = os_run.widths()
        re_w = re_run.widths()
        for t in range(1, T + 1):
            denom = np.maximum(re_w[t], 1e-12)
            gaps = (os_w[t] - re_w[t]) / denom
            j = int(np.argmax(gaps))
            if gaps[j] > rel_gap:
                return SearchResult(True, seed, config, t, j, float(gaps[j]), tried)
    return SearchResult(False, seeds_tried=tried)


# ---------------------------------------------------------------------------
# Committed fixtures
# ---------------------------------------------------------------------------


@dataclass
class ScenarioFixture:
    name: str
    network: NetworkFile
    X0: IntervalBound
    W: IntervalBound | None
    horizon: int
    template: str
    notes: str = ""


def _fixture_root():
    return resources.files("nnreach.fixtures")


def fixture_text(name: str) -> str:
    return (_fixture_root() / name).read_text()


def load_manifest() -> dict:
    return json.loads(fixture_text("manifest.json"))


def load_fixture(name: str) -> ScenarioFixture:
    manifest = load_manifest()
    try:
        entry = manifest["scenarios"][name]
    except KeyError:
        raise NNReachError(f"unknown fixture {name!r}") from None
    net = network_from_dict(json.loads(fixture_text(entry["network"])))
    X0 = IntervalBound(np.array(entry["x0_lo"]), np.array(entry["x0_hi"]))
    W = None
    if "w_lo" in entry:
        W = IntervalBound(np.array(entry["w_lo"]), np.array(entry["w_hi"]))
    return ScenarioFixture(
        name, net, X0, W, int(entry["horizon"]), entry.get("template", "box"),
        entry.get("notes", ""),
    )


def assemble_residual_graph(A, B, policy: CompGraph, residual: CompGraph) -> CompGraph:
    """Closed loop ``x+ = A x + B u + r([x; u]) + w`` with ``u = policy(x)``.

    ``policy`` maps the state to a scalar-or-vector input command; the
    residual network consumes the concatenated ``[x; u]``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n_x = A.shape[0]
    n_u = B.shape[1]

    b = GraphBuilder()
    x = b.add_input(n_x)
    w = b.add_input(n_x)
    u = b.splice(policy, {policy.input_nodes[0]: x})
    xu = b.concat(n_x + n_u, x, u)
    r = b.splice(residual, {residual.input_nodes[0]: xu})
    ax = b.affine(A, np.zeros(n_x), x)
    bu = b.affine(B, np.zeros(n_x), u)
    lin = b.add(n_x, ax, bu)
    with_res = b.add(n_x, lin, r)
    out = b.add(n_x, with_res, w)
    return b.build(out)


def trajectories_to_csv(batch: TrajectoryBatch, path) -> None:
    """Dump trajectories as rows (traj, t, x1..xn) for external plotting."""
    n_x = batch.states.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj", "t"] + [f"x{i + 1}" for i in range(n_x)])
        for k in range(batch.n):
            for t in range(batch.horizon + 1):
                writer.writerow([k, t] + [repr(float(v)) for v in batch.states[k, t]])
