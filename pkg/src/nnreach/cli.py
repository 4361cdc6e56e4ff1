"""Scenario-driven command line: load a network plus a verification job,
run a framework/propagator matrix, and emit results, comparisons, verdicts
and plot-ready data.

Exit codes for ``run``: 0 all steps safe (or no avoid sets), 2 some step
unknown, 1 input or solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NNReachError, ScenarioError, UnknownDemo
from .graph import load_network
from .relax import IntervalBound
from .reach import (
    Propagator,
    ReachResult,
    Template,
    check_avoid,
    compare_tightness,
    one_shot_reach,
    recursive_reach,
)
from . import systems

log = logging.getLogger("nnreach")

DEMOS = (
    "counterexample-forward",
    "duffing-lp-templates",
    "cartpole-feedforward",
    "cartpole-residual",
)

_PROPAGATOR_FIELDS = (
    "method", "alpha_rule", "preact", "lp_backend",
    "support_margin_abs", "support_margin_rel",
    "bnb_time_limit", "bnb_max_nodes", "threads",
)


@dataclass
class Scenario:
    """A verification job, fully determined by its file (all randomness is
    seeded through it)."""

    network: str
    x0: IntervalBound
    horizon: int
    w: IntervalBound | None = None
    framework: str = "both"
    propagator: dict = field(default_factory=lambda: {"method": "lp"})
    template: str | list = "box"
    avoid: list[IntervalBound] = field(default_factory=list)
    seed: int = 0
    output: str | None = None

    @staticmethod
    def _box(obj, name):
        try:
            return IntervalBound(np.array(obj["lo"], dtype=float), np.array(obj["hi"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"field '{name}': expected {{lo: [...], hi: [...]}} ({exc})")

    @classmethod
    def parse(cls, doc: dict, base_dir: Path | None = None) -> "Scenario":
        for required in ("network", "x0", "horizon"):
            if required not in doc:
                raise ScenarioError(f"field '{required}': missing")
        horizon = doc["horizon"]
        if not isinstance(horizon, int) or horizon < 1:
            raise ScenarioError(f"field 'horizon': must be an integer >= 1, got {horizon!r}")
        framework = doc.get("framework", "both")
        if framework not in ("recursive", "one-shot", "both"):
            raise ScenarioError(f"field 'framework': unknown value {framework!r}")
        prop = doc.get("propagator", {"method": "lp"})
        if "method" not in prop:
            raise ScenarioError("field 'propagator.method': missing")
        for key in prop:
            if key not in _PROPAGATOR_FIELDS:
                raise ScenarioError(f"field 'propagator.{key}': unknown option")
        template = doc.get("template", "box")
        if isinstance(template, str):
            if template not in ("box", "octagon"):
                raise ScenarioError(f"field 'template': unknown preset {template!r}")
        elif not isinstance(template, list):
            raise ScenarioError("field 'template': preset name or direction list")
        network = doc["network"]
        if base_dir is not None and not os.path.isabs(network):
            network = str(base_dir / network)
        return cls(
            network=network,
            x0=cls._box(doc["x0"], "x0"),
            horizon=horizon,
            w=cls._box(doc["w"], "w") if doc.get("w") else None,
            framework=framework,
            propagator=dict(prop),
            template=template,
            avoid=[cls._box(b, f"avoid[{i}]") for i, b in enumerate(doc.get("avoid", []))],
            seed=int(doc.get("seed", 0)),
            output=doc.get("output"),
        )

    def to_json_obj(self) -> dict:
        doc = {
            "network": self.network,
            "x0": {"lo": self.x0.lo.tolist(), "hi": self.x0.hi.tolist()},
            "horizon": self.horizon,
            "framework": self.framework,
            "propagator": dict(self.propagator),
            "template": self.template,
            "seed": self.seed,
        }
        if self.w is not None:
            doc["w"] = {"lo": self.w.lo.tolist(), "hi": self.w.hi.tolist()}
        if self.avoid:
            doc["avoid"] = [{"lo": b.lo.tolist(), "hi": b.hi.tolist()} for b in self.avoid]
        if self.output:
            doc["output"] = self.output
        return doc

    def make_propagator(self, threads=None) -> Propagator:
        kw = dict(self.propagator)
        if threads is not None:
            kw["threads"] = threads
        return Propagator(**kw)

    def make_template(self, n: int) -> Template:
        if isinstance(self.template, str):
            return Template.preset(self.template, n)
        t = Template(np.array(self.template, dtype=float))
        if not t.spans_positively():
            raise ScenarioError("field 'template': directions do not span positively")
        return t


def _setup_logging():
    level = os.environ.get("NNREACH_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
    log.info("wrote %s", path)


def _write_comparison(path: Path, rec: ReachResult, osr: ReachResult):
    rows = [("t", "kind", "index", "recursive", "one_shot", "gap")]
    for t in range(rec.horizon + 1):
        rw = rec.poly(t).box.width
        ow = osr.poly(t).box.width
        for j in range(rw.shape[0]):
            rows.append((t, "width", j, repr(float(rw[j])), repr(float(ow[j])), repr(float(rw[j] - ow[j]))))
        rs = rec.poly(t).support
        os_ = osr.poly(t).support
        for j in range(rs.shape[0]):
            rows.append((t, "support", j, repr(float(rs[j])), repr(float(os_[j])), repr(float(os_[j] - rs[j]))))
        rows.append((t, "wall_ms", 0, repr(rec.steps[t].wall_ms), repr(osr.steps[t].wall_ms), ""))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    log.info("wrote %s", path)


def _write_boxes_csv(path: Path, result: ReachResult):
    rows = [("t", "coord", "lo", "hi")]
    for s in result.steps:
        for j in range(s.poly.box.dim):
            rows.append((s.t, j, repr(float(s.poly.box.lo[j])), repr(float(s.poly.box.hi[j]))))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def cmd_run(args) -> int:
    path = Path(args.scenario)
    try:
        with open(path) as fh:
            doc = json.load(fh)
        scenario = Scenario.parse(doc, base_dir=path.parent)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out or scenario.output or path.with_suffix(""))
    stem = path.stem
    try:
        net = load_network(scenario.network)
        f = net.graph
        if scenario.x0.dim != net.state_dim:
            raise ScenarioError(
                f"field 'x0': dim {scenario.x0.dim} != network state_dim {net.state_dim}"
            )
        if net.disturbance_dim and (scenario.w is None or scenario.w.dim != net.disturbance_dim):
            raise ScenarioError(
                f"field 'w': network needs a disturbance box of dim {net.disturbance_dim}"
            )
        if not net.disturbance_dim and scenario.w is not None:
            raise ScenarioError("field 'w': network has no disturbance inputs")
        prop = scenario.make_propagator(threads=args.threads)
        template = Template.preset(scenario.template, net.state_dim) if isinstance(
            scenario.template, str
        ) else scenario.make_template(net.state_dim)

        results: dict[str, ReachResult] = {}
        if scenario.framework in ("recursive", "both"):
            log.info("running recursive framework, T=%d", scenario.horizon)
            results["recursive"] = recursive_reach(
                prop, f, scenario.x0, scenario.w, scenario.horizon, template
            )
        if scenario.framework in ("one-shot", "both"):
            log.info("running one-shot framework, T=%d", scenario.horizon)
            results["one-shot"] = one_shot_reach(
                prop, f, scenario.x0, scenario.w, scenario.horizon, template
            )
    except (NNReachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for name, result in results.items():
        _write_json(out_dir / f"{stem}_{name}.json", result.to_json_obj())
    if len(results) == 2:
        _write_comparison(out_dir / f"{stem}_comparison.csv", results["recursive"], results["one-shot"])

    exit_code = 0
    if scenario.avoid:
        verdicts = {}
        for name, result in results.items():
            v = check_avoid(result, scenario.avoid)
            verdicts[name] = v
            if any(step != "safe" for step in v):
                exit_code = 2
        _write_json(out_dir / f"{stem}_verdicts.json", verdicts)
        for name, v in verdicts.items():
            print(f"{name}: " + " ".join(f"t{t}={s}" for t, s in enumerate(v)))
    return exit_code


def _demo_out(args, name) -> Path:
    return Path(args.out or f"demo_{name}")


def _run_fixture_matrix(fixture, prop, templates, frameworks, out_dir, horizon=None):
    f = fixture.network.graph
    T = horizon or fixture.horizon
    results = {}
    for tname in templates:
        template = Template.preset(tname, fixture.network.state_dim)
        for fw in frameworks:
            runner = recursive_reach if fw == "recursive" else one_shot_reach
            log.info("%s / %s / %s, T=%d", fixture.name, tname, fw, T)
            res = runner(prop, f, fixture.X0, fixture.W, T, template)
            results[(tname, fw)] = res
            _write_json(out_dir / f"{fixture.name}_{tname}_{fw}.json", res.to_json_obj())
            _write_boxes_csv(out_dir / f"{fixture.name}_{tname}_{fw}_boxes.csv", res)
    batch = systems.sample_trajectories(f, fixture.X0, fixture.W, T, 200, seed=0)
    systems.trajectories_to_csv(batch, out_dir / f"{fixture.name}_trajectories.csv")
    return results


def cmd_demo(args) -> int:
    name = args.name
    if name not in DEMOS:
        print(f"error: unknown demo {name!r}; choose from {', '.join(DEMOS)}", file=sys.stderr)
        return 1
    out_dir = _demo_out(args, name)
    out_dir.mkdir(parents=True, exist_ok=True)

    if name == "counterexample-forward":
        manifest = systems.load_manifest()
        record = manifest.get("counterexample")
        if not record or not record.get("found"):
            budget = record.get("seeds_tried", 0) if record else 0
            report = {"found": False, "seeds_tried": budget,
                      "note": "search exhausted its seed budget; see release notes"}
            _write_json(out_dir / "gap_report.json", report)
            print("counterexample search exhausted; report written")
            return 0
        seed = record["seed"]
        config = record["config"]
        f, X0 = systems.instance_from_config(seed, config)
        template = Template.box(2)
        fwd = Propagator("forward")
        os_run = one_shot_reach(fwd, f, X0, None, 2, template)
        re_run = recursive_reach(fwd, f, X0, None, 2, template)
        lp = Propagator("lp", alpha_rule=0.0)
        os_lp = one_shot_reach(lp, f, X0, None, 2, template)
        re_lp = recursive_reach(lp, f, X0, None, 2, template)
        gaps_lp = compare_tightness(os_lp, re_lp)
        report = {
            "seed": seed,
            "config": config,
            "forward_widths_recursive": re_run.widths().tolist(),
            "forward_widths_one_shot": os_run.widths().tolist(),
            "forward_rel_gap": record["rel_gap"],
            "lp_one_shot_contained_in_recursive": [bool(s.a_contained_in_b) for s in gaps_lp],
        }
        _write_json(out_dir / "gap_report.json", report)
        for tag, run in (("forward_one-shot", os_run), ("forward_recursive", re_run)):
            _write_boxes_csv(out_dir / f"{tag}_boxes.csv", run)
        print(f"counterexample at seed {seed}: one-shot forward box wider by "
              f"{100 * record['rel_gap']:.1f}% at step {record['step']}")
        return 0

    if name == "duffing-lp-templates":
        fixture = systems.load_fixture("rayleigh-duffing")
        prop = Propagator("lp", alpha_rule=0.0)
        results = _run_fixture_matrix(
            fixture, prop, ("box", "octagon"), ("recursive", "one-shot"), out_dir
        )
        for tname in ("box", "octagon"):
            rec, osr = results[(tname, "recursive")], results[(tname, "one-shot")]
            _write_comparison(out_dir / f"{fixture.name}_{tname}_comparison.csv", rec, osr)
        print("template comparison written; richer templates tighten the recursive runs")
        return 0

    if name == "cartpole-feedforward":
        fixture = systems.load_fixture("cartpole-feedforward")
        prop = Propagator("lp", alpha_rule=0.0)
        results = _run_fixture_matrix(fixture, prop, ("box",), ("recursive", "one-shot"), out_dir)
        _write_comparison(
            out_dir / f"{fixture.name}_comparison.csv",
            results[("box", "recursive")], results[("box", "one-shot")],
        )
        print("cart-pole feedforward comparison written")
        return 0

    fixture = systems.load_fixture("cartpole-residual")
    prop = Propagator("backward", alpha_rule=0.0)
    results = _run_fixture_matrix(fixture, prop, ("box",), ("recursive", "one-shot"), out_dir)
    _write_comparison(
        out_dir / f"{fixture.name}_comparison.csv",
        results[("box", "recursive")], results[("box", "one-shot")],
    )
    print("cart-pole residual closed-loop comparison written")
    return 0


def cmd_validate(args) -> int:
    try:
        net = load_network(args.network)
    except (NNReachError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    g = net.graph
    n_act = len(g.activation_nodes())
    print(
        f"ok: {g.n_nodes} nodes, state dim {net.state_dim}, disturbance dim "
        f"{net.disturbance_dim}, {n_act} activation layers, output dim {g.output_dim}"
    )
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="nnreach", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nnreach {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--threads", type=int, default=None, help="cap worker threads")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_demo = sub.add_parser("demo", help="run a named demo scenario matrix")
    p_demo.add_argument("name")
    p_demo.add_argument("--out", default=None)
    p_demo.set_defaults(func=cmd_demo)

    p_val = sub.add_parser("validate", help="validate a network file")
    p_val.add_argument("network")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
