#!/usr/bin/env python3
"""Assemble the committed fixtures from a trainer output directory.

Copies the trained networks and probes into the package fixture directory,
builds the residual closed-loop network from its parts, runs the forward
counterexample search, and writes the fixture manifest.

Usage: python scripts/bake_fixtures.py [trainer_out_dir] [fixtures_dir]
"""

import json
import shutil
import sys
from pathlib import Path

import numpy as np

from nnreach.graph import network_from_dict, network_to_dict
from nnreach.systems import assemble_residual_graph, counterexample_search

PAPER_HORIZON_FEEDFORWARD = 8
PAPER_HORIZON_RESIDUAL = 3
DUFFING_HORIZON = 5


def main():
    src = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("trainer/out")
    dst = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("src/nnreach/fixtures")
    dst.mkdir(parents=True, exist_ok=True)

    copied = [
        "rayleigh_duffing.json",
        "rayleigh_duffing_probe.json",
        "cartpole_feedforward.json",
        "cartpole_feedforward_probe.json",
        "cartpole_policy.json",
        "cartpole_policy_probe.json",
        "cartpole_residual.json",
        "cartpole_residual_probe.json",
        "cartpole_residual_rollouts.json",
    ]
    for name in copied:
        shutil.copy(src / name, dst / name)

    residual_meta = json.loads((src / "cartpole-residual_meta.json").read_text())
    A = residual_meta["extra"]["A"]
    B = residual_meta["extra"]["B"]

    policy = network_from_dict(json.loads((src / "cartpole_policy.json").read_text())).graph
    residual = network_from_dict(json.loads((src / "cartpole_residual.json").read_text())).graph
    closed = assemble_residual_graph(A, B, policy, residual)
    with open(dst / "cartpole_residual_closedloop.json", "w") as fh:
        json.dump(network_to_dict(closed, 4, 4), fh)

    print("searching for the forward-propagation counterexample ...")
    record = counterexample_search(0, 10_000, T=2, rel_gap=0.01)
    print(f"  found={record.found} seed={record.seed} rel_gap={record.rel_gap:.4f} "
          f"tried={record.seeds_tried}")

    metrics = {}
    for meta_name in ("rayleigh-duffing", "cartpole-feedforward", "cartpole-residual", "linear-debug"):
        meta_file = src / f"{meta_name}_meta.json"
        if meta_file.exists():
            meta = json.loads(meta_file.read_text())
            for net, info in meta["nets"].items():
                metrics[net] = {"heldout_rel_rms": info["heldout_rel_rms"]}

    manifest = {
        "scenarios": {
            "rayleigh-duffing": {
                "network": "rayleigh_duffing.json",
                "x0_lo": [0.6, 0.6],
                "x0_hi": [0.9, 0.9],
                "horizon": DUFFING_HORIZON,
                "template": "box",
                "notes": "planar oscillator surrogate; dt=0.1, mu=0.2, RK4 stand-in "
                         "dynamics fitted by the trainer",
            },
            "cartpole-feedforward": {
                "network": "cartpole_feedforward.json",
                "x0_lo": [2.0, 1.0, -0.174, -1.0],
                "x0_hi": [2.2, 1.2, -0.104, -0.8],
                "horizon": PAPER_HORIZON_FEEDFORWARD,
                "template": "box",
                "notes": "closed-loop cart-pole step map, 4-100-100-4 ReLU, dt=0.05, "
                         "LQR-with-saturation stand-in controller",
            },
            "cartpole-residual": {
                "network": "cartpole_residual_closedloop.json",
                "x0_lo": [0.0, -0.2, 0.262, -0.15],
                "x0_hi": [0.3, -0.1, 0.312, -0.05],
                "w_lo": [-0.05, -0.05, -0.05, -0.05],
                "w_hi": [0.05, 0.05, 0.05, 0.05],
                "horizon": PAPER_HORIZON_RESIDUAL,
                "template": "box",
                "notes": "x+ = A x + B u + r([x;u]) + w with u = policy(x); "
                         "tanh 5-50-4 residual, ReLU 4-100-1 policy",
                "parts": {
                    "policy": "cartpole_policy.json",
                    "residual": "cartpole_residual.json",
                    "A": A,
                    "B": B,
                },
            },
        },
        "probes": {
            "rayleigh_duffing.json": "rayleigh_duffing_probe.json",
            "cartpole_feedforward.json": "cartpole_feedforward_probe.json",
            "cartpole_policy.json": "cartpole_policy_probe.json",
            "cartpole_residual.json": "cartpole_residual_probe.json",
        },
        "counterexample": record.to_json_obj(),
        "metrics": metrics,
    }
    with open(dst / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    print(f"fixtures baked into {dst}")


if __name__ == "__main__":
    main()
