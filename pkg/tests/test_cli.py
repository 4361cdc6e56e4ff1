"""Command-line front end: scenario parsing, exit codes, output files."""

import json

import numpy as np
import pytest

from nnreach.cli import Scenario, main
from nnreach.errors import ScenarioError
from nnreach.graph import save_network
from nnreach.systems import GraphBuilder


def identity_network(tmp_path, n=2):
    b = GraphBuilder()
    x = b.add_input(n)
    g = b.build(b.affine(np.eye(n), np.zeros(n), x))
    path = tmp_path / "identity.json"
    save_network(g, n, 0, path)
    return path


def write_scenario(tmp_path, name="scn.json", **overrides):
    doc = {
        "network": "identity.json",
        "x0": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "horizon": 2,
        "framework": "both",
        "propagator": {"method": "lp"},
        "template": "box",
        "seed": 0,
    }
    doc.update(overrides)
    path = tmp_path / name
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


class TestScenarioParsing:
    def test_round_trip_idempotent(self, tmp_path):
        path = write_scenario(tmp_path, avoid=[{"lo": [5, 5], "hi": [6, 6]}],
                              w=None, output="results")
        with open(path) as fh:
            doc = json.load(fh)
        doc.pop("w")
        s1 = Scenario.parse(doc)
        s2 = Scenario.parse(s1.to_json_obj())
        assert s1.to_json_obj() == s2.to_json_obj()

    @pytest.mark.parametrize(
        "patch,field",
        [
            ({"horizon": 0}, "horizon"),
            ({"horizon": "three"}, "horizon"),
            ({"framework": "sideways"}, "framework"),
            ({"propagator": {}}, "propagator.method"),
            ({"propagator": {"method": "lp", "bogus": 1}}, "propagator.bogus"),
            ({"template": "dodecahedron"}, "template"),
            ({"x0": {"lo": [0]}}, "x0"),
        ],
    )
    def test_errors_name_the_field(self, patch, field):
        doc = {
            "network": "net.json",
            "x0": {"lo": [0.0], "hi": [1.0]},
            "horizon": 2,
        }
        doc.update(patch)
        with pytest.raises(ScenarioError) as err:
            Scenario.parse(doc)
        assert field in str(err.value)

    def test_missing_required_field(self):
        with pytest.raises(ScenarioError) as err:
            Scenario.parse({"x0": {"lo": [0], "hi": [1]}, "horizon": 1})
        assert "network" in str(err.value)


class TestRunCommand:
    def test_identity_scenario_exits_zero_and_writes_results(self, tmp_path, capsys):
        identity_network(tmp_path)
        scn = write_scenario(tmp_path)
        out = tmp_path / "out"
        code = main(["run", str(scn), "--out", str(out)])
        assert code == 0
        rec = json.loads((out / "scn_recursive.json").read_text())
        osr = json.loads((out / "scn_one-shot.json").read_text())
        assert (out / "scn_comparison.csv").exists()
        for obj in (rec, osr):
            assert len(obj) == 3
            for entry in obj:
                np.testing.assert_allclose(entry["box_lo"], [0.0, 0.0], atol=1e-6)
                np.testing.assert_allclose(entry["box_hi"], [1.0, 1.0], atol=1e-6)

    def test_overlapping_avoid_box_exits_two(self, tmp_path):
        identity_network(tmp_path)
        scn = write_scenario(tmp_path, avoid=[{"lo": [0.5, 0.5], "hi": [2, 2]}])
        assert main(["run", str(scn), "--out", str(tmp_path / "o")]) == 2

    def test_disjoint_avoid_box_exits_zero(self, tmp_path):
        identity_network(tmp_path)
        scn = write_scenario(tmp_path, avoid=[{"lo": [5, 5], "hi": [6, 6]}])
        assert main(["run", str(scn), "--out", str(tmp_path / "o")]) == 0

    def test_malformed_scenario_exits_one(self, tmp_path, capsys):
        identity_network(tmp_path)
        scn = write_scenario(tmp_path, horizon=0)
        assert main(["run", str(scn), "--out", str(tmp_path / "o")]) == 1
        assert "horizon" in capsys.readouterr().err

    def test_dim_mismatch_exits_one(self, tmp_path, capsys):
        identity_network(tmp_path)
        scn = write_scenario(tmp_path, x0={"lo": [0.0], "hi": [1.0]})
        assert main(["run", str(scn), "--out", str(tmp_path / "o")]) == 1
        assert "x0" in capsys.readouterr().err

    def test_missing_network_file_exits_one(self, tmp_path, capsys):
        scn = write_scenario(tmp_path)
        assert main(["run", str(scn), "--out", str(tmp_path / "o")]) == 1


class TestValidateCommand:
    def test_valid_network(self, tmp_path, capsys):
        path = identity_network(tmp_path)
        assert main(["validate", str(path)]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_invalid_network(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"inputs": [0], "output": 1, "state_dim": 1}')
        assert main(["validate", str(path)]) == 1
        assert "invalid" in capsys.readouterr().err


MANIFEST = __import__("nnreach.systems", fromlist=["load_manifest"]).load_manifest()
needs_fixtures = pytest.mark.skipif(
    not MANIFEST.get("scenarios"), reason="fixtures not baked yet"
)


class TestDemoCommand:
    def test_unknown_demo_exits_one(self, tmp_path, capsys):
        assert main(["demo", "frobnicate", "--out", str(tmp_path)]) == 1
        assert "unknown demo" in capsys.readouterr().err

    @needs_fixtures
    def test_counterexample_demo_writes_gap_report(self, tmp_path, capsys):
        out = tmp_path / "demo"
        assert main(["demo", "counterexample-forward", "--out", str(out)]) == 0
        report = json.loads((out / "gap_report.json").read_text())
        assert report["forward_rel_gap"] > 0.01
        assert all(report["lp_one_shot_contained_in_recursive"])

    @needs_fixtures
    def test_residual_demo_one_shot_tighter(self, tmp_path):
        out = tmp_path / "demo"
        assert main(["demo", "cartpole-residual", "--out", str(out)]) == 0
        rec = json.loads((out / "cartpole-residual_box_recursive.json").read_text())
        osr = json.loads((out / "cartpole-residual_box_one-shot.json").read_text())
        for r, o in zip(rec, osr):
            assert np.all(np.array(o["support"]) >= np.array(r["support"]) - 1e-9)
        assert (out / "cartpole-residual_trajectories.csv").exists()

    @needs_fixtures
    def test_duffing_demo_octagon_tightens_recursive(self, tmp_path):
        out = tmp_path / "demo"
        assert main(["demo", "duffing-lp-templates", "--out", str(out)]) == 0
        box = json.loads((out / "rayleigh-duffing_box_recursive.json").read_text())
        octa = json.loads((out / "rayleigh-duffing_octagon_recursive.json").read_text())
        for rb, ro in zip(box, octa):
            width_box = np.array(rb["box_hi"]) - np.array(rb["box_lo"])
            width_oct = np.array(ro["box_hi"]) - np.array(ro["box_lo"])
            assert np.all(width_oct <= width_box + 1e-7)
