"""Acceptance suite: one test per release criterion, each printing a
pass/fail line.  Expected values come from independent oracles (vertex and
activation-pattern enumeration, Monte-Carlo sampling, forward evaluation);
tolerances are pinned here and nowhere else.

The scenario ledger collects every reach run produced by the criteria so
the soundness criterion can audit all of them at the end of the module.
"""

import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from nnreach import relax as R
from nnreach.errors import IterationLimit
from nnreach.graph import extract_subgraph, network_from_dict, evaluate
from nnreach.lp import branch_and_bound, build_lp, solve_lp
from nnreach.lp.bnb import BnBContext
from nnreach.lp.solver import simplex_solve
from nnreach.reach import (
    Propagator,
    Template,
    compare_tightness,
    one_shot_reach,
    recursive_reach,
)
from nnreach.relax import IntervalBound
from nnreach import systems as S

from conftest import (
    box,
    enumerate_exact_min,
    random_bounded_lp,
    sampled_min,
    vertex_enumeration_min,
)

MANIFEST = S.load_manifest()
needs_fixtures = pytest.mark.skipif(
    not MANIFEST.get("scenarios"), reason="fixtures not baked yet"
)


def report(criterion: int, message: str):
    print(f"[acceptance] criterion {criterion}: PASS - {message}")


@dataclass
class ScenarioRecord:
    label: str
    f: object
    X0: IntervalBound
    W: object
    T: int
    runs: list = field(default_factory=list)


SCENARIOS: list[ScenarioRecord] = []


def matrix_instance(i: int):
    """Instance i of the ordering matrix: dims <= 4, hidden widths <= 16,
    both activations, with and without disturbance, horizons 2..4."""
    rng = np.random.default_rng(10_000 + i)
    n_x = (2, 2, 3, 3, 4)[i % 5]
    n_w = 2 if i % 2 else 0
    act = "tanh" if i % 3 == 1 else "relu"
    depth = 2 if i % 10 == 7 else 1
    hidden = 4 + (i * 7) % 9
    T = 2 + i % 3
    widths = [hidden] * depth + [n_x]
    f = S.random_nnds(20_000 + i, n_x, n_w, widths, act)
    center = rng.uniform(-0.15, 0.15, n_x)
    half = rng.uniform(0.08, 0.2, n_x)
    X0 = IntervalBound(center - half, center + half)
    W = IntervalBound(np.full(n_w, -0.04), np.full(n_w, 0.04)) if n_w else None
    return f, X0, W, T, n_x, act


# the ordering guarantee assumes a fixed relaxation family per neuron and
# pre-activation bounds produced by the propagator's own method
ORDERED_PROPAGATORS = (("lp", "lp"), ("backward", "crown"), ("bnb", "lp"))


def test_criterion_1_one_shot_at_least_as_tight_as_recursive():
    """Separable propagators: every one-shot per-direction support value is
    >= the recursive value - 1e-7, over 100 seeded instances x {box,
    octagon} x {LP, backward linear, branch-and-bound}."""
    t0 = time.time()
    violations = []
    worst = 0.0
    for i in range(100):
        f, X0, W, T, n_x, act = matrix_instance(i)
        rec_runs = []
        for tname in ("box", "octagon"):
            tpl = Template.preset(tname, n_x)
            for method, preact in ORDERED_PROPAGATORS:
                p = Propagator(method, alpha_rule=0.0, preact=preact, bnb_max_nodes=100_000)
                assert p.separable
                rec = recursive_reach(p, f, X0, W, T, tpl)
                osr = one_shot_reach(p, f, X0, W, T, tpl)
                rec_runs += [rec, osr]
                for s in rec.steps + osr.steps:
                    assert all(d == "ok" for d in s.poly.dir_status), (i, method, tname)
                for step in compare_tightness(osr, rec, tol=1e-7):
                    worst = min(worst, float(step.gaps.min()))
                    if not step.a_contained_in_b:
                        violations.append((i, tname, method, step.t, float(step.gaps.min())))
        if i % 10 == 0:
            SCENARIOS.append(ScenarioRecord(f"matrix[{i}]", f, X0, W, T, rec_runs))
    elapsed = time.time() - t0
    assert violations == [], violations
    report(1, f"0 violations over 100 instances (worst gap {worst:.2e}, {elapsed:.0f}s)")


def test_criterion_3_bound_ordering_chain():
    """Per direction on 50 random ReLU nets: backward linear bound <= LP
    bound <= branch-and-bound bound <= sampled true minimum, each within
    1e-7 slack."""
    checked = 0
    for i in range(50):
        rng = np.random.default_rng(30_000 + i)
        n_x = 2 + i % 2
        hidden = 4 + (i * 5) % 7
        f = S.random_nnds(31_000 + i, n_x, 0, [hidden, n_x], "relu")
        X0 = IntervalBound(rng.uniform(-0.6, -0.2, n_x), rng.uniform(0.2, 0.6, n_x))
        ivals = R.node_intervals(f, {0: X0}, method="crown", alpha_rule=0.0)
        sub = extract_subgraph(f, {0}, f.output_node)
        lp = build_lp(f, sub, {0: X0}, ivals, np.zeros(n_x), 0.0)
        ctx = BnBContext(f, sub, {0: X0}, ivals, 0.0, None)
        dirs = np.vstack([Template.box(n_x).directions,
                          rng.normal(size=(2, n_x))])
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        for c in dirs:
            bw = R.backward_lin_prop(f, c, {0: X0}, ivals, alpha_rule=0.0)
            lp_val = solve_lp(lp, lp.objective_for(c)).objective
            bnb = branch_and_bound(lp, lp.objective_for(c), context=ctx)
            assert bnb.complete
            smin = sampled_min(f, c, {0: X0}, n=10_000, seed=i)
            assert bw <= lp_val + 1e-7
            assert lp_val <= bnb.bound + 1e-7
            assert bnb.bound <= smin + 1e-7
            checked += 1
    report(3, f"backward <= LP <= BnB <= sampled minimum for {checked} direction bounds")


def test_criterion_4_bnb_equals_pattern_enumeration():
    """On 25 nets with <= 12 unstable neurons, branch-and-bound equals
    brute-force enumeration of all activation patterns within 1e-6."""
    done = 0
    i = 0
    while done < 25:
        i += 1
        rng = np.random.default_rng(40_000 + i)
        n_x = 2 + i % 2
        f = S.random_nnds(41_000 + i, n_x, 0, [5 + i % 3, n_x], "relu")
        X0 = IntervalBound(rng.uniform(-0.7, -0.2, n_x), rng.uniform(0.2, 0.7, n_x))
        ivals = R.node_intervals(f, {0: X0}, method="crown", alpha_rule=0.0)
        sub = extract_subgraph(f, {0}, f.output_node)
        lp = build_lp(f, sub, {0: X0}, ivals, np.zeros(n_x), 0.0)
        if not (1 <= lp.relu_pairs.shape[0] <= 12):
            continue
        c = rng.normal(size=n_x)
        ctx = BnBContext(f, sub, {0: X0}, ivals, 0.0, None)
        res = branch_and_bound(lp, lp.objective_for(c), context=ctx)
        assert res.complete
        expect = enumerate_exact_min(lp, lp.objective_for(c))
        assert abs(res.bound - expect) <= 1e-6, (i, res.bound, expect)
        done += 1
    report(4, "25 nets: branch-and-bound equals 2^k pattern enumeration within 1e-6")


def test_criterion_5_simplex_matches_vertex_enumeration():
    """200 random bounded LPs (n <= 8, m <= 16): the simplex optimum equals
    the vertex-enumeration optimum within 1e-7, with no cycling failures."""
    for seed in range(200):
        # keep a few higher-dimensional instances with small row counts so
        # the enumeration oracle stays tractable
        if seed % 10 == 9:
            c, A, b, lo, hi = random_bounded_lp(50_000 + seed, n_max=8, m_max=5)
        else:
            c, A, b, lo, hi = random_bounded_lp(50_000 + seed, n_max=5, m_max=16)
        n = len(c)
        try:
            sol = simplex_solve(
                np.asarray(c), np.zeros((0, n)), np.zeros(0),
                np.asarray(A), np.asarray(b), np.asarray(lo), np.asarray(hi),
            )
        except IterationLimit as exc:  # pragma: no cover
            raise AssertionError(f"cycling failure on seed {seed}") from exc
        assert sol.status == "optimal"
        expect = vertex_enumeration_min(c, A, b, lo, hi)
        assert abs(sol.objective - expect) <= 1e-7, (seed, sol.objective, expect)
    report(5, "200 LPs match the vertex-enumeration oracle within 1e-7")


@needs_fixtures
def test_criterion_6_richer_templates_tighten_recursive_runs():
    """On the committed oscillator fixture with the LP propagator: the
    recursive octagon run, projected to box directions, is at least as
    tight as the recursive box run at every step, and the one-shot gap
    under the octagon template is no larger than under the box template."""
    fx = S.load_fixture("rayleigh-duffing")
    f = fx.network.graph
    p = Propagator("lp", alpha_rule=0.0, preact="lp")
    runs = {}
    for tname in ("box", "octagon"):
        tpl = Template.preset(tname, 2)
        runs[tname, "rec"] = recursive_reach(p, f, fx.X0, None, fx.horizon, tpl)
        runs[tname, "os"] = one_shot_reach(p, f, fx.X0, None, fx.horizon, tpl)
    SCENARIOS.append(ScenarioRecord("duffing-templates", f, fx.X0, None, fx.horizon,
                                    list(runs.values())))

    # octagon templates order their box rows first
    n_box = 4
    for t in range(fx.horizon + 1):
        oct_proj = runs["octagon", "rec"].poly(t).support[:n_box]
        box_sup = runs["box", "rec"].poly(t).support
        assert np.all(oct_proj >= box_sup - 1e-7), f"step {t}"

    gap_box = max(
        float(np.max(runs["box", "os"].poly(t).support
                     - runs["box", "rec"].poly(t).support))
        for t in range(1, fx.horizon + 1)
    )
    gap_oct = max(
        float(np.max(runs["octagon", "os"].poly(t).support[:n_box]
                     - runs["octagon", "rec"].poly(t).support[:n_box]))
        for t in range(1, fx.horizon + 1)
    )
    assert gap_oct <= gap_box + 1e-9
    report(6, f"octagon tightens the recursive run (gap {gap_oct:.3g} <= {gap_box:.3g})")


@needs_fixtures
def test_criterion_7_cartpole_feedforward_lp_horizon_8():
    """Committed 4-100-100-4 fixture, LP propagator: both frameworks run to
    T=8; every one-shot box width at T=8 is <= the recursive width; the
    recursive run blows up by >= 5x between T=1 and T=8."""
    fx = S.load_fixture("cartpole-feedforward")
    f = fx.network.graph
    tpl = Template.box(4)
    p = Propagator("lp", alpha_rule=0.0, preact="crown", lp_backend="auto", threads=2)
    t0 = time.time()
    rec = recursive_reach(p, f, fx.X0, None, 8, tpl)
    t_rec = time.time() - t0
    t0 = time.time()
    osr = one_shot_reach(p, f, fx.X0, None, 8, tpl)
    t_os = time.time() - t0
    SCENARIOS.append(ScenarioRecord("cartpole-feedforward", f, fx.X0, None, 8, [rec, osr]))

    for run in (rec, osr):
        assert run.horizon == 8
        for s in run.steps:
            assert all(d == "ok" for d in s.poly.dir_status)
    widths_rec = rec.widths()
    widths_os = osr.widths()
    assert np.all(widths_os[8] <= widths_rec[8]), (widths_os[8], widths_rec[8])
    blowup = float(np.max(widths_rec[8]) / np.max(widths_rec[1]))
    assert blowup >= 5.0, blowup
    assert t_rec + t_os < 1800, "runtime budget exceeded"
    report(7, f"one-shot widths <= recursive at T=8; recursive blow-up {blowup:.1f}x "
              f"(recursive {t_rec:.0f}s, one-shot {t_os:.0f}s)")


@needs_fixtures
def test_criterion_8_residual_closed_loop_backward_t3():
    """Committed residual closed-loop fixture with disturbance |w| <= 0.05,
    backward linear propagation, T=3: one-shot boxes are contained in the
    recursive boxes at every step."""
    fx = S.load_fixture("cartpole-residual")
    f = fx.network.graph
    tpl = Template.box(4)
    p = Propagator("backward", alpha_rule=0.0, preact="crown")
    rec = recursive_reach(p, f, fx.X0, fx.W, 3, tpl)
    osr = one_shot_reach(p, f, fx.X0, fx.W, 3, tpl)
    SCENARIOS.append(ScenarioRecord("cartpole-residual", f, fx.X0, fx.W, 3, [rec, osr]))
    for step in compare_tightness(osr, rec, tol=1e-9):
        assert step.a_contained_in_b, f"step {step.t}"
    report(8, "one-shot contained in recursive at every step (T=3, backward)")


@needs_fixtures
def test_criterion_9_forward_counterexample_demo():
    """The committed search record shows forward propagation looser in
    one-shot than recursively by > 1% at T=2, and the same instance obeys
    the ordering under the LP propagator."""
    record = MANIFEST["counterexample"]
    if not record.get("found"):
        pytest.xfail(f"search exhausted {record.get('seeds_tried')} seeds; "
                     "flagged in the release notes")
    assert record["seeds_tried"] <= 10_000
    again = S.counterexample_search(record["seed"], record["seed"] + 1, T=2, rel_gap=0.01)
    assert again.found and again.rel_gap > 0.01

    f, X0 = S.instance_from_config(record["seed"], record["config"])
    fwd = Propagator("forward")
    osr_f = one_shot_reach(fwd, f, X0, None, 2, Template.box(2))
    rec_f = recursive_reach(fwd, f, X0, None, 2, Template.box(2))
    SCENARIOS.append(ScenarioRecord("counterexample-forward", f, X0, None, 2, [osr_f, rec_f]))
    gap = (osr_f.widths()[2] - rec_f.widths()[2]) / np.maximum(rec_f.widths()[2], 1e-12)
    assert float(np.max(gap)) > 0.01

    p = Propagator("lp", alpha_rule=0.0, preact="lp")
    osr = one_shot_reach(p, f, X0, None, 2, Template.box(2))
    rec = recursive_reach(p, f, X0, None, 2, Template.box(2))
    assert all(s.a_contained_in_b for s in compare_tightness(osr, rec, tol=1e-7))
    report(9, f"forward one-shot looser by {100 * float(np.max(gap)):.1f}% at seed "
              f"{record['seed']}; LP ordering holds on the same instance")


@needs_fixtures
def test_criterion_10_trainer_round_trip():
    """Exported fixtures reload with forward-pass agreement <= 1e-6
    relative on 1000 probe points, and the recorded held-out fits are
    within 5% relative RMS.  (The fit itself is asserted trainer-side;
    this is the primary-side half of the round trip.)"""
    for net_file, probe_file in sorted(MANIFEST["probes"].items()):
        probe = json.loads(S.fixture_text(probe_file))
        net = network_from_dict(json.loads(S.fixture_text(net_file)))
        X = np.array(probe["inputs"])
        expect = np.array(probe["outputs"])
        assert X.shape[0] == 1000
        got = evaluate(net.graph, [X])
        scale = np.maximum(np.abs(expect), 1.0)
        assert np.max(np.abs(got - expect) / scale) <= 1e-6, net_file
    for net, m in MANIFEST["metrics"].items():
        assert m["heldout_rel_rms"] <= 0.05, net
    report(10, "all probes agree to 1e-6 relative; recorded fits <= 5% held-out RMS")


def test_criterion_2_soundness_of_every_recorded_scenario():
    """Every reach result recorded by the other criteria contains 1000
    sampled trajectories with violation <= 1e-9.  Runs last in the module
    so the ledger is complete."""
    assert SCENARIOS, "no scenarios were recorded"
    audited = 0
    worst = -np.inf
    for rec in SCENARIOS:
        batch = S.sample_trajectories(rec.f, rec.X0, rec.W, rec.T, 1000, seed=17)
        for run in rec.runs:
            v = float(np.max(S.soundness_audit(run, batch)))
            worst = max(worst, v)
            assert v <= 1e-9, (rec.label, run.framework, v)
            audited += 1
    report(2, f"{audited} reach results audited across {len(SCENARIOS)} scenarios; "
              f"worst violation {worst:.2e}")
