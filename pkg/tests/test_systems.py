"""Instance generation, trajectory sampling, the soundness audit, and the
forward-propagation counterexample search."""

import numpy as np
import pytest

from nnreach.graph import evaluate, topological_order, build_graph
from nnreach.relax import IntervalBound
from nnreach.reach import Propagator, Template, one_shot_reach, recursive_reach, compare_tightness
from nnreach import systems as S

from conftest import box


class TestRandomNNDS:
    def test_deterministic_per_seed(self):
        a = S.random_nnds(42, 3, 2, [8, 3], "relu")
        b = S.random_nnds(42, 3, 2, [8, 3], "relu")
        assert a.n_nodes == b.n_nodes
        for nid in range(a.n_nodes):
            if a.ops[nid].kind == "affine":
                np.testing.assert_array_equal(a.ops[nid].W, b.ops[nid].W)
                np.testing.assert_array_equal(a.ops[nid].b, b.ops[nid].b)

    def test_single_width_is_affine(self):
        g = S.random_nnds(0, 4, 0, [4])
        kinds = {op.kind for op in g.ops}
        assert kinds == {"input", "affine"}

    def test_last_width_must_match_state_dim(self):
        with pytest.raises(ValueError):
            S.random_nnds(0, 3, 0, [8, 4])

    @pytest.mark.parametrize("seed", range(0, 1000, 37))
    def test_generated_graphs_validate(self, seed):
        n_x = 2 + seed % 3
        n_w = seed % 2
        g = S.random_nnds(seed, n_x, n_w, [6, n_x], "tanh" if seed % 2 else "relu")
        order = topological_order(g)
        assert len(order) == g.n_nodes  # acyclic with dense ids
        assert g.output_dim == n_x


class TestTrajectories:
    def test_identity_dynamics_constant(self):
        b = S.GraphBuilder()
        x = b.add_input(2)
        f = b.build(b.affine(np.eye(2), np.zeros(2), x))
        batch = S.sample_trajectories(f, box([0, 0], [1, 1]), None, 4, 50, seed=0)
        for t in range(1, 5):
            np.testing.assert_array_equal(batch.states[:, t], batch.states[:, 0])

    def test_doubling_map(self):
        b = S.GraphBuilder()
        x = b.add_input(1)
        f = b.build(b.affine([[2.0]], [0.0], x))
        batch = S.sample_trajectories(f, box(1, 1), None, 3, 2, seed=0)
        np.testing.assert_array_equal(batch.states[0, :, 0], [1, 2, 4, 8])

    def test_replay_is_bit_exact(self):
        f = S.random_nnds(3, 2, 2, [6, 2], "relu")
        batch = S.sample_trajectories(f, box([-1, -1], [1, 1]), box([-0.1, -0.1], [0.1, 0.1]),
                                      5, 64, seed=9)
        np.testing.assert_array_equal(S.replay(f, batch), batch.states)

    def test_empirical_box_inside_reach_box(self):
        f = S.random_nnds(4, 2, 0, [6, 2], "relu")
        X0 = box([-0.5, -0.5], [0.5, 0.5])
        batch = S.sample_trajectories(f, X0, None, 3, 500, seed=1)
        run = recursive_reach(Propagator("lp", alpha_rule=0.0), f, X0, None, 3, Template.box(2))
        for t in range(4):
            emp_lo = batch.states[:, t].min(axis=0)
            emp_hi = batch.states[:, t].max(axis=0)
            assert np.all(emp_lo >= run.poly(t).box.lo - 1e-9)
            assert np.all(emp_hi <= run.poly(t).box.hi + 1e-9)


class TestSoundnessAudit:
    def test_clean_result_passes(self):
        f = S.random_nnds(6, 2, 0, [5, 2], "tanh")
        X0 = box([-0.4, -0.4], [0.4, 0.4])
        run = one_shot_reach(Propagator("backward"), f, X0, None, 3, Template.box(2))
        batch = S.sample_trajectories(f, X0, None, 3, 1000, seed=2)
        assert np.max(S.soundness_audit(run, batch)) <= 1e-9

    def test_fault_injection_detected(self):
        f = S.random_nnds(6, 2, 0, [5, 2], "tanh")
        X0 = box([-0.4, -0.4], [0.4, 0.4])
        run = one_shot_reach(Propagator("backward"), f, X0, None, 2, Template.box(2))
        batch = S.sample_trajectories(f, X0, None, 2, 1000, seed=2)
        # shrink a reported set: the audit must flag positive violation
        run.poly(2).support += 0.1
        assert np.max(S.soundness_audit(run, batch)) > 0


class TestCounterexampleSearch:
    def test_finds_a_forward_gap_and_reruns_deterministically(self):
        res = S.counterexample_search(0, 50, T=2, rel_gap=0.01)
        assert res.found and res.rel_gap > 0.01
        again = S.counterexample_search(res.seed, res.seed + 1, T=2, rel_gap=0.01)
        assert again.found and again.seed == res.seed
        assert again.rel_gap == res.rel_gap

    def test_same_instance_obeys_lp_ordering(self):
        res = S.counterexample_search(0, 50, T=2, rel_gap=0.01)
        f, X0 = S.instance_from_config(res.seed, res.config)
        p = Propagator("lp", alpha_rule=0.0, preact="lp")
        osr = one_shot_reach(p, f, X0, None, 2, Template.box(2))
        rec = recursive_reach(p, f, X0, None, 2, Template.box(2))
        assert all(s.a_contained_in_b for s in compare_tightness(osr, rec, tol=1e-7))

    def test_exhaustion_is_reported_not_raised(self):
        res = S.counterexample_search(0, 1, T=2, rel_gap=1e9)
        assert not res.found and res.seeds_tried == 1


class TestResidualAssembly:
    def test_closed_loop_matches_manual_composition(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(3, 3)) * 0.3
        B = rng.normal(size=(3, 1))

        bld = S.GraphBuilder()  # 3 -> 1 ReLU policy
        xin = bld.add_input(3)
        h = bld.relu(bld.affine(rng.normal(size=(5, 3)), rng.normal(size=5), xin), 5)
        pol = bld.build(bld.affine(rng.normal(size=(1, 5)), rng.normal(size=1), h))

        bld = S.GraphBuilder()  # [x; u] (4) -> 3 tanh residual
        cin = bld.add_input(4)
        h = bld.tanh(bld.affine(rng.normal(size=(6, 4)), rng.normal(size=6), cin), 6)
        res_net = bld.build(bld.affine(rng.normal(size=(3, 6)), rng.normal(size=3), h))

        g = S.assemble_residual_graph(A, B, pol, res_net)
        assert [g.dims[i] for i in g.input_nodes] == [3, 3]
        for _ in range(50):
            x = rng.normal(size=3)
            w = rng.normal(size=3) * 0.05
            u = evaluate(pol, [x])
            r = evaluate(res_net, [np.concatenate([x, u])])
            expect = A @ x + B @ u + r + w
            got = evaluate(g, [x, w])
            np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-14)
