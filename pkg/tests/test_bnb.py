"""Branch-and-bound completion of the ReLU relaxation."""

import numpy as np
import pytest

from nnreach import relax as R
from nnreach.graph import extract_subgraph
from nnreach.lp import branch_and_bound, build_lp, solve_lp
from nnreach.systems import random_nnds

from conftest import box, enumerate_exact_min, sampled_min


def _lp_for(g, X, c, alpha_rule=0.0):
    sub = extract_subgraph(g, {0}, g.output_node)
    ivals = R.node_intervals(g, {0: X}, method="crown", alpha_rule=alpha_rule)
    return build_lp(g, sub, {0: X}, ivals, np.asarray(c, dtype=float), alpha_rule)


class TestBranchAndBound:
    def test_no_unstable_neurons_equals_lp(self):
        g = random_nnds(1, 2, 0, [4, 2], "tanh")  # no ReLUs at all
        X = box([-1, -1], [1, 1])
        lp = _lp_for(g, X, [1.0, 0.0])
        assert lp.relu_pairs.shape[0] == 0
        res = branch_and_bound(lp)
        sol = solve_lp(lp)
        assert res.complete
        assert abs(res.bound - sol.objective) < 1e-9

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_pattern_enumeration(self, seed):
        g = random_nnds(seed, 2, 0, [5, 2], "relu")
        X = box([-1, -1], [1, 1])
        rng = np.random.default_rng(seed + 40)
        c = rng.normal(size=2)
        lp = _lp_for(g, X, c)
        assert lp.relu_pairs.shape[0] <= 12
        res = branch_and_bound(lp)
        assert res.complete
        expect = enumerate_exact_min(lp)
        assert abs(res.bound - expect) < 1e-6

    @pytest.mark.parametrize("seed", range(6))
    def test_sandwiched_between_lp_and_samples(self, seed):
        g = random_nnds(seed + 10, 2, 0, [6, 2], "relu")
        X = box([-1, -1], [1, 1])
        c = np.random.default_rng(seed).normal(size=2)
        lp = _lp_for(g, X, c)
        root = solve_lp(lp)
        res = branch_and_bound(lp)
        assert res.complete
        assert res.bound >= root.objective - 1e-9  # adding constraints only tightens
        assert res.bound <= sampled_min(g, c, {0: X}, n=20_000, seed=seed) + 1e-7

    def test_budget_stop_keeps_sound_bound(self):
        g = random_nnds(2, 3, 0, [10, 8, 3], "relu")
        X = box([-1, -1, -1], [1, 1, 1])
        c = np.array([1.0, -1.0, 0.5])
        lp = _lp_for(g, X, c)
        root = solve_lp(lp)
        res = branch_and_bound(lp, max_nodes=3)
        full = branch_and_bound(lp)
        assert not res.complete and res.status == "node-limit"
        assert root.objective - 1e-9 <= res.bound <= full.bound + 1e-9
