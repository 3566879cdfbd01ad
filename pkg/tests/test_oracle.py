import numpy as np
import pytest

from netgames import games, oracle
from netgames.errors import NoFixedPointFound
from netgames.games import make_scalar_lq, sample_instance
from netgames.gnep import CouplingSpec


class TestSolveViCentralized:
    def test_lq_closed_form(self, lq_pair):
        sol = oracle.solve_vi_centralized(lq_pair)
        assert sol.certified
        np.testing.assert_allclose(sol.x, [2.0 / 3.0, 2.0 / 3.0], atol=1e-8)

    def test_zero_coupling_clamp(self):
        inst = make_scalar_lq(K=[0.0, 0.0], a=[1.0, 20.0],
                              w=np.zeros((2, 2)), edges={(0, 1), (1, 0)})
        sol = oracle.solve_vi_centralized(inst)
        np.testing.assert_allclose(sol.x, [1.0, 10.0], atol=1e-8)

    def test_interior_matches_linear_solve(self, lq_pair):
        M, u = games._pseudo_affine(lq_pair)
        direct = np.linalg.solve(M, -u)
        sol = oracle.solve_vi_centralized(lq_pair)
        np.testing.assert_allclose(sol.x, direct, atol=1e-8)

    def test_sampled_instances_certify(self):
        for seed in range(5):
            inst = sample_instance(seed, player_count=6, chord_count=4)
            sol = oracle.solve_vi_centralized(inst)
            assert sol.certified
            assert oracle.kkt_residual_vi(inst, sol.x) < 1e-8

    def test_deterministic(self, cournot_instance):
        a = oracle.solve_vi_centralized(cournot_instance)
        b = oracle.solve_vi_centralized(cournot_instance)
        np.testing.assert_array_equal(a.x, b.x)


class TestBruteForce:
    def test_lq_grid_agreement(self, lq_pair):
        sol = oracle.best_response_bruteforce(lq_pair, grid_step=1e-3)
        np.testing.assert_allclose(sol.x, [2.0 / 3.0, 2.0 / 3.0], atol=2e-3)
        assert sol.extra["epsilon"] <= 1e-3

    def test_single_player_matches_clamp(self):
        inst = make_scalar_lq(K=[0.0, 0.0], a=[0.25, 20.0],
                              w=np.zeros((2, 2)), edges={(0, 1), (1, 0)})
        sol = oracle.best_response_bruteforce(inst, grid_step=1e-3)
        assert sol.x[0] == pytest.approx(0.25, abs=1e-3)
        assert sol.x[1] == pytest.approx(10.0, abs=1e-3)

    def test_dimension_guard(self, cournot_instance):
        with pytest.raises(NoFixedPointFound):
            oracle.best_response_bruteforce(cournot_instance)


def lq_triple():
    w = np.ones((3, 3)) - np.eye(3)
    return make_scalar_lq(K=[0.25] * 3, a=[1.0] * 3, w=w)


class TestGnepOracle:
    def test_binding_budget_hand_solution(self):
        inst = lq_triple()
        coupling = CouplingSpec.equal_split([np.eye(1)] * 3, [1.2], 3)
        sol = oracle.gnep_kkt_oracle(inst, coupling)
        assert sol.certified
        # x + 0.5x - 1 + lam = 0 and 3x = 1.2  =>  x = 0.4, lam = 0.4
        np.testing.assert_allclose(sol.x, [0.4, 0.4, 0.4], atol=1e-7)
        assert sol.lam[0] == pytest.approx(0.4, abs=1e-7)

    def test_slack_budget_reduces_to_sne(self):
        inst = lq_triple()
        coupling = CouplingSpec.equal_split([np.eye(1)] * 3, [1000.0], 3)
        sol = oracle.gnep_kkt_oracle(inst, coupling)
        np.testing.assert_allclose(sol.lam, 0.0, atol=1e-9)
        free = oracle.solve_vi_centralized(inst)
        np.testing.assert_allclose(sol.x, free.x, atol=1e-7)

    def test_tightening_budget_shrinks_output(self):
        inst = lq_triple()
        totals = []
        for c in (2.5, 2.0, 1.5, 1.0, 0.5):
            coupling = CouplingSpec.equal_split([np.eye(1)] * 3, [c], 3)
            sol = oracle.gnep_kkt_oracle(inst, coupling)
            totals.append(float(sol.x.sum()))
        assert all(b < a + 1e-9 for a, b in zip(totals, totals[1:]))

    def test_residual_report_components(self):
        inst = lq_triple()
        coupling = CouplingSpec.equal_split([np.eye(1)] * 3, [1.2], 3)
        # infeasible point: total play exceeds the budget by exactly 1
        x = np.array([1.2 / 3 + 1.0 / 3] * 3)
        rep = oracle.gnep_kkt_residual(inst, coupling, x, np.zeros(1))
        assert rep["primal"] == pytest.approx(1.0)
        assert rep["complementarity"] == pytest.approx(0.0)
        assert rep["dual"] == 0.0
