"""End-to-end acceptance gates, each at its contractual tolerance.

The long learning runs (five seeds, 20k iterations each) are shared by the
decay-rate and distance-trend gates through module-scoped fixtures, so the
whole file stays within the wall-clock budgets it asserts.
"""

import time

import numpy as np
import pytest

from netgames import estimator as est
from netgames import games, gnep, inexact, oracle, seeker
from netgames.games import BoxSet, make_scalar_lq
from netgames.harness import RunConfig, emit_metrics, run_algorithm1
from netgames.topology import (build_structural_maps, build_topology,
                               circle_with_chords)

LEARN_SEEDS = (1, 2, 3, 4, 5)


def learn_doc(seed, **over):
    doc = {"mode": "learn", "seed": seed, "iters": 20_000, "metrics_every": 50,
           "instance": {"generator": {"seed": 0, "player_count": 10,
                                      "chord_count": 10, "param_slack": 4.0}},
           "step": {"rho": 0.1,
                    "gamma": {"mode": "power", "param": 0.501}},
           "estimator": {}}
    doc.update(over)
    return doc


@pytest.fixture(scope="module")
def learning_runs():
    """Five seeded 20k-iteration learning runs on the 10-player instance."""
    t0 = time.perf_counter()
    results = [run_algorithm1(RunConfig(learn_doc(s))) for s in LEARN_SEEDS]
    return results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def inexact_learning_run():
    """One learning run with the stochastic inner solver, T(k) = ceil(0.01k)+10."""
    return run_algorithm1(RunConfig(learn_doc(1, inner={"kind": "psg"})))


@pytest.fixture(scope="module")
def lq_run(lq_pair, lq_maps):
    """The canonical 2-player run: gamma = 1/2, per-iteration recording."""
    rho = seeker.choose_rho(games.monotonicity_certificate(lq_pair, lq_maps))
    sc = seeker.choose_taus(lq_pair.topology, rho)
    t0 = time.perf_counter()
    traj = seeker.run_exact(lq_pair, lq_maps, sc, iters=5_000, tol=1e-10,
                            oracle_x=np.array([2 / 3, 2 / 3]), record_every=1)
    elapsed = time.perf_counter() - t0
    return traj, sc, elapsed


def own_profile(instance, y):
    maps = build_structural_maps(instance.topology, instance.layout)
    return maps.R @ y


def consensus_gap(instance, y):
    lay = instance.layout
    gap = 0.0
    for i in range(instance.topology.player_count):
        for j in instance.topology.in_neighbors[i]:
            gap = max(gap, float(np.max(np.abs(
                y[lay.estimate(i, j)] - y[lay.own(j)]))))
    return gap


class TestLqExactness:
    """Criterion: the 2-player game reaches (2/3, 2/3) fast and provably."""

    def test_resolvent_image_hits_equilibrium(self, lq_pair, lq_maps, lq_run):
        traj, sc, elapsed = lq_run
        assert traj.iterations <= 5_000
        assert elapsed < 1.0
        engine = seeker.SeekerEngine(lq_pair, lq_maps, sc)
        ry = engine.resolvent(traj.y)
        own = own_profile(lq_pair, ry)
        assert np.max(np.abs(own - 2 / 3)) < 1e-6

    def test_closed_form_and_grid_oracle_agree(self, lq_pair):
        sol = oracle.best_response_bruteforce(lq_pair, grid_step=1e-3)
        assert sol.extra["epsilon"] <= 1e-3
        np.testing.assert_allclose(sol.x, [2 / 3, 2 / 3], atol=2e-3)


class TestFejerMonotonicity:
    def test_distance_to_fixed_point_never_grows(self, lq_run):
        traj, _, _ = lq_run
        d = np.array([v for _, v in traj.dist_K])
        assert np.all(d[1:] ** 2 <= d[:-1] ** 2 + 1e-10)


class TestKktCertification:
    """Criterion: every converged exact run certifies its own equilibrium."""

    def lq_suite(self):
        full = np.array([[0.0, 1.0], [1.0, 0.0]])
        chain3 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        return [
            make_scalar_lq(K=[0.5, 0.5], a=[1.0, 1.0], w=full),
            make_scalar_lq(K=[0.3, 0.2], a=[2.0, 1.0], w=full),
            make_scalar_lq(K=[0.0, 0.0], a=[-1.0, -3.0], w=full),
            make_scalar_lq(K=[0.4] * 3, a=[1.0, 2.0, 1.0], w=chain3),
        ]

    def check(self, instance):
        maps = build_structural_maps(instance.topology, instance.layout)
        sc = seeker.choose_taus(instance.topology, rho=0.1)
        traj = seeker.run_exact(instance, maps, sc, iters=100_000, tol=1e-9,
                                record_every=10_000)
        assert traj.converged
        assert consensus_gap(instance, traj.y) < 1e-6
        x = own_profile(instance, traj.y)
        assert oracle.kkt_residual_vi(instance, x) < 1e-6

    def test_lq_suite(self):
        for instance in self.lq_suite():
            self.check(instance)

    @pytest.mark.parametrize("seed", range(10))
    def test_seeded_small_markets(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 7))
        instance = games.sample_instance(seed, player_count=n, chord_count=1,
                                         dims=(1, 2, 3))
        self.check(instance)


class TestPreconditionerPositivity:
    def test_hundred_random_graphs(self):
        rng = np.random.default_rng(2026)
        t0 = time.perf_counter()
        for _ in range(100):
            n = int(rng.integers(3, 21))
            spare = n * (n - 1) // 2 - n
            chords = int(rng.integers(0, min(2 * n, max(spare, 1))))
            topo = build_topology(n, rng.integers(1, 4, size=n),
                                  circle_with_chords(n, chords, rng))
            sc = seeker.choose_taus(topo, rho=float(rng.uniform(0.05, 2.0)))
            phi = seeker.build_phi(sc, build_structural_maps(topo))
            assert phi.sigma_min > 0
        assert time.perf_counter() - t0 < 30.0


class TestGradientChecks:
    """Central finite differences agree with the analytic pseudogradient."""

    def fd_check(self, instance, points=100, h=1e-5):
        topo = instance.topology
        offs = np.cumsum([0] + list(topo.decision_dims))
        lo = np.concatenate([b.lower for b in instance.boxes])
        hi = np.concatenate([b.upper for b in instance.boxes])
        rng = np.random.default_rng(99)
        for _ in range(points):
            x = rng.uniform(lo + 0.1, hi - 0.1)
            g = games.pseudogradient(instance, x)
            fd = np.empty_like(g)
            for i in range(topo.player_count):
                plus = np.concatenate(
                    [x[offs[j]:offs[j + 1]] for j in topo.in_neighbors[i]]) \
                    if topo.in_neighbors[i] else np.empty(0)
                for c in range(topo.decision_dims[i]):
                    xp = x[offs[i]:offs[i + 1]].copy()
                    xm = xp.copy()
                    xp[c] += h
                    xm[c] -= h
                    fd[offs[i] + c] = (
                        games.expected_objective(instance, i, xp, plus)
                        - games.expected_objective(instance, i, xm, plus)
                    ) / (2 * h)
            denom = max(1.0, float(np.linalg.norm(g)))
            assert np.linalg.norm(fd - g) / denom < 1e-6

    def test_linear_quadratic_variant(self, lq_pair):
        self.fd_check(lq_pair)

    def test_market_variant(self):
        self.fd_check(games.sample_instance(3, player_count=5, chord_count=1))


class TestOlseRecovery:
    def test_exact_recovery_once_identifiable(self):
        rng = np.random.default_rng(5)
        truth = np.array([2.0, 0.7, 1.4])
        box = BoxSet(np.zeros(3), np.full(3, 8.0))
        log = est.PlayerLog(np.zeros((3, 3)), np.zeros(3))
        for _ in range(40):
            reg = np.concatenate([[1.0], rng.uniform(0.0, 2.0, size=2)])
            log.gram += np.outer(reg, reg)
            log.moment += (reg @ truth) * reg
            log.count += 1
        assert np.linalg.eigvalsh(log.gram).min() > 1e-6
        belief = est.olse_solve(log, box, box.center)
        assert np.max(np.abs(belief.w - truth)) < 1e-8

    def test_rank_deficient_tie_break_matches_grid(self):
        # one repeated regressor direction: the minimizers form a segment
        reg = np.array([1.0, 1.0])
        log = est.PlayerLog(np.zeros((2, 2)), np.zeros(2), count=0)
        for _ in range(6):
            log.gram += np.outer(reg, reg)
            log.moment += 5.0 * reg
            log.count += 1
        box = BoxSet(np.zeros(2), np.full(2, 8.0))
        prev = np.array([1.0, 6.5])
        belief = est.olse_solve(log, box, prev)

        grid = np.linspace(0.0, 8.0, 1601)
        W1, W2 = np.meshgrid(grid, grid, indexing="ij")
        pts = np.stack([W1.ravel(), W2.ravel()], axis=1)
        obj = 0.5 * np.einsum("ni,ij,nj->n", pts, log.gram, pts) \
            - pts @ log.moment
        ties = pts[obj <= obj.min() + 1e-9]
        pick = ties[np.argmin(np.linalg.norm(ties - prev, axis=1))]
        assert np.max(np.abs(belief.w - pick)) < 1e-4


class TestDecayRate:
    def test_median_loglog_slope(self, learning_runs):
        results, elapsed = learning_runs
        assert elapsed <= 600.0
        slopes = [est.decay_diagnostics(r.error_history,
                                        window=(1_000, 20_000)).slope
                  for r in results]
        assert -0.65 <= float(np.median(slopes)) <= -0.35


class TestDistanceTrend:
    def test_tenfold_drop_with_exact_inner(self, learning_runs):
        results, _ = learning_runs
        hits = 0
        for r in results:
            dist = {row.k: row.dist_sne for row in r.rows}
            assert dist[19_999] is not None
            if dist[19_999] <= dist[150] / 10.0:
                hits += 1
        assert hits >= 4

    def test_same_direction_with_stochastic_inner(self, inexact_learning_run):
        dist = np.array([row.dist_sne for row in inexact_learning_run.rows])
        smooth = np.convolve(dist, np.full(80, 1 / 80), mode="valid")
        assert smooth[-1] < smooth[0]


class TestInnerSolverRate:
    def test_one_over_t_constant_is_stable(self):
        box = BoxSet([0.0], [10.0])
        budgets = (50, 100, 200, 400)
        consts = []
        for T in budgets:
            x = inexact.psg_solve(lambda x, t: x - 1.0, T, 0.5, box,
                                  np.array([0.0]))
            consts.append(T * abs(float(x[0]) - 1.0))
        consts = np.array(consts)
        assert np.all(np.abs(consts - consts.mean()) <= 0.25 * consts.mean())

    def test_hand_iterates(self):
        box = BoxSet([0.0], [10.0])
        x = inexact.psg_solve(lambda x, t: x - 1.0, 2, 0.5, box,
                              np.array([0.0]))
        assert float(x[0]) == pytest.approx(2 / 3, abs=1e-15)


class TestSharedBudgetToy:
    def triple(self):
        instance = make_scalar_lq(K=[0.25] * 3, a=[1.0] * 3,
                                  w=np.ones((3, 3)) - np.eye(3))
        maps = build_structural_maps(instance.topology, instance.layout)
        return instance, maps

    def solve(self, instance, maps, coupling):
        taus = gnep.choose_gnep_taus(maps, coupling, rho=1.0)
        state, engine, converged = gnep.run_gnep(instance, coupling, maps,
                                                 taus, 20_000, tol=1e-12)
        assert converged
        return state, engine

    def test_matches_oracle(self):
        instance, maps = self.triple()
        coupling = gnep.CouplingSpec.equal_split(
            [np.array([[1.0]])] * 3, np.array([1.2]), 3)
        state, engine = self.solve(instance, maps, coupling)
        rep = gnep.kkt_residual_gnep(state, engine)
        assert rep["consensus_lambda"] < 1e-6
        assert rep["complementarity"] < 1e-6
        sol = oracle.gnep_kkt_oracle(instance, coupling)
        y = engine.split(state.psi)[0]
        for i in range(3):
            assert float(y[engine.lay.own(i)][0]) == pytest.approx(
                float(sol.x[i]), abs=1e-4)

    def test_budget_split_invariance(self):
        instance, maps = self.triple()
        A = [np.array([[1.0]])] * 3
        splits = [[0.4, 0.4, 0.4], [1.0, 0.1, 0.1], [0.0, 0.0, 1.2]]
        profiles = []
        for shares in splits:
            coupling = gnep.CouplingSpec(
                A, [np.array([s]) for s in shares])
            state, engine = self.solve(instance, maps, coupling)
            profiles.append(np.array(
                [float(engine.split(state.psi)[0][engine.lay.own(i)][0])
                 for i in range(3)]))
        for other in profiles[1:]:
            np.testing.assert_allclose(other, profiles[0], atol=1e-5)


class TestDeterminism:
    def doc(self):
        return learn_doc(4, iters=250, metrics_every=50,
                         instance={"generator": {"seed": 0, "player_count": 6,
                                                 "chord_count": 3}})

    def csv_bytes(self, tmp_path, name, workers):
        result = run_algorithm1(RunConfig(self.doc()), workers=workers)
        path = tmp_path / name
        emit_metrics(result.rows, path)
        return path.read_bytes()

    def test_repeat_and_parallelism_invariance(self, tmp_path):
        base = self.csv_bytes(tmp_path, "a.csv", workers=1)
        assert self.csv_bytes(tmp_path, "b.csv", workers=1) == base
        assert self.csv_bytes(tmp_path, "c.csv", workers=4) == base
