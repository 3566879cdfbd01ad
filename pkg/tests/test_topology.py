import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgames.errors import BadDimension, Disconnected, SelfLoop
from netgames.topology import (build_layout, build_structural_maps,
                               build_topology, circle_with_chords)


def random_connected_topology(rng, n_max=8, dim_max=3):
    """A random topology whose undirected closure is connected by construction."""
    N = int(rng.integers(2, n_max + 1))
    dims = rng.integers(1, dim_max + 1, size=N)
    edges = set()
    for i in range(1, N):   # random spanning tree
        j = int(rng.integers(0, i))
        edges.add((j, i))
    extra = int(rng.integers(0, N))
    for _ in range(extra):
        i, j = rng.integers(0, N, size=2)
        if i != j:
            edges.add((int(i), int(j)))
    return build_topology(N, dims, edges)


class TestBuildTopology:
    def test_two_node_symmetric(self):
        topo = build_topology(2, (1, 1), {(0, 1), (1, 0)})
        assert topo.in_neighbors[1] == (0,)
        assert topo.out_neighbors[0] == (1,)
        assert topo.max_out_count == topo.min_out_count == 1

    def test_path_is_connected(self):
        topo = build_topology(3, (1, 1, 1), {(0, 1), (1, 2)})
        assert topo.in_neighbors[2] == (1,)

    def test_isolated_node_rejected(self):
        with pytest.raises(Disconnected):
            build_topology(3, (1, 1, 1), {(0, 1)})

    def test_self_loop_rejected(self):
        with pytest.raises(SelfLoop):
            build_topology(2, (1, 1), {(0, 0), (0, 1)})

    def test_bad_dimension_rejected(self):
        with pytest.raises(BadDimension):
            build_topology(2, (1, 0), {(0, 1)})

    def test_experiment_graph(self):
        rng = np.random.default_rng(7)
        edges = circle_with_chords(10, 10, rng)
        topo = build_topology(10, [3] * 10, edges)
        assert all(c >= 1 for c in topo.out_counts)
        # bidirectional links: in- and out-neighbor sets coincide
        assert topo.in_neighbors == topo.out_neighbors


class TestLayout:
    def test_blocks_cover_and_are_disjoint(self):
        topo = build_topology(3, (2, 1, 3), {(0, 1), (1, 2), (2, 0)})
        lay = build_layout(topo)
        seen = np.zeros(lay.n_tilde, dtype=int)
        for i in range(3):
            seen[lay.own(i)] += 1
            for j in topo.in_neighbors[i]:
                seen[lay.estimate(i, j)] += 1
        assert (seen == 1).all()
        assert lay.n_tilde == topo.n_tilde

    def test_estimate_block_length_matches_owner(self):
        topo = build_topology(2, (2, 3), {(0, 1), (1, 0)})
        lay = build_layout(topo)
        sl = lay.estimate(1, 0)
        assert sl.stop - sl.start == 2


class TestExtendedLaplacian:
    def test_single_edge_by_hand(self):
        # one dependency: player 1 estimates player 0
        topo = build_topology(2, (1, 1), {(0, 1)})
        maps = build_structural_maps(topo)
        L = maps.L_dense()
        # layout: y0_own, y1_own, y1's estimate of y0
        expected = np.array([[1.0, 0.0, -1.0],
                             [0.0, 0.0, 0.0],
                             [-1.0, 0.0, 1.0]])
        np.testing.assert_allclose(L, expected)
        eigs = np.sort(np.linalg.eigvalsh(L))
        np.testing.assert_allclose(eigs, [0.0, 0.0, 2.0], atol=1e-12)

    def test_zero_eigenvalue_multiplicity_is_player_count(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            topo = random_connected_topology(rng)
            maps = build_structural_maps(topo)
            eigs = np.linalg.eigvalsh(maps.L_dense())
            n_total = sum(topo.decision_dims)
            assert np.sum(np.abs(eigs) < 1e-8) == n_total

    def test_star_component_spectrum(self):
        # player 0's decision is estimated by three out-neighbors: the
        # dependency component is a 4-node star with spectrum {0, 1, 1, 4}
        topo = build_topology(4, (1, 1, 1, 1), {(0, 1), (0, 2), (0, 3)})
        maps = build_structural_maps(topo)
        lay = maps.layout
        idx = [lay.own(0).start] + [lay.estimate(i, 0).start for i in (1, 2, 3)]
        block = maps.L_dense()[np.ix_(idx, idx)]
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(block)),
                                   [0.0, 1.0, 1.0, 4.0], atol=1e-12)
        assert maps.sigma1 == pytest.approx(1.0)

    def test_kernel_is_consensus(self):
        rng = np.random.default_rng(5)
        topo = random_connected_topology(rng)
        maps = build_structural_maps(topo)
        lay = maps.layout
        # consensual vector: every estimate equals the owner's decision
        y = rng.normal(size=lay.n_tilde)
        for i in range(topo.player_count):
            for j in topo.in_neighbors[i]:
                y[lay.estimate(i, j)] = y[lay.own(j)]
        assert np.max(np.abs(maps.L_tilde @ y)) < 1e-10
        # perturbing one estimate leaves the kernel
        if maps.layout.estimate_slices:
            (i, j), sl = next(iter(lay.estimate_slices.items()))
            y[sl.start] += 1.0
            assert np.max(np.abs(maps.L_tilde @ y)) > 1e-6

    def test_symmetric_psd(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            topo = random_connected_topology(rng)
            L = build_structural_maps(topo).L_dense()
            np.testing.assert_allclose(L, L.T)
            assert np.linalg.eigvalsh(L).min() > -1e-10


class TestSelectionMap:
    def test_extracts_own_decisions(self):
        topo = build_topology(3, (1, 1, 1), {(0, 1), (1, 2), (2, 0)})
        maps = build_structural_maps(topo)
        lay = maps.layout
        y = np.zeros(lay.n_tilde)
        for i in range(3):
            y[lay.own(i)] = i + 1
        np.testing.assert_allclose(maps.R @ y, [1.0, 2.0, 3.0])

    def test_rows_orthonormal(self, cournot_maps):
        RRt = (cournot_maps.R @ cournot_maps.R.T).toarray()
        np.testing.assert_allclose(RRt, np.eye(RRt.shape[0]))

    def test_scatter_then_average(self):
        topo = build_topology(3, (1, 1, 1), {(0, 1), (1, 2), (2, 0)})
        maps = build_structural_maps(topo)
        lay = maps.layout
        x = np.array([3.0, 6.0, 9.0])
        y = maps.R.T @ x
        avg = maps.C @ y
        # each owner component has 2 slots (owner + one estimator); the
        # scattered value averages to half of x in every slot
        for j in range(3):
            np.testing.assert_allclose(avg[lay.own(j)], x[j] / 2.0)


class TestConsensusProjector:
    def test_fixes_consensual_vectors(self, cournot_maps):
        rng = np.random.default_rng(0)
        lay = cournot_maps.layout
        topo = cournot_maps.topology
        y = rng.normal(size=lay.n_tilde)
        for i in range(topo.player_count):
            for j in topo.in_neighbors[i]:
                y[lay.estimate(i, j)] = y[lay.own(j)]
        np.testing.assert_allclose(cournot_maps.C @ y, y, atol=1e-10)

    def test_two_point_mean(self):
        topo = build_topology(2, (1, 1), {(0, 1)})
        maps = build_structural_maps(topo)
        lay = maps.layout
        y = np.zeros(lay.n_tilde)
        y[lay.own(0)] = 0.0
        y[lay.estimate(1, 0)] = 2.0
        out = maps.C @ y
        assert out[lay.own(0)] == pytest.approx(1.0)
        assert out[lay.estimate(1, 0)] == pytest.approx(1.0)

    def test_idempotent_and_annihilated_by_laplacian(self, cournot_maps):
        C = cournot_maps.C
        np.testing.assert_allclose(C @ C, C, atol=1e-12)
        assert np.max(np.abs(cournot_maps.L_tilde @ C)) < 1e-10

    def test_orthogonal_decomposition(self, cournot_maps):
        rng = np.random.default_rng(42)
        C = cournot_maps.C
        for _ in range(20):
            y = rng.normal(size=C.shape[0])
            y_par = C @ y
            y_perp = y - y_par
            assert (np.linalg.norm(y_par) ** 2 + np.linalg.norm(y_perp) ** 2
                    == pytest.approx(np.linalg.norm(y) ** 2))

    def test_sigma1_lower_bounds_quadratic_form(self, cournot_maps):
        rng = np.random.default_rng(123)
        L = cournot_maps.L_dense()
        C = cournot_maps.C
        for _ in range(100):
            y = rng.normal(size=L.shape[0])
            y_perp = y - C @ y
            lhs = cournot_maps.sigma1 * np.linalg.norm(y_perp) ** 2
            assert lhs <= y @ L @ y + 1e-9


class TestIncidence:
    def test_bm_kernel_contains_replicated_multiplier(self, cournot_maps):
        rng = np.random.default_rng(9)
        m = 2
        Bm = cournot_maps.B_m(m)
        lam = rng.normal(size=m)
        ones_lam = np.tile(lam, cournot_maps.topology.player_count)
        np.testing.assert_allclose(Bm.T @ ones_lam, 0.0, atol=1e-12)

    def test_dependency_incidence_differences(self, cournot_maps):
        rng = np.random.default_rng(17)
        lay = cournot_maps.layout
        y = rng.normal(size=lay.n_tilde)
        gaps = cournot_maps.B_tilde.T @ y
        for (j, i), sl in cournot_maps.mu_slices.items():
            expected = y[lay.estimate(i, j)] - y[lay.own(j)]
            np.testing.assert_allclose(gaps[sl], expected)


@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=25, deadline=None)
def test_laplacian_invariants_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    topo = random_connected_topology(rng)
    maps = build_structural_maps(topo)
    L = maps.L_dense()
    np.testing.assert_allclose(L, L.T)
    eigs = np.linalg.eigvalsh(L)
    assert eigs.min() > -1e-10
    if maps.layout.estimate_slices:
        assert maps.sigma1 > 0
