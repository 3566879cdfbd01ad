import numpy as np
import pytest

from netgames.qp import (box_qp, kkt_residual_box, least_distance_affine,
                         projected_gradient_qp)


class TestBoxQp:
    def test_interior_solution(self):
        A = np.array([[2.0, 0.0], [0.0, 4.0]])
        b = np.array([-2.0, -4.0])
        x = box_qp(A, b, np.zeros(2), 10.0 * np.ones(2))
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-9)

    def test_clamped_solution(self):
        A = np.eye(1)
        b = np.array([5.0])   # unconstrained minimum at -5
        x = box_qp(A, b, np.zeros(1), np.ones(1))
        assert x[0] == pytest.approx(0.0, abs=1e-10)

    def test_kkt_residual_at_optimum(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            B = rng.normal(size=(n, n))
            A = B @ B.T + 0.5 * np.eye(n)
            b = rng.normal(size=n)
            lo, hi = -np.ones(n), np.ones(n)
            x = box_qp(A, b, lo, hi)
            assert kkt_residual_box(x, A @ x + b, lo, hi) < 1e-9

    def test_warm_start_consistency(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([-1.0, 0.5])
        lo, hi = np.zeros(2), np.ones(2)
        cold = box_qp(A, b, lo, hi)
        warm = box_qp(A, b, lo, hi, x0=np.array([0.9, 0.1]))
        np.testing.assert_allclose(cold, warm, atol=1e-8)


class TestProjectedGradientQp:
    def test_full_rank_matches_normal_equations(self):
        G = np.array([[4.0, 1.0], [1.0, 3.0]])
        m = np.array([5.0, 4.0])
        x, ok, _ = projected_gradient_qp(G, m, -10 * np.ones(2), 10 * np.ones(2),
                                         np.zeros(2))
        assert ok
        np.testing.assert_allclose(x, np.linalg.solve(G, m), atol=1e-8)

    def test_rank_deficient_keeps_start_in_null_direction(self):
        G = np.array([[1.0, 0.0], [0.0, 0.0]])
        m = np.array([2.0, 0.0])
        x, ok, _ = projected_gradient_qp(G, m, np.zeros(2), 10 * np.ones(2),
                                         np.array([0.0, 7.0]))
        assert ok
        np.testing.assert_allclose(x, [2.0, 7.0], atol=1e-8)

    def test_never_raises(self):
        G = np.diag([1.0, 1e-4])
        m = np.array([0.5, 4e-5])
        x, ok, iters = projected_gradient_qp(G, m, np.zeros(2), np.ones(2),
                                             np.zeros(2), max_iter=3)
        assert not ok and iters == 3


class TestLeastDistanceAffine:
    def test_inactive_constraint_is_identity(self):
        target = np.array([1.0, 1.0])
        E = np.array([[1.0, 1.0]])
        d = np.array([5.0])
        np.testing.assert_allclose(least_distance_affine(target, E, d), target)

    def test_projection_onto_halfspace(self):
        target = np.array([2.0, 2.0])
        E = np.array([[1.0, 1.0]])
        d = np.array([2.0])
        # projection of (2,2) onto x+y<=2 is (1,1)
        np.testing.assert_allclose(least_distance_affine(target, E, d),
                                   [1.0, 1.0], atol=1e-8)

    def test_kkt_of_projection(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            target = rng.normal(size=3)
            E = rng.normal(size=(2, 3))
            d = rng.normal(size=2)
            y = least_distance_affine(target, E, d)
            assert np.all(E @ y <= d + 1e-7)
            # the correction lies in the row space of the active constraints
            active = E @ y >= d - 1e-6
            r = target - y
            if not active.any():
                np.testing.assert_allclose(r, 0.0, atol=1e-8)
            else:
                Ea = E[active]
                coef, *_ = np.linalg.lstsq(Ea.T, r, rcond=None)
                np.testing.assert_allclose(Ea.T @ coef, r, atol=1e-6)
