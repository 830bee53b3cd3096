import math

import numpy as np
import pytest

from saddlesim.core import (
    ConstraintSet,
    NetworkProblem,
    SplitPoint,
    finite_difference_jacobian,
    spectral_norm,
)
from saddlesim.problems import (
    QuadraticSaddleProblem,
    approx_solution_ybar,
    build_hard_instance,
    build_quadratic_network,
    build_robust_regression,
    estimate_regression_constants,
    estimate_similarity,
    hard_instance_dual_solution,
    hard_instance_min_dimension,
    measure_quadratic_constants,
    node_vs_mean_similarity,
    ybar_approximation_gap,
)


class TestRobustRegression:
    def test_single_point_gradients(self):
        p = build_robust_regression(np.array([[1.0, 0.0]]), np.array([0.0]), 1.0, 1.0, 1.0, 1.0)
        gw, gr = p.operator_xy(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        assert np.allclose(gw, [2.0, 0.0])
        assert np.allclose(gr, [-1.0, 0.0])

    def test_zero_at_origin(self):
        # w = 0, r = 0: the w-gradient is -X'y/N and the r-gradient vanishes
        rng = np.random.default_rng(0)
        x = rng.standard_normal((7, 3))
        y = rng.standard_normal(7)
        p = build_robust_regression(x, y, 0.5, 0.5, 1.0, 1.0)
        gw, gr = p.operator_xy(np.zeros(3), np.zeros(3))
        assert np.allclose(gw, -x.T @ y / 7)
        assert np.allclose(gr, 0.0)

    def test_zero_data_reduces_to_quadratics(self):
        p = build_robust_regression(np.zeros((4, 2)), np.zeros(4), 1.0, 1.0, 1.0, 1.0)
        w = np.array([0.3, -0.2])
        r = np.array([0.1, 0.4])
        expected = 0.5 * w @ w - 0.5 * r @ r + 0.5 * (r @ w) ** 2
        assert p.value(w, r) == pytest.approx(expected, rel=1e-12)

    def test_finite_difference_match(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((9, 4))
        y = rng.standard_normal(9)
        p = build_robust_regression(x, y, 0.3, 0.7, 1.2, 0.8)
        for _ in range(10):
            w = rng.standard_normal(4) * 0.5
            r = rng.standard_normal(4) * 0.3
            v = np.concatenate([w, r])

            def value_of(u):
                return p.value(u[:4], u[4:])

            grad_fd = finite_difference_jacobian(
                lambda u: np.array([value_of(u)]), v)[0]
            gw, gr = p.operator_xy(w, r)
            analytic = np.concatenate([gw, -gr])   # (grad_w, grad_r)
            rel = np.linalg.norm(grad_fd - analytic) / max(1.0, np.linalg.norm(analytic))
            assert rel <= 1e-5

    def test_hessian_blocks_match_operator_jacobian(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 3))
        y = rng.standard_normal(6)
        p = build_robust_regression(x, y, 0.4, 0.6, 1.0, 1.0)
        w = rng.standard_normal(3) * 0.4
        r = rng.standard_normal(3) * 0.2

        def field(v):
            gx, gy = p.operator_xy(v[:3], v[3:])
            return np.concatenate([gx, gy])

        jac = finite_difference_jacobian(field, np.concatenate([w, r]))
        hww, hwr, hrr = p.hessian_blocks(w, r)
        assert np.allclose(jac[:3, :3], hww, atol=1e-5)
        assert np.allclose(jac[:3, 3:], hwr, atol=1e-5)
        assert np.allclose(jac[3:, 3:], -hrr, atol=1e-5)

    def test_validation(self):
        with pytest.raises(ValueError):
            build_robust_regression(np.zeros((2, 2)), np.zeros(3), 1, 1, 1, 1)
        with pytest.raises(ValueError):
            build_robust_regression(np.zeros((2, 2)), np.zeros(2), 0.0, 1, 1, 1)


class TestRegressionConstants:
    def test_rr_block_bound(self):
        p = build_robust_regression(np.zeros((3, 2)), np.zeros(3), 1.0, 0.1, 2.0, 1.0)
        c = estimate_regression_constants(p)
        assert c.L == pytest.approx(2.0 ** 2 + 0.1)     # the rr block dominates here
        assert c.mu == 1.0
        assert c.mu_safe == pytest.approx(0.1)

    def test_monotone_in_radii(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((20, 5))
        y = rng.standard_normal(20)
        base = estimate_regression_constants(build_robust_regression(x, y, 0.2, 0.2, 1.0, 0.5))
        wider_w = estimate_regression_constants(build_robust_regression(x, y, 0.2, 0.2, 2.0, 0.5))
        wider_r = estimate_regression_constants(build_robust_regression(x, y, 0.2, 0.2, 1.0, 1.5))
        assert wider_w.L >= base.L
        assert wider_r.L >= base.L


class TestSimilarity:
    def test_identical_zero(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 3))
        y = rng.standard_normal(8)
        a = build_robust_regression(x, y, 0.5, 0.5, 1.0, 1.0)
        assert estimate_similarity(a, a) == 0.0

    def test_orthogonal_single_points(self):
        a = build_robust_regression(np.array([[1.0, 0.0]]), np.array([0.0]), 1, 1, 1, 1)
        b = build_robust_regression(np.array([[0.0, 1.0]]), np.array([0.0]), 1, 1, 1, 1)
        # Gram difference diag(1, -1): spectral term 1; column-mean gap sqrt(2)
        assert estimate_similarity(a, b) == pytest.approx(1 + 2 * math.sqrt(2))

    def test_radii_must_match(self):
        a = build_robust_regression(np.ones((2, 2)), np.zeros(2), 1, 1, 1.0, 1.0)
        b = build_robust_regression(np.ones((2, 2)), np.zeros(2), 1, 1, 2.0, 1.0)
        with pytest.raises(ValueError):
            estimate_similarity(a, b)

    def test_node_vs_mean_identical_agents(self):
        ws = ConstraintSet.whole_space()
        agent = QuadraticSaddleProblem(1.0, 1.0, np.eye(3))
        net = NetworkProblem([agent, agent, agent], ws, ws)
        assert node_vs_mean_similarity(net) == pytest.approx(0.0, abs=1e-14)

    def test_node_vs_mean_two_agent_coupling(self):
        # couplings C and 0 average to C/2; both agents sit at ||C/2||
        ws = ConstraintSet.whole_space()
        c = np.array([[1.0, -2.0], [0.0, 1.0]])
        net = NetworkProblem([
            QuadraticSaddleProblem(1.0, 1.0, c),
            QuadraticSaddleProblem(1.0, 1.0, np.zeros((2, 2))),
        ], ws, ws)
        assert node_vs_mean_similarity(net) == pytest.approx(spectral_norm(c / 2), rel=1e-12)

    def test_node_vs_mean_sampled_for_regression(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((10, 3))
        y = rng.standard_normal(10)
        a = build_robust_regression(x, y, 0.5, 0.5, 1.0, 1.0)
        b = build_robust_regression(x + 0.2 * rng.standard_normal((10, 3)), y, 0.5, 0.5, 1.0, 1.0)
        sx, sy = a.constraint_sets()
        net = NetworkProblem([a, b], sx, sy)
        sampled = node_vs_mean_similarity(net, samples=4, seed=0)
        assert sampled > 0
        # dataset-level estimate upper-bounds the sampled block gaps
        assert sampled <= 2 * estimate_similarity(a, b)


class TestHardInstance:
    def test_role_layout_m33(self):
        inst = build_hard_instance(33, 1.0, 64.0, 8)
        assert inst.p == 2
        assert inst.l == 30
        assert inst.l <= 33 - 2 * inst.p + 1
        assert inst.roles[:2] == ("f2", "f2")
        assert inst.roles[-2:] == ("f1", "f1")
        assert set(inst.roles[2:-2]) == {"f3"}
        assert inst.topology.kind == "line"

    def test_coupling_pattern(self):
        inst = build_hard_instance(33, 1.0, 64.0, 6)
        a1, a2 = inst.a1, inst.a2
        assert np.allclose(np.diag(a1), 1.0) and np.allclose(np.diag(a2), 1.0)
        sup1 = np.array([a1[i, i + 1] for i in range(5)])
        sup2 = np.array([a2[i, i + 1] for i in range(5)])
        assert np.array_equal(sup1, [0, -2, 0, -2, 0])
        assert np.array_equal(sup2, [-2, 0, -2, 0, -2])
        # averaged pattern ties every row to its successor
        assert np.allclose((a1 + a2) / 2, np.eye(6) - np.diag(np.ones(5), 1))

    def test_quadratic_blocks_consistent(self):
        # every role shares the same diagonal curvature; the operator is the
        # gradient of the stated quadratic, so the block equals twice the
        # ||x||^2 coefficient
        m, mu = 33, 0.7
        inst = build_hard_instance(m, mu, 10.0, 5)
        expect = 2.0 * (inst.p / m) * 16.0 * mu
        for agent in inst.network.agents:
            hxx, _, hyy = agent.hessian_blocks(None, None)
            assert np.allclose(hxx, expect * np.eye(5))
            assert np.allclose(hyy, -expect * np.eye(5))

    def test_pure_quadratic_role_operator(self):
        inst = build_hard_instance(33, 1.0, 64.0, 4)
        z = SplitPoint([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        coef = 32.0 * inst.p * 1.0 / 33
        g = inst.network.local_operator(5, z)       # interior node, no coupling
        assert np.allclose(g.x, coef * z.x)
        assert np.allclose(g.y, coef * z.y)

    def test_mean_matches_closed_form(self):
        m, mu, delta, d = 33, 1.0, 8.0, 6
        inst = build_hard_instance(m, mu, delta, d)
        p = inst.p
        a = (inst.a1 + inst.a2) / 2
        rng = np.random.default_rng(6)
        z = SplitPoint(rng.standard_normal(d), rng.standard_normal(d))
        coef_c = (2 * p / m) * delta / 4
        coef_q = 32.0 * p * mu / m
        pull = (p / m) * delta ** 2 / (128 * mu)
        gx = coef_q * z.x + coef_c * (a @ z.y)
        gy = coef_q * z.y - coef_c * (a.T @ z.x) - pull * np.eye(d)[0]
        mean = inst.network.mean_operator(z)
        assert np.allclose(mean.x, gx, atol=1e-12)
        assert np.allclose(mean.y, gy, atol=1e-12)

    def test_delta_relatedness_exact(self):
        inst = build_hard_instance(33, 1.0, 64.0, 16)
        assert node_vs_mean_similarity(inst.network) <= 64.0

    def test_strong_monotonicity_at_least_mu(self):
        inst = build_hard_instance(33, 1.3, 13.0, 6)
        consts = measure_quadratic_constants(inst.network)
        assert consts.mu >= 1.3 - 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            build_hard_instance(2, 1.0, 1.0, 4)
        with pytest.raises(ValueError):
            build_hard_instance(8, 1.0, 1.0, 1)


class TestDualApproximation:
    def test_q_closed_form(self):
        inst = build_hard_instance(33, 1.0, 64.0, 4)
        assert inst.alpha == pytest.approx(1.0)
        assert inst.q == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-12)

    def test_ybar_geometric_values(self):
        # alpha = 0.5 makes q = 0.5: entries q^i / (1 - q) = (1, 0.5, 0.25)
        delta = 64.0 / math.sqrt(0.5)
        ybar, bound = approx_solution_ybar(3, 1.0, delta)
        assert np.allclose(ybar, [1.0, 0.5, 0.25])
        assert bound == pytest.approx(0.5 ** 4 / (0.5 * 0.5))

    def test_bound_formula_example(self):
        # direct evaluation of q^(d+1) / (alpha (1-q)) at q = 1/2, alpha = 1, d = 3
        assert 0.5 ** 4 / (1 * (1 - 0.5)) == pytest.approx(0.125)

    def test_recurrence_interior(self):
        ybar, _ = approx_solution_ybar(30, 1.0, 64.0)
        alpha = 1.0
        for i in range(1, 29):
            assert -ybar[i - 1] + (2 + alpha) * ybar[i] - ybar[i + 1] == pytest.approx(0.0, abs=1e-10)

    def test_numeric_solution_within_bound(self):
        ybar, bound = approx_solution_ybar(20, 1.0, 64.0)
        y_num = hard_instance_dual_solution(20, 1.0)
        assert np.linalg.norm(ybar - y_num) <= bound

    def test_high_precision_gap(self):
        gap, bound = ybar_approximation_gap(20, 1.0)
        assert gap <= bound

    def test_solution_is_stationary(self):
        inst = build_hard_instance(33, 1.0, 32.0, 10)
        z_star = inst.solution()
        res = inst.network.mean_operator(z_star)
        assert res.norm() <= 1e-10
        assert np.linalg.norm(z_star.x) > 0 and np.linalg.norm(z_star.y) > 0


class TestMinDimension:
    def test_alpha_one_root(self):
        # delta = 64 mu gives alpha = 1 and the golden-ratio-like root
        q = (3 - math.sqrt(5)) / 2
        assert q ** 2 - 3 * q + 1 == pytest.approx(0.0, abs=1e-12)

    def test_round_budget_dominates(self):
        assert hard_instance_min_dimension(50, 1.0, 64.0) == 100

    def test_log_term_positive_for_small_alpha(self):
        d = hard_instance_min_dimension(1, 1.0, 6400.0)   # alpha = 1e-4 << 1
        assert d > 2

    def test_always_positive(self):
        for dom in (1.0, 10.0, 100.0, 1000.0):
            assert hard_instance_min_dimension(3, 1.0, dom) >= 2


class TestQuadraticNetwork:
    def test_designed_modulus_exact(self):
        net = build_quadratic_network(6, 7, mu=0.8, smoothness=4.0,
                                      coupling=1.5, heterogeneity=0.5, seed=9)
        consts = measure_quadratic_constants(net)
        assert consts.mu == pytest.approx(0.8, rel=1e-9)
        assert consts.delta > 0
        assert consts.L >= consts.delta

    def test_homogeneous_network_has_zero_delta(self):
        net = build_quadratic_network(4, 5, mu=1.0, smoothness=3.0,
                                      coupling=1.0, heterogeneity=0.0, seed=10)
        assert measure_quadratic_constants(net).delta == pytest.approx(0.0, abs=1e-13)
