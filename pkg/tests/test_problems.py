import numpy as np
import pytest
from scipy.optimize import linprog, minimize

from pbgd import problems
from pbgd.core_qp import eval_h, grad_h
from pbgd.problems import (finite_diff_check, finite_diff_report, hvp_symmetry,
                           make_conditioned_matrix, make_coreset, make_dhc, make_nc_synthetic,
                           make_problem, make_quadratic_toy, make_regularity_example,
                           make_sc_synthetic, softmax)

ALL = sorted(problems.REGISTRY)


@pytest.fixture(scope="module")
def instances():
    return {name: make_problem(name) for name in ALL}


class TestConditionedMatrix:
    def test_unit_condition(self):
        s = np.linalg.svd(make_conditioned_matrix(3, 7, 5, 1.0), compute_uv=False)
        np.testing.assert_allclose(s, s[0], rtol=1e-12)

    def test_condition_bound(self):
        H = make_conditioned_matrix(42, 20, 20, 10.0)
        assert 1.0 <= np.linalg.cond(H) <= 10.0 * (1 + 1e-10)

    def test_deterministic(self):
        assert np.array_equal(make_conditioned_matrix(5, 4, 6, 3.0), make_conditioned_matrix(5, 4, 6, 3.0))

    @pytest.mark.parametrize("rows,cols", [(0, 3), (3, 0)])
    def test_empty_rejected(self, rows, cols):
        with pytest.raises(ValueError):
            make_conditioned_matrix(0, rows, cols, 2.0)

    def test_bad_condition(self):
        with pytest.raises(ValueError):
            make_conditioned_matrix(0, 3, 3, 0.5)


class TestGenerators:
    @pytest.mark.parametrize("name", ALL)
    def test_deterministic_per_seed(self, name):
        a, b = make_problem(name), make_problem(name)
        rng1, rng2 = np.random.default_rng(9), np.random.default_rng(9)
        x, y = a.sample_point(rng1)
        x2, y2 = b.sample_point(rng2)
        assert a.oracles.f_eval(x, y) == b.oracles.f_eval(x2, y2)
        assert np.array_equal(a.oracles.grad_y_g(x, y), b.oracles.grad_y_g(x2, y2))

    @pytest.mark.parametrize("name", ALL)
    def test_dims_match_metadata(self, name, instances):
        p = instances[name]
        assert list(p.dims) == list(p.metadata["dims"])

    def test_sc_synthetic_dims_and_optimum(self):
        p = make_sc_synthetic()
        assert p.dims == (20, 20)
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.standard_normal(20)
            assert eval_h(p.oracles, x, p.ground_truth(x)) <= 1e-16

    def test_nc_zero_at_u_zero(self):
        p = make_nc_synthetic()
        H = p.extras["H"]
        x = np.random.default_rng(1).standard_normal(20)
        y = np.linalg.solve(H, x)
        assert eval_h(p.oracles, x, y) <= 1e-28
        assert p.ground_truth is None and not p.strongly_convex

    def test_coreset_shape_and_softmax(self):
        p = make_coreset()
        assert p.dims == (4, 2)
        np.testing.assert_array_equal(softmax(np.zeros(4)), np.full(4, 0.25))
        assert np.all(np.isfinite(softmax(np.array([1000.0, -1000.0, 0.0, 5.0]))))
        x = np.array([0.2, -1.0, 0.3, 0.0])
        assert eval_h(p.oracles, x, p.ground_truth(x)) == 0.0

    def test_coreset_target_inside_hull(self):
        # y0 is a convex combination of the columns of A with all weights > 0
        p = make_coreset()
        A, y0 = p.extras["A"], p.extras["y0"]
        res = linprog(-np.r_[np.zeros(4), 1.0],
                      A_ub=np.c_[-np.eye(4), np.ones(4)], b_ub=np.zeros(4),
                      A_eq=np.r_[np.c_[A, np.zeros(2)], [np.r_[np.ones(4), 0.0]]],
                      b_eq=np.r_[y0, 1.0], bounds=[(0, None)] * 4 + [(0, 1)])
        assert res.status == 0 and -res.fun > 1e-3

    @pytest.mark.parametrize("name", ["sc_synthetic", "coreset", "dhc"])
    def test_ground_truth_stationary(self, name, instances):
        p = instances[name]
        rng = np.random.default_rng(2)
        for _ in range(10 if name != "dhc" else 2):
            x, _ = p.sample_point(rng)
            assert eval_h(p.oracles, x, p.ground_truth(x)) <= 1e-16

    def test_corruption_validated(self):
        with pytest.raises(ValueError):
            make_dhc(corruption=1.0)

    def test_dhc_metadata(self):
        p = make_dhc(n_train=50, n_val=20, n_test=20, n_features=5)
        assert p.metadata["lambda_reg"] == 0.001
        assert p.metadata["corruption_rate"] == 0.25
        assert len(p.extras["corrupted"]) == round(0.25 * 50)
        a, b = p.extras["train"]
        clean = p.extras["train_clean_labels"]
        assert np.all(b[p.extras["corrupted"]] != clean[p.extras["corrupted"]])

    @pytest.mark.parametrize("c", [-3.0, 3.0])
    def test_dhc_uniform_weight_is_ridge_refit(self, c):
        # weights sigma(c) scale the loss, so the optimum is a ridge fit with lambda / sigma(c)
        p = make_dhc(n_train=60, n_val=20, n_test=20, n_features=4, corruption=0.0)
        a, b = p.extras["train"]
        Y = np.eye(10)[b]
        s = 1.0 / (1.0 + np.exp(-c))
        reg = 0.001 / s

        def obj(w):
            z = a @ w.reshape(4, 10)
            zmax = z.max(axis=1, keepdims=True)
            lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
            return np.mean(lse - np.sum(z * Y, axis=1)) + reg * w @ w

        ref = minimize(obj, np.zeros(40), method="BFGS", options={"gtol": 1e-10}).x
        ours = problems.solve_lower_level(p, np.full(60, c))
        np.testing.assert_allclose(ours, ref, atol=1e-4)

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            make_problem("nope")


class TestRegularity:
    def test_identity_gives_half(self):
        m = 3
        I = np.eye(m)
        from pbgd.oracles import ProblemOracles

        o = ProblemOracles(m, m, lambda x, y: 0.0, lambda x, y: (x, y),
                           lambda x, y: y - x, lambda x, y, v: -v, lambda x, y, v: v)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, y = rng.standard_normal(m), rng.standard_normal(m)
            gx, gy = grad_h(o, x, y)
            assert np.allclose(gy, 2 * (I @ (y - x)))
            assert np.linalg.norm(y - x) <= 0.5 * np.linalg.norm(np.r_[gx, gy]) + 1e-15

    def test_condition_at_100_points(self):
        p = make_regularity_example()
        c = p.metadata["regularity_c"]
        A = p.extras["A"]
        assert c == pytest.approx(1 / (2 * np.linalg.svd(A.T @ A, compute_uv=False).min()))
        rng = np.random.default_rng(5)
        for _ in range(100):
            x, y = p.sample_point(rng)
            gy = p.oracles.grad_y_g(x, y)
            gx_h, gy_h = grad_h(p.oracles, x, y)
            assert np.linalg.norm(gy) <= c * np.linalg.norm(np.r_[gx_h, gy_h]) * (1 + 1e-12)

    def test_rank_deficient_range(self):
        p = make_regularity_example(p=3, m=5, n=4)
        A = p.extras["A"]
        U, s, Vt = np.linalg.svd(A)
        V = Vt[: (s > 1e-12).sum()].T
        P = V @ V.T
        rng = np.random.default_rng(1)
        for _ in range(20):
            x, y = p.sample_point(rng)
            gy = p.oracles.grad_y_g(x, y)
            assert np.linalg.norm(gy - P @ gy) <= 1e-10
            gx_h, gy_h = grad_h(p.oracles, x, y)
            c = p.metadata["regularity_c"]
            assert np.linalg.norm(gy) <= c * np.linalg.norm(np.r_[gx_h, gy_h]) * (1 + 1e-10)
        assert not p.strongly_convex


class TestFiniteDiff:
    @pytest.mark.parametrize("name", ALL)
    def test_all_problems_ten_points(self, name, instances):
        p = instances[name]
        rng = np.random.default_rng(0)
        for i in range(10):
            pt = p.sample_point(rng)
            assert finite_diff_check(p, pt, seed=i) <= 1e-5
            assert hvp_symmetry(p, pt, seed=i) <= 1e-10

    def test_quadratic_exact(self):
        p = make_quadratic_toy()
        assert finite_diff_check(p, (np.array([0.3]), np.array([-1.2]))) <= 1e-9

    def test_step_zero_rejected(self):
        with pytest.raises(ValueError):
            finite_diff_check(make_quadratic_toy(), (np.zeros(1), np.zeros(1)), step=0.0)

    def test_report_covers_all_oracles(self):
        rep = finite_diff_report(make_sc_synthetic(), (np.ones(20), np.zeros(20)))
        assert set(rep) == {"grad_f_x", "grad_f_y", "grad_g_x", "grad_g_y", "grad_h_x",
                            "grad_h_y", "hvp_x", "hvp_y"}

    def test_detects_wrong_sign(self):
        p = make_sc_synthetic()
        bad = p.oracles.__class__(**{**p.oracles.__dict__,
                                     "hvp_yx": lambda x, y, v: -p.oracles.hvp_yx(x, y, v)})
        tampered = problems.BenchmarkProblem("tampered", bad, p.g_eval, p.metadata)
        assert finite_diff_check(tampered, (np.ones(20), np.zeros(20))) > 0.5
