import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from pbgd import core_qp
from pbgd.core_qp import (direction, eval_h, grad_h, multiplier, qp_brute_oracle, rho_general,
                          rho_regular, solve_qp)
from pbgd.oracles import EvaluationError, ProblemOracles
from pbgd.problems import make_coreset, make_quadratic_toy


def quad_ab(A, B):
    """g = 1/2 ||Ay - Bx||^2 with dummy f."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    return ProblemOracles(
        dim_x=B.shape[1], dim_y=A.shape[1],
        f_eval=lambda x, y: 0.0,
        grad_f=lambda x, y: (np.zeros(B.shape[1]), np.zeros(A.shape[1])),
        grad_y_g=lambda x, y: A.T @ (A @ y - B @ x),
        hvp_yx=lambda x, y, v: -B.T @ (A @ v),
        hvp_yy=lambda x, y, v: A.T @ (A @ v),
    )


def fd_grad(fun, z, step=1e-6):
    out = np.empty_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = step
        out[i] = (fun(z + e) - fun(z - e)) / (2 * step)
    return out


class TestEvalH:
    def test_stationary_point(self):
        o = make_quadratic_toy().oracles
        assert eval_h(o, np.array([1.0]), np.array([1.0])) == 0.0

    def test_unit_gradient(self):
        o = make_quadratic_toy().oracles
        assert eval_h(o, np.array([1.0]), np.array([0.0])) == 1.0

    def test_coreset_optimum(self):
        p = make_coreset()
        x = np.array([0.3, -0.2, 0.1, 0.5])
        assert eval_h(p.oracles, x, p.ground_truth(x)) <= 1e-28

    def test_nonfinite_raises_with_coordinates(self):
        o = ProblemOracles(1, 2, lambda x, y: 0.0, lambda x, y: (x, y),
                           lambda x, y: np.array([1.0, np.nan]),
                           lambda x, y, v: x, lambda x, y, v: v)
        with pytest.raises(EvaluationError) as info:
            eval_h(o, np.zeros(1), np.zeros(2))
        assert list(info.value.bad_index) == [1]


class TestGradH:
    def test_toy(self):
        o = make_quadratic_toy().oracles
        gx, gy = grad_h(o, np.array([1.0]), np.array([0.0]))
        assert gx.tolist() == [2.0] and gy.tolist() == [-2.0]

    def test_zero_at_stationary(self):
        o = make_quadratic_toy().oracles
        gx, gy = grad_h(o, np.array([0.7]), np.array([0.7]))
        assert not gx.any() and not gy.any()

    def test_identity_pair_matches_fd(self):
        o = quad_ab(np.eye(2), np.eye(2))
        x, y = np.array([1.0, 0.0]), np.zeros(2)
        gx, gy = grad_h(o, x, y)
        fx = fd_grad(lambda xx: eval_h(o, xx, y), x)
        fy = fd_grad(lambda yy: eval_h(o, x, yy), y)
        np.testing.assert_allclose(gx, fx, atol=1e-8)
        np.testing.assert_allclose(gy, fy, atol=1e-8)
        np.testing.assert_allclose(gx, [2.0, 0.0], atol=1e-12)

    def test_random_quadratic_matches_fd(self):
        rng = np.random.default_rng(3)
        A, B = rng.standard_normal((5, 3)), rng.standard_normal((5, 4))
        o = quad_ab(A, B)
        x, y = rng.standard_normal(4), rng.standard_normal(3)
        gx, gy = grad_h(o, x, y)
        np.testing.assert_allclose(gx, fd_grad(lambda v: eval_h(o, v, y), x), rtol=1e-6)
        np.testing.assert_allclose(gy, fd_grad(lambda v: eval_h(o, x, v), y), rtol=1e-6)


class TestRho:
    def test_regular(self):
        assert rho_regular(np.zeros(1), np.zeros(1)) == 0.0
        assert rho_regular(np.array([2.0]), np.array([-2.0])) == 8.0
        assert rho_regular(np.array([1.0, 2.0]), np.array([3.0])) == 14.0

    def test_general(self):
        assert rho_general(np.array([2.0]), np.array([-2.0]), 0.0) == 0.0
        assert rho_general(np.array([2.0]), np.array([-2.0]), 1.0) == pytest.approx(2.8284271, abs=1e-7)
        assert rho_general(np.zeros(2), np.zeros(2), 5.0) == 0.0

    def test_general_negative_h0(self):
        with pytest.raises(ValueError):
            rho_general(np.ones(1), np.ones(1), -1.0)


ONE, ZERO = np.array([1.0]), np.array([0.0])
GH = (np.array([2.0]), np.array([-2.0]))


class TestMultiplierDirection:
    def test_active(self):
        assert multiplier(ONE, ZERO, *GH, rho=8.0, alpha=1.0) == 0.75

    def test_clamped(self):
        assert multiplier(np.array([10.0]), np.array([-10.0]), *GH, rho=8.0, alpha=0.1) == 0.0

    def test_degenerate(self):
        rng = np.random.default_rng(0)
        assert multiplier(rng.standard_normal(3), rng.standard_normal(2), np.zeros(3), np.zeros(2),
                          0.0, 1.0) == 0.0

    def test_denom_tol_validated(self):
        with pytest.raises(ValueError):
            multiplier(ONE, ZERO, *GH, 8.0, 1.0, denom_tol=0.0)

    def test_direction_worked_example(self):
        dx, dy = direction(ONE, ZERO, *GH, 0.75)
        assert dx.tolist() == [-2.5] and dy.tolist() == [1.5]
        assert 2 * dx[0] + (-2) * dy[0] + 1 * 8 == 0.0

    def test_direction_zero_lambda(self):
        dx, dy = direction(np.array([3.0, -1.0]), np.array([2.0]), np.ones(2), np.ones(1), 0.0)
        assert dx.tolist() == [-3.0, 1.0] and dy.tolist() == [-2.0]

    def test_direction_pure_correction(self):
        dx, dy = direction(ZERO, ZERO, ONE, ONE, 2.0)
        assert dx.tolist() == [-2.0] and dy.tolist() == [-2.0]

    def test_direction_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            direction(ONE, ZERO, *GH, -0.1)


class TestBruteOracle:
    def test_worked_example(self):
        dx, dy, lam = qp_brute_oracle(ONE, ZERO, *GH, rho=8.0, alpha=1.0)
        assert dx.tolist() == [-2.5] and dy.tolist() == [1.5] and lam == 0.75

    def test_degenerate(self):
        dx, dy, lam = qp_brute_oracle(np.array([1.0, 2.0]), np.array([3.0]), np.zeros(2),
                                      np.zeros(1), 0.0, 1.0)
        assert dx.tolist() == [-1.0, -2.0] and dy.tolist() == [-3.0] and lam == 0.0

    def test_agrees_with_scipy_slsqp(self):
        # independent numerical QP solve
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, m = rng.integers(1, 6, size=2)
            gfx, gfy = rng.standard_normal(n), rng.standard_normal(m)
            ghx, ghy = rng.standard_normal(n), rng.standard_normal(m)
            rho, alpha = rho_regular(ghx, ghy), 0.5
            gf = np.concatenate([gfx, gfy])
            gh = np.concatenate([ghx, ghy])
            res = minimize(lambda d: 0.5 * np.sum((d + gf) ** 2), -gf, jac=lambda d: d + gf,
                           constraints=[{"type": "ineq", "fun": lambda d: -(gh @ d + alpha * rho),
                                         "jac": lambda d: -gh}],
                           method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
            step = solve_qp(gfx, gfy, ghx, ghy, rho, alpha)
            np.testing.assert_allclose(np.concatenate([step.delta_x, step.delta_y]), res.x, atol=1e-6)


def random_instance(rng, variant):
    n, m = (int(v) for v in rng.integers(1, 51, size=2))
    gfx, gfy = rng.standard_normal(n), rng.standard_normal(m)
    ghx, ghy = rng.standard_normal(n), rng.standard_normal(m)
    alpha = float(rng.choice([0.01, 0.1, 1.0]))
    if variant == "regular":
        rho = rho_regular(ghx, ghy)
    else:
        rho = rho_general(ghx, ghy, float(rng.exponential()))
    return gfx, gfy, ghx, ghy, rho, alpha


def test_closed_form_matches_oracle_1000_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(1000):
        gfx, gfy, ghx, ghy, rho, alpha = random_instance(rng, ("regular", "general")[i % 2])
        lam = multiplier(gfx, gfy, ghx, ghy, rho, alpha)
        dx, dy = direction(gfx, gfy, ghx, ghy, lam)
        bx, by, blam = qp_brute_oracle(gfx, gfy, ghx, ghy, rho, alpha)
        worst = max(worst, abs(lam - blam), np.max(np.abs(dx - bx)), np.max(np.abs(dy - by)))
    assert worst <= 1e-8


vec = st.integers(1, 8).flatmap(
    lambda k: st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=k, max_size=k))


@settings(max_examples=300, deadline=None)
@given(gfx=vec, gfy=vec, ghx=vec, ghy=vec, alpha=st.sampled_from([0.01, 0.1, 1.0]),
       general=st.booleans(), h0=st.floats(0.0, 10.0))
def test_step_invariants(gfx, gfy, ghx, ghy, alpha, general, h0):
    gfx, gfy = np.array(gfx), np.array(gfy)
    # gradient blocks must share the f-block shapes
    ghx = np.resize(np.array(ghx), gfx.shape)
    ghy = np.resize(np.array(ghy), gfy.shape)
    rho = rho_general(ghx, ghy, h0) if general else rho_regular(ghx, ghy)
    step = solve_qp(gfx, gfy, ghx, ghy, rho, alpha)
    assert step.lam >= 0.0
    D = core_qp.sq_norm(ghx, ghy)
    if D <= core_qp.DEFAULT_DENOM_TOL * max(1.0, core_qp.sq_norm(gfx, gfy)):
        # degenerate branch: the constraint is dropped by design
        assert step.lam == 0.0
        return
    scale = max(1.0, alpha * rho, float(np.abs(ghx) @ np.abs(gfx) + np.abs(ghy) @ np.abs(gfy)))
    assert step.constraint_slack <= 1e-8 * scale
    assert abs(step.lam * step.constraint_slack) <= 1e-8 * max(1.0, step.lam * scale)
    sx, sy = gfx + step.lam * ghx, gfy + step.lam * ghy
    assert step.delta_sq == core_qp.sq_norm(-gfx - step.lam * ghx, -gfy - step.lam * ghy)
    assert step.delta_sq == pytest.approx(core_qp.sq_norm(sx, sy), rel=1e-15, abs=0)


def test_degenerate_stationarity():
    o = make_quadratic_toy().oracles
    x = y = np.array([0.4])
    gx, gy = grad_h(o, x, y)
    gfx, gfy = o.grad_f(x, y)
    for rho in (rho_regular(gx, gy), rho_general(gx, gy, 3.0)):
        assert rho == 0.0
        step = solve_qp(gfx, gfy, gx, gy, rho, 0.5)
        assert step.lam == 0.0
        assert step.delta_x.tolist() == (-gfx).tolist() and step.delta_y.tolist() == (-gfy).tolist()


def test_relative_denominator_threshold():
    # tiny grad h relative to a large grad f: treated as degenerate
    lam = multiplier(np.array([1e4]), np.array([0.0]), np.array([1e-6]), np.array([0.0]),
                     rho=1e-12, alpha=1.0)
    assert lam == 0.0
