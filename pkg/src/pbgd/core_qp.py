"""Per-iterate direction-finding QP and the constraint function it linearizes.

The constraint is ``h(x, y) = ||grad_y g(x, y)||^2``. At every iterate the solver
solves

    min  1/2 ||dx + grad_x f||^2 + 1/2 ||dy + grad_y f||^2
    s.t. grad_x h . dx + grad_y h . dy + alpha * rho <= 0

whose solution is available in closed form (``multiplier`` + ``direction``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .oracles import check_finite

DEFAULT_DENOM_TOL = 1e-14


@dataclass(frozen=True)
class StepResult:
    lam: float
    delta_x: np.ndarray
    delta_y: np.ndarray
    grad_h_x: np.ndarray
    grad_h_y: np.ndarray
    rho: float
    constraint_slack: float

    @property
    def delta_sq(self) -> float:
        return sq_norm(self.delta_x, self.delta_y)


def sq_norm(a, b) -> float:
    return float(np.dot(a, a) + np.dot(b, b))


def eval_h(oracle, x, y) -> float:
    gy = check_finite(oracle.grad_y_g(x, y), "grad_y_g", x, y)
    return float(np.dot(gy, gy))


def grad_h(oracle, x, y, grad_y_g=None):
    """Gradient of h via two Hessian-vector products.

    Pass ``grad_y_g`` when it is already known to save one oracle call.
    """
    if grad_y_g is None:
        grad_y_g = check_finite(oracle.grad_y_g(x, y), "grad_y_g", x, y)
    ghx = 2.0 * np.asarray(oracle.hvp_yx(x, y, grad_y_g), dtype=float)
    ghy = 2.0 * np.asarray(oracle.hvp_yy(x, y, grad_y_g), dtype=float)
    check_finite(ghx, "hvp_yx", x, y)
    check_finite(ghy, "hvp_yy", x, y)
    return ghx, ghy


def rho_regular(grad_h_x, grad_h_y) -> float:
    return sq_norm(grad_h_x, grad_h_y)


def rho_general(grad_h_x, grad_h_y, h0: float) -> float:
    if h0 < 0:
        raise ValueError("h0 must be nonnegative")
    return math.sqrt(sq_norm(grad_h_x, grad_h_y)) * math.sqrt(h0)


def multiplier(grad_f_x, grad_f_y, grad_h_x, grad_h_y, rho, alpha,
               denom_tol=DEFAULT_DENOM_TOL) -> float:
    """Optimal dual variable of the direction-finding QP.

    Returns 0 when ``||grad h||^2`` is negligible relative to ``max(1, ||grad f||^2)``;
    there both rho choices vanish and ``-grad f`` is already the QP solution.
    """
    if denom_tol <= 0:
        raise ValueError("denom_tol must be positive")
    denom = sq_norm(grad_h_x, grad_h_y)
    if denom <= denom_tol * max(1.0, sq_norm(grad_f_x, grad_f_y)):
        return 0.0
    num = -float(np.dot(grad_h_x, grad_f_x)) - float(np.dot(grad_h_y, grad_f_y)) + alpha * rho
    return max(num, 0.0) / denom


def direction(grad_f_x, grad_f_y, grad_h_x, grad_h_y, lam):
    if lam < 0:
        raise ValueError("multiplier must be nonnegative")
    return -grad_f_x - lam * grad_h_x, -grad_f_y - lam * grad_h_y


def constraint_slack(grad_h_x, grad_h_y, delta_x, delta_y, rho, alpha) -> float:
    return float(np.dot(grad_h_x, delta_x)) + float(np.dot(grad_h_y, delta_y)) + alpha * rho


def solve_qp(grad_f_x, grad_f_y, grad_h_x, grad_h_y, rho, alpha,
             denom_tol=DEFAULT_DENOM_TOL) -> StepResult:
    lam = multiplier(grad_f_x, grad_f_y, grad_h_x, grad_h_y, rho, alpha, denom_tol)
    dx, dy = direction(grad_f_x, grad_f_y, grad_h_x, grad_h_y, lam)
    slack = constraint_slack(grad_h_x, grad_h_y, dx, dy, rho, alpha)
    return StepResult(lam, dx, dy, grad_h_x, grad_h_y, rho, slack)


def qp_brute_oracle(grad_f_x, grad_f_y, grad_h_x, grad_h_y, rho, alpha):
    """Reference solution of the direction-finding QP, for tests only.

    Projects the unconstrained minimizer ``-grad f`` onto the half-space
    ``{d : a.d <= b}`` with ``a = grad h`` and ``b = -alpha * rho``, working on the
    stacked (x, y) vector. The multiplier is the projection coefficient.
    """
    n = len(grad_f_x)
    point = -np.concatenate([np.atleast_1d(grad_f_x), np.atleast_1d(grad_f_y)]).astype(float)
    a = np.concatenate([np.atleast_1d(grad_h_x), np.atleast_1d(grad_h_y)]).astype(float)
    b = -alpha * rho
    aa = a @ a
    excess = a @ point - b
    if aa == 0.0 or excess <= 0.0:
        proj, lam = point, 0.0
    else:
        lam = excess / aa
        proj = point - lam * a
    return proj[:n], proj[n:], float(lam)
