"""KKT residuals, multiplier mapping, smoothness constants and rate estimation."""

from __future__ import annotations

import math

import numpy as np

from .core_qp import eval_h, grad_h, sq_norm


def kkt_residual(oracle, x, y, lam):
    """``h(x, y)`` and ``||grad f + lam grad h||^2``; an eps-KKT point has both <= eps."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    gy = oracle.grad_y_g(x, y)
    gfx, gfy = oracle.grad_f(x, y)
    ghx, ghy = grad_h(oracle, x, y, grad_y_g=gy)
    # same operation order as core_qp.direction, so the value matches the solver bitwise
    dx, dy = -gfx - lam * ghx, -gfy - lam * ghy
    return {"h": float(gy @ gy), "stationarity": sq_norm(dx, dy)}


def lower_kkt_map(lam, grad_y_g):
    """Multiplier ``nu = lam * grad_y g`` for the constraint ``grad_y g = 0``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return lam * np.asarray(grad_y_g, dtype=float)


def lower_kkt_residuals(oracle, x, y, lam):
    """The three residuals of the ``grad_y g = 0`` formulation at ``(x, y, nu)``.

    ``lam`` is a multiplier for ``grad h = 2 J^T grad_y g`` as used by the solver, so
    the matching ``nu`` is ``lower_kkt_map(2 lam, grad_y g)``.
    """
    gy = oracle.grad_y_g(x, y)
    nu = lower_kkt_map(2.0 * lam, gy)
    gfx, gfy = oracle.grad_f(x, y)
    rx = gfx + oracle.hvp_yx(x, y, nu)
    ry = gfy + oracle.hvp_yy(x, y, nu)
    return {"lower_stationarity": float(gy @ gy), "x_residual": float(rx @ rx),
            "y_residual": float(ry @ ry)}


def lipschitz_h_bound(C_g, L_yy_g, L_yx_g):
    """Lipschitz constant ``2 C_g (L_yy + L_yx)`` of ``h`` on a region where
    ``||grad_y g|| <= C_g``."""
    if min(C_g, L_yy_g, L_yx_g) < 0:
        raise ValueError("constants must be nonnegative")
    return 2.0 * C_g * (L_yy_g + L_yx_g)


def rate_slope(points):
    """Least-squares slope of ``log(value)`` against ``log(K)``."""
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    K = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(K <= 0) or np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("K and values must be positive and finite")
    lk, lv = np.log(K), np.log(v)
    if np.ptp(lk) == 0:
        raise ValueError("need at least two distinct K")
    lk_c = lk - lk.mean()
    return float(lk_c @ (lv - lv.mean()) / (lk_c @ lk_c))


def _box_pairs(rng, center, radius, samples):
    d = len(center)
    a = center + radius * rng.uniform(-1.0, 1.0, size=(samples, d))
    b = center + radius * rng.uniform(-1.0, 1.0, size=(samples, d))
    return a, b


def sampled_lipschitz(fun, center, radius=1.0, samples=100, seed=0):
    """Max of ``||fun(a) - fun(b)|| / ||a - b||`` over random pairs in a box."""
    rng = np.random.default_rng(seed)
    a, b = _box_pairs(rng, np.asarray(center, dtype=float), radius, samples)
    best = 0.0
    for za, zb in zip(a, b):
        dist = np.linalg.norm(za - zb)
        if dist > 0:
            diff = np.atleast_1d(fun(za)) - np.atleast_1d(fun(zb))
            best = max(best, float(np.linalg.norm(diff)) / dist)
    return best


def sampled_lower_constants(oracle, x0, y0, radius=1.0, samples=100, seed=0):
    """Sampled ``C_g``, ``L_yy_g`` and ``L_yx_g`` in a box around ``(x0, y0)``."""
    n = oracle.dim_x
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    z0 = np.concatenate([x0, y0])
    rng = np.random.default_rng(seed)
    a, b = _box_pairs(rng, z0, radius, samples)
    c_g = l_yy = l_yx = 0.0
    for za, zb in zip(a, b):
        xa, ya = za[:n], za[n:]
        xb, yb = zb[:n], zb[n:]
        ga = oracle.grad_y_g(xa, ya)
        c_g = max(c_g, float(np.linalg.norm(ga)), float(np.linalg.norm(oracle.grad_y_g(xb, yb))))
        dy = np.linalg.norm(ya - yb)
        dx = np.linalg.norm(xa - xb)
        if dy > 0:
            l_yy = max(l_yy, float(np.linalg.norm(ga - oracle.grad_y_g(xa, yb))) / dy)
        if dx > 0:
            l_yx = max(l_yx, float(np.linalg.norm(oracle.grad_y_g(xb, yb) - oracle.grad_y_g(xa, yb))) / dx)
    return {"C_g": c_g, "L_yy_g": l_yy, "L_yx_g": l_yx}


def estimate_constants(oracle, x0, y0, radius=1.0, samples=100, seed=0):
    """Fallback ``L_f`` (sampled gradient ratios) and ``L_h`` (from sampled lower-level
    constants) for problems that do not supply them."""
    n = oracle.dim_x
    z0 = np.concatenate([np.asarray(x0, dtype=float), np.asarray(y0, dtype=float)])

    def grad_f_flat(z):
        gx, gy = oracle.grad_f(z[:n], z[n:])
        return np.concatenate([gx, gy])

    L_f = sampled_lipschitz(grad_f_flat, z0, radius, samples, seed)
    low = sampled_lower_constants(oracle, x0, y0, radius, samples, seed + 1)
    L_h = lipschitz_h_bound(low["C_g"], low["L_yy_g"], low["L_yx_g"])
    out = {"L_f": max(L_f, 1e-12), "L_h": max(L_h, 1e-12)}
    out.update(low)
    return out


def regular_bound_rhs(f0, f_lower, alpha, gamma, C0, L_h, C_f, K):
    """Right-hand sides of the averaged bounds for the ``rho = ||grad h||^2`` variant.

    Returns ``(bound on mean ||Delta||^2, bound on mean ||grad h||^2)``.
    """
    gap = f0 + alpha ** 3 * C0 - f_lower
    delta = 4.0 * gap / (gamma * K) + 2.0 * alpha * C0 / (gamma * L_h * K) + 2.0 * alpha ** 2 * L_h * C_f ** 2
    gradh = 2.0 * alpha * C0 / (gamma * K) + 2.0 * L_h * gap / (gamma * K) + alpha ** 2 * L_h ** 2 * C_f ** 2
    return delta, gradh


def general_bound_rhs(f0, f_lower, alpha, gamma, C0, L_h, C_f, K):
    """Right-hand sides for the ``rho = ||grad h|| sqrt(h0)`` variant:
    ``(bound on mean ||Delta||^2, bound on mean h)``."""
    b_delta = 2.0 * C_f + alpha ** 2 * math.sqrt(C0)
    delta = 2.0 * (f0 - f_lower) / (gamma * K) + alpha ** 2 * (b_delta ** 2 + C0)
    h = alpha ** 2 * C0 + gamma ** 2 * L_h * b_delta ** 2 / 2.0 * (K - 1) / 2.0
    return delta, h
