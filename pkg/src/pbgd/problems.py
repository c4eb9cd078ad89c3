"""Benchmark bilevel problems with analytic oracles, plus finite-difference checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core_qp import eval_h, grad_h
from .oracles import ProblemOracles

DHC_REG = 0.001
DHC_CLASSES = 10


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    oracles: ProblemOracles
    g_eval: Callable
    metadata: dict
    ground_truth: Optional[Callable] = None  # x -> y*(x)
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def strongly_convex(self) -> bool:
        return bool(self.metadata.get("strongly_convex", False))

    @property
    def dims(self):
        return self.oracles.dim_x, self.oracles.dim_y

    def sample_point(self, rng):
        """A random (x, y) at the scale the problem is normally run at."""
        sx, sy = self.extras.get("sample_scale", (1.0, 1.0))
        return sx * rng.standard_normal(self.oracles.dim_x), sy * rng.standard_normal(self.oracles.dim_y)

    def initial_point(self, seed=0):
        init = self.extras.get("initial_point")
        if init is not None:
            return init(np.random.default_rng(seed))
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.oracles.dim_x), np.zeros(self.oracles.dim_y)


def _haar_orthogonal(rng, n, k):
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def make_conditioned_matrix(seed, rows, cols, max_cond, scale=1.0):
    """Random matrix whose nonzero singular values are linearly spaced in
    ``[scale, scale * max_cond]``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if max_cond < 1:
        raise ValueError("max_cond must be >= 1")
    rng = np.random.default_rng(seed)
    k = min(rows, cols)
    u = _haar_orthogonal(rng, rows, k)
    v = _haar_orthogonal(rng, cols, k)
    s = np.linspace(scale, scale * max_cond, k)
    return (u * s) @ v.T


# ---------------------------------------------------------------------------
# shared upper objective: sin(c.x + d.y) + log(||E x + y||^2 + 1)

def _sin_log_upper(c, d, E):
    def f_eval(x, y):
        u = E @ x + y
        return math.sin(c @ x + d @ y) + math.log(u @ u + 1.0)

    def grad_f(x, y):
        u = E @ x + y
        cs = math.cos(c @ x + d @ y)
        w = 2.0 * u / (u @ u + 1.0)
        return cs * c + E.T @ w, cs * d + w

    cd = np.concatenate([c, d])
    consts = {
        "L_f": float(cd @ cd) + 2.0 * (1.0 + np.linalg.norm(E, 2) ** 2),
        "C_f": float(np.linalg.norm(cd)) + math.sqrt(1.0 + np.linalg.norm(E, 2) ** 2),
        "f_lower": -1.0,
    }
    return f_eval, grad_f, consts


def make_sc_synthetic(seed=0, n=20, max_cond=10.0, h_scale=0.1):
    """Strongly convex lower level ``g = 1/2 ||H y - x||^2``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    H = make_conditioned_matrix(seed, n, n, max_cond, scale=h_scale)
    c = rng.standard_normal(n)
    d = rng.standard_normal(n)
    f_eval, grad_f, consts = _sin_log_upper(c, d, np.eye(n))
    HtH = H.T @ H

    def g_eval(x, y):
        r = H @ y - x
        return 0.5 * (r @ r)

    def grad_y_g(x, y):
        return H.T @ (H @ y - x)

    def grad_x_g(x, y):
        return x - H @ y

    def hvp_yy(x, y, v):
        return HtH @ v

    def hvp_yx(x, y, v):
        return -(H @ v)

    smax = h_scale * max_cond
    consts.update({
        "L_h": 2.0 * (smax ** 2 + smax ** 4),
        "L_yy_g": smax ** 2,
        "L_yx_g": smax,
    })
    oracles = ProblemOracles(n, n, f_eval, grad_f, grad_y_g, hvp_yx, hvp_yy,
                             constants=consts, g_eval=g_eval, grad_x_g=grad_x_g)
    meta = {"seed": seed, "dims": [n, n], "condition_number": float(np.linalg.cond(H)),
            "max_cond": max_cond, "h_scale": h_scale, "strongly_convex": True}
    return BenchmarkProblem("sc_synthetic", oracles, g_eval, meta,
                            ground_truth=lambda x: np.linalg.solve(H, x),
                            extras={"H": H, "c": c, "d": d})


def make_nc_synthetic(seed=0, n=20, max_cond=10.0, h_scale=0.1):
    """Nonconvex lower level ``g = cos(1/2 ||H y - x||^2)``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    H = make_conditioned_matrix(seed, n, n, max_cond, scale=h_scale)
    c = rng.standard_normal(n)
    d = rng.standard_normal(n)
    f_eval, grad_f, consts = _sin_log_upper(c, d, np.eye(n))

    def parts(x, y):
        r = H @ y - x
        return r, 0.5 * (r @ r)

    def g_eval(x, y):
        return math.cos(parts(x, y)[1])

    def grad_y_g(x, y):
        r, u = parts(x, y)
        return -math.sin(u) * (H.T @ r)

    def grad_x_g(x, y):
        r, u = parts(x, y)
        return math.sin(u) * r

    def hvp_yy(x, y, v):
        r, u = parts(x, y)
        Hv = H @ v
        return -math.sin(u) * (H.T @ Hv) - math.cos(u) * (r @ Hv) * (H.T @ r)

    def hvp_yx(x, y, v):
        r, u = parts(x, y)
        Hv = H @ v
        return math.cos(u) * (r @ Hv) * r + math.sin(u) * Hv

    oracles = ProblemOracles(n, n, f_eval, grad_f, grad_y_g, hvp_yx, hvp_yy,
                             constants=consts, g_eval=g_eval, grad_x_g=grad_x_g)
    meta = {"seed": seed, "dims": [n, n], "condition_number": float(np.linalg.cond(H)),
            "max_cond": max_cond, "h_scale": h_scale, "strongly_convex": False}
    return BenchmarkProblem("nc_synthetic", oracles, g_eval, meta, extras={"H": H, "c": c, "d": d})


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def make_coreset(seed=1):
    """Coreset selection toy: ``f = ||y - y0||^2``, ``g = ||y - A softmax(x)||^2``.

    The default seed places ``y0`` inside the image of the simplex under ``A``, so the
    implicit objective has interior minimizers.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 4))
    y_target = rng.standard_normal(2)

    def f_eval(x, y):
        r = y - y_target
        return float(r @ r)

    def grad_f(x, y):
        return np.zeros(4), 2.0 * (y - y_target)

    def g_eval(x, y):
        r = y - A @ softmax(x)
        return float(r @ r)

    def grad_y_g(x, y):
        return 2.0 * (y - A @ softmax(x))

    def jac_sigma(x):
        s = softmax(x)
        return np.diag(s) - np.outer(s, s)

    def grad_x_g(x, y):
        return -2.0 * jac_sigma(x) @ (A.T @ (y - A @ softmax(x)))

    def hvp_yy(x, y, v):
        return 2.0 * np.asarray(v, dtype=float)

    def hvp_yx(x, y, v):
        return -2.0 * jac_sigma(x) @ (A.T @ v)

    a2 = np.linalg.norm(A, 2)
    consts = {
        "L_f": 2.0,
        # valid where ||y - A softmax(x)|| <= 1
        "L_h": 8.0 * (1.0 + a2 ** 2 / 4.0 + 2.0 * np.linalg.norm(A)),
        "L_yy_g": 2.0,
        "L_yx_g": a2,
        "f_lower": 0.0,
    }
    oracles = ProblemOracles(4, 2, f_eval, grad_f, grad_y_g, hvp_yx, hvp_yy,
                             constants=consts, g_eval=g_eval, grad_x_g=grad_x_g)
    meta = {"seed": seed, "dims": [4, 2], "condition_number": None, "strongly_convex": True}
    return BenchmarkProblem("coreset", oracles, g_eval, meta,
                            ground_truth=lambda x: A @ softmax(x),
                            extras={"A": A, "y0": y_target})


def _gaussian_clusters(rng, n_samples, means, n_classes, scale):
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = means[labels] + rng.standard_normal((n_samples, means.shape[1]))
    return scale * feats, labels


def make_dhc(seed=0, n_features=50, n_train=1000, n_val=500, corruption=0.25,
             n_test=500, separation=0.35, feature_scale=0.5):
    """Data hyper-cleaning on a synthetic Gaussian-cluster dataset.

    ``x`` holds one logit weight per training sample (weight ``sigmoid(x_i)``) and
    ``y`` is a flattened ``n_features x 10`` linear classifier.
    """
    if not 0.0 <= corruption < 1.0:
        raise ValueError("corruption must lie in [0, 1)")
    if min(n_features, n_train, n_val, n_test) < 1:
        raise ValueError("dimensions must be positive")
    C = DHC_CLASSES
    rng = np.random.default_rng(seed)
    means = separation * rng.standard_normal((C, n_features))
    if not feature_scale > 0:
        raise ValueError("feature_scale must be positive")
    scale = float(feature_scale)
    a_tr, b_clean = _gaussian_clusters(rng, n_train, means, C, scale)
    a_val, b_val = _gaussian_clusters(rng, n_val, means, C, scale)
    a_te, b_te = _gaussian_clusters(rng, n_test, means, C, scale)
    b_tr = b_clean.copy()
    n_bad = int(round(corruption * n_train))
    bad = rng.choice(n_train, size=n_bad, replace=False)
    b_tr[bad] = (b_clean[bad] + rng.integers(1, C, size=n_bad)) % C
    Y_tr = np.eye(C)[b_tr]
    Y_val = np.eye(C)[b_val]
    d = n_features
    lam = DHC_REG

    def as_w(y):
        return np.reshape(y, (d, C))

    def ce_rows(a, W, Y):
        z = a @ W
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        return lse - np.sum(z * Y, axis=1)

    def sig(x):
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    def f_eval(x, y):
        return float(np.mean(ce_rows(a_val, as_w(y), Y_val)))

    def grad_f(x, y):
        P = softmax(a_val @ as_w(y))
        return np.zeros(n_train), (a_val.T @ (P - Y_val)).ravel() / n_val

    def g_eval(x, y):
        W = as_w(y)
        return float(sig(x) @ ce_rows(a_tr, W, Y_tr)) / n_train + lam * float(y @ y)

    def grad_y_g(x, y):
        W = as_w(y)
        R = softmax(a_tr @ W) - Y_tr
        return (a_tr.T @ (sig(x)[:, None] * R)).ravel() / n_train + 2.0 * lam * y

    def grad_x_g(x, y):
        s = sig(x)
        return s * (1.0 - s) * ce_rows(a_tr, as_w(y), Y_tr) / n_train

    def hvp_yy(x, y, v):
        P = softmax(a_tr @ as_w(y))
        U = a_tr @ as_w(v)
        PU = P * U
        M = PU - P * PU.sum(axis=1, keepdims=True)
        return (a_tr.T @ (sig(x)[:, None] * M)).ravel() / n_train + 2.0 * lam * np.asarray(v)

    def hvp_yx(x, y, v):
        s = sig(x)
        R = softmax(a_tr @ as_w(y)) - Y_tr
        U = a_tr @ as_w(v)
        return s * (1.0 - s) * np.sum(U * R, axis=1) / n_train

    gram_tr = np.linalg.eigvalsh(a_tr.T @ a_tr / n_train)[-1]
    gram_val = np.linalg.eigvalsh(a_val.T @ a_val / n_val)[-1]
    lyy = 0.5 * gram_tr + 2.0 * lam
    lyx = 0.25 * math.sqrt(2.0 * np.sum(a_tr * a_tr)) / n_train
    consts = {
        "L_f": 0.5 * gram_val,
        # curvature-of-J term neglected; factor 2 margin on the Gauss-Newton part
        "L_h": 4.0 * (lyy ** 2 + lyx ** 2),
        "L_yy_g": lyy,
        "L_yx_g": lyx,
        "f_lower": 0.0,
    }
    oracles = ProblemOracles(n_train, d * C, f_eval, grad_f, grad_y_g, hvp_yx, hvp_yy,
                             constants=consts, g_eval=g_eval, grad_x_g=grad_x_g)
    meta = {"seed": seed, "dims": [n_train, d * C], "condition_number": None,
            "corruption_rate": corruption, "n_features": n_features, "n_classes": C,
            "n_train": n_train, "n_val": n_val, "n_test": n_test, "separation": separation, "feature_scale": scale,
            "lambda_reg": lam, "strongly_convex": True}

    def zero_start(rng):
        return np.zeros(n_train), np.zeros(d * C)

    extras = {
        "train": (a_tr, b_tr), "train_clean_labels": b_clean, "corrupted": np.sort(bad),
        "val": (a_val, b_val), "test": (a_te, b_te), "n_classes": C,
        "sample_scale": (1.0, 0.3), "initial_point": zero_start,
    }
    problem = BenchmarkProblem("dhc", oracles, g_eval, meta, extras=extras)
    object.__setattr__(problem, "ground_truth",
                       lambda x: solve_lower_level(problem, x, tol=1e-24))
    return problem


def dhc_accuracy(problem, y, split="test") -> float:
    a, b = problem.extras[split]
    W = np.reshape(y, (a.shape[1], problem.extras["n_classes"]))
    return float(np.mean(np.argmax(a @ W, axis=1) == b))


def solve_lower_level(problem, x, y0=None, tol=1e-20, max_newton=50):
    """Newton-CG on ``g(x, .)`` until ``||grad_y g||^2 <= tol``; strongly convex problems only."""
    from .baselines import cg_solve

    o = problem.oracles
    y = np.zeros(o.dim_y) if y0 is None else np.array(y0, dtype=float)
    for _ in range(max_newton):
        gy = o.grad_y_g(x, y)
        if gy @ gy <= tol:
            break
        step = cg_solve(lambda v: o.hvp_yy(x, y, v), gy, tol=1e-12, max_iters=10 * o.dim_y).v
        y = y - step
    return y


def make_regularity_example(seed=0, p=6, m=4, n=4):
    """Lower level ``g = 1/2 ||A y - B x||^2`` with the sin/log upper objective."""
    if min(p, m, n) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, m))
    B = rng.standard_normal((p, n))
    c = rng.standard_normal(n)
    d = rng.standard_normal(m)
    E = np.eye(m, n)
    f_eval, grad_f, consts = _sin_log_upper(c, d, E)
    AtA = A.T @ A
    AtB = A.T @ B

    def g_eval(x, y):
        r = A @ y - B @ x
        return 0.5 * (r @ r)

    def grad_y_g(x, y):
        return A.T @ (A @ y - B @ x)

    def grad_x_g(x, y):
        return -(B.T @ (A @ y - B @ x))

    def hvp_yy(x, y, v):
        return AtA @ v

    def hvp_yx(x, y, v):
        return -(AtB.T @ v)

    eig = np.linalg.eigvalsh(AtA)
    tol = eig[-1] * max(p, m) * np.finfo(float).eps
    sigma_plus = float(eig[eig > tol].min())
    J = np.hstack([-AtB, AtA])
    consts.update({
        "L_h": 2.0 * float(np.linalg.eigvalsh(J @ J.T)[-1]),
        "L_yy_g": float(eig[-1]),
        "L_yx_g": float(np.linalg.norm(AtB, 2)),
    })
    oracles = ProblemOracles(n, m, f_eval, grad_f, grad_y_g, hvp_yx, hvp_yy,
                             constants=consts, g_eval=g_eval, grad_x_g=grad_x_g)
    meta = {"seed": seed, "dims": [n, m], "p": p, "condition_number": None,
            "sigma_plus_min_AtA": sigma_plus, "regularity_c": 1.0 / (2.0 * sigma_plus),
            "strongly_convex": bool(eig[0] > tol)}
    return BenchmarkProblem("regularity", oracles, g_eval, meta, extras={"A": A, "B": B})


def make_quadratic_toy():
    """1-d toy: ``f = 1/2 (x^2 + y^2)``, ``g = 1/2 (y - x)^2``; ``y*(x) = x``."""
    def f_eval(x, y):
        return 0.5 * float(x @ x + y @ y)

    def grad_f(x, y):
        return np.array(x, dtype=float), np.array(y, dtype=float)

    def g_eval(x, y):
        return 0.5 * float((y - x) @ (y - x))

    oracles = ProblemOracles(
        1, 1, f_eval, grad_f,
        grad_y_g=lambda x, y: y - x,
        hvp_yx=lambda x, y, v: -np.asarray(v, dtype=float),
        hvp_yy=lambda x, y, v: np.asarray(v, dtype=float),
        constants={"L_f": 1.0, "L_h": 4.0, "L_yy_g": 1.0, "L_yx_g": 1.0, "f_lower": 0.0},
        g_eval=g_eval,
        grad_x_g=lambda x, y: x - y,
    )
    meta = {"seed": None, "dims": [1, 1], "condition_number": 1.0, "strongly_convex": True}
    return BenchmarkProblem("quadratic_toy", oracles, g_eval, meta, ground_truth=lambda x: np.array(x, dtype=float))


REGISTRY = {
    "sc_synthetic": make_sc_synthetic,
    "nc_synthetic": make_nc_synthetic,
    "coreset": make_coreset,
    "dhc": make_dhc,
    "regularity": make_regularity_example,
}


def make_problem(name, **params) -> BenchmarkProblem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# finite-difference validation

def _rel_err(a, b, floor=1e-12):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def _fd_partial(fun, z, idx, step):
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        t = step * max(1.0, abs(z[i]))
        zp = z.copy()
        zm = z.copy()
        zp[i] += t
        zm[i] -= t
        out[j] = (fun(zp) - fun(zm)) / (2.0 * t)
    return out


def _coords(dim, max_coords, rng):
    if max_coords is None or dim <= max_coords:
        return np.arange(dim)
    return np.sort(rng.choice(dim, size=max_coords, replace=False))


def finite_diff_report(problem, point, step=1e-6, max_coords=64, seed=0) -> dict:
    """Relative errors of every analytic derivative against central differences.

    Vectors longer than ``max_coords`` are checked on a seeded coordinate subset.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    o = problem.oracles
    x, y = (np.array(v, dtype=float) for v in point)
    n = o.dim_x
    rng = np.random.default_rng(seed)
    ix = _coords(n, max_coords, rng)
    iy = _coords(o.dim_y, max_coords, rng)

    def split(fun):
        fx = lambda xx: fun(xx, y)
        fy = lambda yy: fun(x, yy)
        return fx, fy

    report = {}

    def check(name, fun, gx, gy):
        fx, fy = split(fun)
        if gx is not None:
            report[name + "_x"] = _rel_err(_fd_partial(fx, x, ix, step), np.asarray(gx)[ix])
        report[name + "_y"] = _rel_err(_fd_partial(fy, y, iy, step), np.asarray(gy)[iy])

    gfx, gfy = o.grad_f(x, y)
    check("grad_f", o.f_eval, gfx, gfy)
    g = problem.g_eval
    gx_g = o.grad_x_g(x, y) if o.grad_x_g is not None else None
    check("grad_g", g, gx_g, o.grad_y_g(x, y))
    ghx, ghy = grad_h(o, x, y)
    check("grad_h", lambda a, b: eval_h(o, a, b), ghx, ghy)
    v = rng.standard_normal(o.dim_y)
    check("hvp", lambda a, b: float(v @ o.grad_y_g(a, b)), o.hvp_yx(x, y, v), o.hvp_yy(x, y, v))
    return report


def finite_diff_check(problem, point, step=1e-6, max_coords=64, seed=0) -> float:
    """Worst relative error over all derivative oracles at ``point``."""
    return max(finite_diff_report(problem, point, step, max_coords, seed).values())


def hvp_symmetry(problem, point, seed=0, probes=5) -> float:
    """Largest normalized asymmetry ``|u.Hv - v.Hu|`` of ``hvp_yy`` over random probes."""
    o = problem.oracles
    x, y = point
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        u = rng.standard_normal(o.dim_y)
        v = rng.standard_normal(o.dim_y)
        a = float(u @ o.hvp_yy(x, y, v))
        b = float(v @ o.hvp_yy(x, y, u))
        worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
    return worst
