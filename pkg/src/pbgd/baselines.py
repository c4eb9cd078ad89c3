"""Comparison methods: AID hypergradient descent (CG inner solves) and BOME."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core_qp import grad_h, sq_norm
from .oracles import CountingOracles, check_finite
from .solver import DIVERGENCE_BOUND, ConfigError, DivergenceError, IterateRecord, Trace


class IndefiniteError(ArithmeticError):
    """CG met a direction of nonpositive curvature."""


class CGResult(NamedTuple):
    v: np.ndarray
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "aid"
    K: int = 1000
    outer_step: float = 0.1
    inner_iters: Optional[int] = None    # None: 10 for AID, 5 for BOME
    inner_step: Optional[float] = None   # None: 1 / L_yy_g when known
    cg_tol: float = 1e-10
    cg_max_iters: int = 100
    bome_eta: float = 0.5
    record_every: int = 1

    def __post_init__(self):
        if self.method not in ("aid", "bome"):
            raise ConfigError(f"unknown baseline {self.method!r}")
        if self.inner_iters is None:
            object.__setattr__(self, "inner_iters", 10 if self.method == "aid" else 5)
        for name in ("K", "inner_iters", "cg_max_iters", "record_every"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val!r}")
        for name in ("outer_step", "cg_tol", "bome_eta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.inner_step is not None and not self.inner_step > 0:
            raise ConfigError("inner_step must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)


def cg_solve(hvp: Callable, b, tol=1e-10, max_iters=100) -> CGResult:
    """Conjugate gradients for ``hvp(v) = b``, stopping at ``||r|| <= tol max(1, ||b||)``."""
    b = np.asarray(b, dtype=float)
    v = np.zeros_like(b)
    r = b.copy()
    target = tol * max(1.0, float(np.linalg.norm(b)))
    rr = float(r @ r)
    if math.sqrt(rr) <= target:
        return CGResult(v, math.sqrt(rr), 0, True)
    p = r.copy()
    best_v, best_res = v.copy(), math.sqrt(rr)
    for it in range(1, max_iters + 1):
        Ap = np.asarray(hvp(p), dtype=float)
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise IndefiniteError(f"nonpositive curvature {curv:.3e} at CG iteration {it}")
        step = rr / curv
        v = v + step * p
        r = r - step * Ap
        rr_new = float(r @ r)
        res = math.sqrt(rr_new)
        if res < best_res:
            best_v, best_res = v.copy(), res
        if res <= target:
            return CGResult(v, res, it, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(best_v, best_res, max_iters, False)


def aid_hypergradient(oracle, x, y, cg_tol=1e-10, cg_max_iters=100):
    """Surrogate hypergradient ``grad_x f - (d grad_y g / dx)^T v`` with
    ``(d grad_y g / dy) v = grad_y f`` solved by CG."""
    gfx, gfy = oracle.grad_f(x, y)
    sol = cg_solve(lambda u: oracle.hvp_yy(x, y, u), gfy, cg_tol, cg_max_iters)
    if not np.any(sol.v):
        return np.array(gfx, dtype=float)
    return gfx - oracle.hvp_yx(x, y, sol.v)


def hypergradient_monitor(problem, cg_tol=1e-12):
    """Callable ``(x, y) -> F(x, y)`` on the raw (uncounted) oracles, for traces."""
    o = problem.oracles
    return lambda x, y: aid_hypergradient(o, x, y, cg_tol, cg_max_iters=10 * o.dim_y + 10)


def _require_sc(problem):
    if not problem.strongly_convex:
        raise ConfigError(f"AID needs a strongly convex lower level; {problem.name} is not")


def _inner_step(cfg, oracle):
    if cfg.inner_step is not None:
        return cfg.inner_step
    lyy = oracle.constants.get("L_yy_g")
    return 1.0 / lyy if lyy else 1e-2


def _raw(oracle):
    return oracle.base if isinstance(oracle, CountingOracles) else oracle


def _guard(k, x, y, trace):
    if not (np.all(np.abs(x) < DIVERGENCE_BOUND) and np.all(np.abs(y) < DIVERGENCE_BOUND)
            and np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        trace.diverged = True
        raise DivergenceError(k, trace)


def _gradh_sq(oracle, x, y):
    ghx, ghy = grad_h(_raw(oracle), x, y)
    return sq_norm(ghx, ghy)


def aid_run(problem, x0, cfg: BaselineConfig, y0=None, oracle=None,
            hypergrad: Optional[Callable] = None) -> Trace:
    """Double loop: ``inner_iters`` gradient steps on ``g(x, .)`` (warm-started across
    outer iterations), then ``x <- x - outer_step F(x, y)``.

    Records use ``||F||^2`` as the stationarity metric and ``||F||`` as the hypergradient
    norm unless a separate ``hypergrad`` monitor is given.
    """
    _require_sc(problem)
    oracle = oracle if oracle is not None else CountingOracles(problem.oracles)
    x = np.array(x0, dtype=float, copy=True)
    y = np.zeros(oracle.dim_y) if y0 is None else np.array(y0, dtype=float, copy=True)
    eta = _inner_step(cfg, oracle)
    trace = Trace(cfg, [], x, y, problem.name, "aid")
    t0 = time.perf_counter_ns()
    for k in range(cfg.K):
        for _ in range(cfg.inner_iters):
            y = y - eta * check_finite(oracle.grad_y_g(x, y), "grad_y_g", x, y)
        F = aid_hypergradient(oracle, x, y, cfg.cg_tol, cfg.cg_max_iters)
        check_finite(F, "hypergradient", x, y)
        if k % cfg.record_every == 0 or k == cfg.K - 1:
            raw = _raw(oracle)
            gy = raw.grad_y_g(x, y)
            fsq = float(F @ F)
            hg = float(np.linalg.norm(hypergrad(x, y))) if hypergrad else math.sqrt(fsq)
            trace.records.append(IterateRecord(
                k=k, f_val=float(raw.f_eval(x, y)), h_val=float(gy @ gy),
                grad_h_sq=_gradh_sq(oracle, x, y), delta_sq=fsq, lam=0.0, kkt_stationarity=fsq,
                hypergrad_norm=hg, wall_nanos=time.perf_counter_ns() - t0,
                oracle_calls=oracle.snapshot() if isinstance(oracle, CountingOracles) else {}))
        x = x - cfg.outer_step * F
        _guard(k, x, y, trace)
    trace.final_x, trace.final_y = x, y
    return trace


def bome_multiplier(gf, gq, eta):
    """``[eta ||grad q|| - grad f . grad q]_+ / ||grad q||^2``; zero when ``grad q = 0``."""
    qq = float(gq @ gq)
    if qq == 0.0:
        return 0.0
    return max(eta * math.sqrt(qq) - float(gf @ gq), 0.0) / qq


def bome_run(problem, x0, y0, cfg: BaselineConfig, oracle=None,
             hypergrad: Optional[Callable] = None) -> Trace:
    """Value-function method: ``inner_iters`` steps on ``g(x, .)`` give ``y_hat``, then
    ``(x, y)`` moves along ``-(grad f + lam grad q)`` with ``q = g(x, y) - g(x, y_hat)``."""
    oracle = oracle if oracle is not None else CountingOracles(problem.oracles)
    if problem.oracles.grad_x_g is None:
        raise ConfigError("BOME needs grad_x_g")
    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    n = oracle.dim_x
    eta = _inner_step(cfg, oracle)
    trace = Trace(cfg, [], x, y, problem.name, "bome")
    t0 = time.perf_counter_ns()
    for k in range(cfg.K):
        y_hat = y.copy()
        for _ in range(cfg.inner_iters):
            y_hat = y_hat - eta * check_finite(oracle.grad_y_g(x, y_hat), "grad_y_g", x, y_hat)
        gfx, gfy = oracle.grad_f(x, y)
        gy = oracle.grad_y_g(x, y)
        gqx = oracle.grad_x_g(x, y) - oracle.grad_x_g(x, y_hat)
        gf = np.concatenate([gfx, gfy])
        gq = np.concatenate([gqx, gy])
        check_finite(gq, "grad q", x, y)
        lam = bome_multiplier(gf, gq, cfg.bome_eta)
        d = gf + lam * gq
        if k % cfg.record_every == 0 or k == cfg.K - 1:
            raw = _raw(oracle)
            dsq = float(d @ d)
            trace.records.append(IterateRecord(
                k=k, f_val=float(raw.f_eval(x, y)), h_val=float(gy @ gy),
                grad_h_sq=_gradh_sq(oracle, x, y), delta_sq=dsq, lam=lam, kkt_stationarity=dsq,
                hypergrad_norm=float(np.linalg.norm(hypergrad(x, y))) if hypergrad else math.nan,
                wall_nanos=time.perf_counter_ns() - t0,
                oracle_calls=oracle.snapshot() if isinstance(oracle, CountingOracles) else {}))
        x = x - cfg.outer_step * d[:n]
        y = y - cfg.outer_step * d[n:]
        _guard(k, x, y, trace)
    trace.final_x, trace.final_y = x, y
    return trace
