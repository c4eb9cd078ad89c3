"""Perturbed gradient descent for bilevel problems: warm start, schedules, main loop."""

from __future__ import annotations

import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import core_qp
from .oracles import CountingOracles, check_finite

DIVERGENCE_BOUND = 1e12


class RhoVariant(str, enum.Enum):
    REGULAR = "regular"   # rho = ||grad h||^2
    GENERAL = "general"   # rho = ||grad h|| * sqrt(h0)


class Criterion(str, enum.Enum):
    MAX_GRAD_H_AND_STATIONARITY = "max_grad_h_and_stationarity"
    MAX_H_AND_STATIONARITY = "max_h_and_stationarity"


class ConfigError(ValueError):
    pass


class WarmStartError(RuntimeError):
    def __init__(self, h_final, threshold, iters):
        self.h_final = h_final
        self.threshold = threshold
        self.iters = iters
        super().__init__(f"warm start failed after {iters} steps: h = {h_final:.3e} > "
                         f"alpha^2 C0 = {threshold:.3e}; raise C0 or the budget")


class DivergenceError(RuntimeError):
    def __init__(self, k, trace):
        self.k = k
        self.trace = trace
        super().__init__(f"iterate diverged at k={k}")


@dataclass(frozen=True)
class SolverConfig:
    K: int
    alpha: float
    gamma: float
    C0: float = 1.0
    rho_variant: RhoVariant = RhoVariant.REGULAR
    h0: Optional[float] = None
    denom_tol: float = core_qp.DEFAULT_DENOM_TOL
    warm_start_budget: int = 10_000
    warm_start_step: Optional[float] = None
    seed: int = 0
    record_every: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "rho_variant", RhoVariant(self.rho_variant))
        if self.record_every is None:
            object.__setattr__(self, "record_every", max(1, self.K // 10_000))
        self.validate()

    def validate(self):
        if not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K!r}")
        for name in ("alpha", "gamma", "C0", "denom_tol"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be positive, got {val!r}")
        if self.h0 is not None and self.h0 < 0:
            raise ConfigError("h0 must be nonnegative")
        if self.warm_start_budget < 1:
            raise ConfigError("warm_start_budget must be >= 1")
        if self.warm_start_step is not None and not self.warm_start_step > 0:
            raise ConfigError("warm_start_step must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["rho_variant"] = self.rho_variant.value
        return d


@dataclass(frozen=True)
class IterateRecord:
    k: int
    f_val: float
    h_val: float
    grad_h_sq: float
    delta_sq: float
    lam: float
    kkt_stationarity: float
    rho: float = 0.0
    alpha: float = 0.0
    slack: float = 0.0
    hypergrad_norm: float = math.nan
    wall_nanos: int = 0
    oracle_calls: dict = field(default_factory=dict)

    def same_values(self, other) -> bool:
        """Equality ignoring wall-clock time."""
        return _nan_equal(dataclasses.replace(self, wall_nanos=0),
                          dataclasses.replace(other, wall_nanos=0))


def _nan_equal(a, b):
    for u, v in zip(dataclasses.astuple(a), dataclasses.astuple(b)):
        if isinstance(u, float) and isinstance(v, float) and math.isnan(u) and math.isnan(v):
            continue
        if u != v:
            return False
    return True


@dataclass
class Trace:
    config: object
    records: list
    final_x: np.ndarray
    final_y: np.ndarray
    problem_name: str = ""
    schedule_name: str = ""
    diverged: bool = False
    # running sums over every iteration (not only recorded ones)
    sums: dict = field(default_factory=lambda: {"delta_sq": 0.0, "grad_h_sq": 0.0, "h_val": 0.0})
    iterations: int = 0

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def mean(self, name):
        """Mean over all iterations when tracked, else over the recorded ones."""
        if name in self.sums and self.iterations:
            return self.sums[name] / self.iterations
        return float(np.mean(self.column(name)))


# ---------------------------------------------------------------------------

def warm_start(oracle, x0, y0, alpha, C0, budget=10_000, step=None, return_iters=False):
    """Gradient descent on ``g(x0, .)`` until ``||grad_y g(x0, y)||^2 <= alpha^2 C0``.

    Without an explicit step, uses ``1 / L_yy_g`` when the oracle knows it and ``1e-2``
    otherwise. When ``g`` can be evaluated the step is halved whenever ``g`` increases.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if step is None:
        lyy = oracle.constants.get("L_yy_g")
        step = 1.0 / lyy if lyy else 1e-2
    threshold = alpha ** 2 * C0
    x0 = np.asarray(x0, dtype=float)
    y = np.array(y0, dtype=float, copy=True)
    g_eval = oracle.g_eval
    g_cur = g_eval(x0, y) if g_eval is not None else None
    gy = check_finite(oracle.grad_y_g(x0, y), "grad_y_g", x0, y)
    h = float(gy @ gy)
    it = 0
    while h > threshold:
        if it >= budget:
            raise WarmStartError(h, threshold, it)
        y_new = y - step * gy
        if g_eval is not None:
            g_new = g_eval(x0, y_new)
            # backtrack on increase; a rejected trial still consumes budget
            if not g_new <= g_cur:
                step *= 0.5
                it += 1
                continue
            g_cur = g_new
        y = y_new
        gy = check_finite(oracle.grad_y_g(x0, y), "grad_y_g", x0, y)
        h = float(gy @ gy)
        it += 1
    return (y, it) if return_iters else y


def schedule_cor1(K, L_f, L_h):
    """``alpha = K^(-1/3)``, ``gamma = min(alpha, 1 / (L_f + alpha L_h))``."""
    if K < 1 or L_f <= 0 or L_h <= 0:
        raise ValueError("need K >= 1 and positive constants")
    alpha = K ** (-1.0 / 3.0)
    return alpha, min(alpha, 1.0 / (L_f + alpha * L_h))


def schedule_cor3(K, L_f):
    """``alpha = K^(-1/6)``, ``gamma = min(K^(-2/3), 1 / L_f)``."""
    if K < 1 or L_f <= 0:
        raise ValueError("need K >= 1 and positive L_f")
    return K ** (-1.0 / 6.0), min(K ** (-2.0 / 3.0), 1.0 / L_f)


def make_config(schedule, K, constants, **overrides):
    """Build a :class:`SolverConfig` from a named schedule ("cor1" or "cor3")."""
    if schedule == "cor1":
        alpha, gamma = schedule_cor1(K, constants["L_f"], constants["L_h"])
        variant = RhoVariant.REGULAR
    elif schedule == "cor3":
        alpha, gamma = schedule_cor3(K, constants["L_f"])
        variant = RhoVariant.GENERAL
    else:
        raise ConfigError(f"unknown schedule {schedule!r}")
    kw = dict(K=K, alpha=alpha, gamma=gamma, rho_variant=variant)
    kw.update(overrides)
    return SolverConfig(**kw)


def _uncounted(oracle):
    return oracle.base if isinstance(oracle, CountingOracles) else oracle


def _oracle_snapshot(oracle):
    return oracle.snapshot() if isinstance(oracle, CountingOracles) else {}


def run(oracle, config: SolverConfig, x0, y0, *, hypergrad: Optional[Callable] = None,
        callback: Optional[Callable] = None, problem_name="", schedule_name="") -> Trace:
    """Run K iterations of the perturbed gradient method from a warm-started point.

    ``hypergrad(x, y)``, if given, is evaluated at recorded iterates for monitoring
    only. ``callback(k, x, y, step)`` sees every iterate.
    """
    config.validate()
    x = np.array(x0, dtype=float, copy=True)
    y = np.array(y0, dtype=float, copy=True)
    gy0 = check_finite(oracle.grad_y_g(x, y), "grad_y_g", x, y)
    h_start = float(gy0 @ gy0)
    if h_start > config.alpha ** 2 * config.C0 * (1 + 1e-12):
        raise ConfigError(f"initial point violates the warm-start condition: h = {h_start:.3e} > "
                          f"alpha^2 C0 = {config.alpha ** 2 * config.C0:.3e}")
    if config.rho_variant is RhoVariant.GENERAL and config.h0 is None:
        config = dataclasses.replace(config, h0=h_start)
    alpha, gamma = config.alpha, config.gamma
    trace = Trace(config, [], x, y, problem_name, schedule_name)
    t_start = time.perf_counter_ns()
    gy = gy0
    for k in range(config.K):
        if k > 0:
            gy = check_finite(oracle.grad_y_g(x, y), "grad_y_g", x, y)
        gfx, gfy = oracle.grad_f(x, y)
        check_finite(gfx, "grad_f", x, y)
        check_finite(gfy, "grad_f", x, y)
        ghx, ghy = core_qp.grad_h(oracle, x, y, grad_y_g=gy)
        if config.rho_variant is RhoVariant.REGULAR:
            rho = core_qp.rho_regular(ghx, ghy)
        else:
            rho = core_qp.rho_general(ghx, ghy, config.h0)
        step = core_qp.solve_qp(gfx, gfy, ghx, ghy, rho, alpha, config.denom_tol)
        if callback is not None:
            callback(k, x, y, step)
        h_val = float(gy @ gy)
        gh_sq = core_qp.sq_norm(ghx, ghy)
        dsq = step.delta_sq
        trace.sums["delta_sq"] += dsq
        trace.sums["grad_h_sq"] += gh_sq
        trace.sums["h_val"] += h_val
        trace.iterations = k + 1
        if k % config.record_every == 0 or k == config.K - 1:
            trace.records.append(IterateRecord(
                k=k, f_val=float(_uncounted(oracle).f_eval(x, y)), h_val=h_val,
                grad_h_sq=gh_sq, delta_sq=dsq, lam=step.lam,
                kkt_stationarity=dsq, rho=rho, alpha=alpha, slack=step.constraint_slack,
                hypergrad_norm=float(np.linalg.norm(hypergrad(x, y))) if hypergrad else math.nan,
                wall_nanos=time.perf_counter_ns() - t_start,
                oracle_calls=_oracle_snapshot(oracle)))
        x = x + gamma * step.delta_x
        y = y + gamma * step.delta_y
        if not (np.all(np.abs(x) < DIVERGENCE_BOUND) and np.all(np.abs(y) < DIVERGENCE_BOUND)):
            trace.diverged = True
            raise DivergenceError(k, trace)
    trace.final_x, trace.final_y = x, y
    return trace


def best_iterate(trace, criterion=Criterion.MAX_GRAD_H_AND_STATIONARITY) -> int:
    """Index (into ``trace.records``) of the first record minimizing the criterion."""
    if not trace.records:
        raise ValueError("empty trace")
    criterion = Criterion(criterion)
    second = "grad_h_sq" if criterion is Criterion.MAX_GRAD_H_AND_STATIONARITY else "h_val"
    vals = np.maximum(trace.column(second), trace.column("kkt_stationarity"))
    return int(np.argmin(vals))


def resolve_constants(oracle, x0, y0, seed=0):
    """Problem constants, with L_f / L_h estimated by sampling when absent."""
    consts = dict(oracle.constants)
    if "L_f" in consts and "L_h" in consts:
        return consts
    from .metrics import estimate_constants

    est = estimate_constants(oracle, x0, y0, seed=seed)
    for key, val in est.items():
        consts.setdefault(key, val)
    return consts
