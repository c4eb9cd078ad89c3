"""Implementations of the ``run``, ``rate-sweep`` and ``validate`` commands."""

from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import core_qp, problems
from ..baselines import BaselineConfig, aid_run, bome_run, hypergradient_monitor
from ..metrics import rate_slope
from ..oracles import CountingOracles, EvaluationError
from ..solver import (ConfigError, Criterion, DivergenceError, WarmStartError, best_iterate,
                      make_config, resolve_constants, run, warm_start)
from . import output
from .config import ConfigFileError, load_config

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

# acceptance thresholds on log-log slopes, per schedule
RATE_THRESHOLDS = {
    "ours_cor1": {"delta_sq": -0.4, "grad_h_sq": -0.4},
    "ours_cor3": {"h_val": -0.2, "delta_sq": -0.2},
}


def _job_list(cfg, record_every):
    jobs = []
    for spec in cfg.methods:
        for K in cfg.K_list:
            jobs.append({
                "problem": cfg.problem, "problem_params": dict(cfg.problem_params),
                "method": spec.name, "overrides": dict(spec.overrides), "K": K,
                "seed": cfg.seed, "record_every": record_every,
                "monitor": cfg.monitor_hypergradient,
            })
    return jobs


def execute_job(job) -> dict:
    """Run one (method, K) combination. Pure function of ``job``; safe in a worker process."""
    problem = problems.make_problem(job["problem"], **job["problem_params"])
    x0, y0 = problem.initial_point(job["seed"])
    oracle = CountingOracles(problem.oracles)
    monitor = hypergradient_monitor(problem) if job["monitor"] and problem.strongly_convex else None
    method, K = job["method"], job["K"]
    resolved = {"problem": job["problem"], "problem_params": job["problem_params"],
                "problem_metadata": problem.metadata, "method": method, "K": K,
                "seed": job["seed"]}
    t0 = time.perf_counter()
    diverged = False
    error = None
    try:
        if method.startswith("ours"):
            schedule = method.split("_", 1)[1]
            consts = resolve_constants(problem.oracles, x0, y0, seed=job["seed"])
            overrides = dict(job["overrides"])
            overrides.setdefault("seed", job["seed"])
            if job["record_every"] is not None:
                overrides["record_every"] = job["record_every"]
            scfg = make_config(schedule, K, consts, **overrides)
            resolved["constants"] = {k: float(v) for k, v in consts.items()}
            y_ws, ws_iters = warm_start(oracle, x0, y0, scfg.alpha, scfg.C0,
                                        scfg.warm_start_budget, scfg.warm_start_step,
                                        return_iters=True)
            resolved["warm_start_iterations"] = ws_iters
            try:
                trace = run(oracle, scfg, x0, y_ws, hypergrad=monitor,
                            problem_name=problem.name, schedule_name=schedule)
            except DivergenceError as exc:
                trace, diverged, error = exc.trace, True, str(exc)
        else:
            kw = dict(job["overrides"])
            kw["K"] = K
            if job["record_every"] is not None:
                kw["record_every"] = job["record_every"]
            bcfg = BaselineConfig(method=method, **kw)
            try:
                if method == "aid":
                    trace = aid_run(problem, x0, bcfg, y0=y0, oracle=oracle, hypergrad=monitor)
                else:
                    trace = bome_run(problem, x0, y0, bcfg, oracle=oracle, hypergrad=monitor)
            except DivergenceError as exc:
                trace, diverged, error = exc.trace, True, str(exc)
    except (WarmStartError, EvaluationError, ConfigError) as exc:
        return {"job": job, "trace": None, "diverged": False, "error": f"{type(exc).__name__}: {exc}",
                "resolved": resolved, "oracle_calls": oracle.snapshot(),
                "wall_seconds": time.perf_counter() - t0}
    resolved["solver_config"] = trace.config.to_dict()
    return {"job": job, "trace": trace, "diverged": diverged, "error": error,
            "resolved": resolved, "oracle_calls": oracle.snapshot(),
            "wall_seconds": time.perf_counter() - t0}


def run_jobs(jobs, n_workers=1):
    if n_workers <= 1 or len(jobs) <= 1:
        return [execute_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(execute_job, jobs))


def _record_dict(r):
    return {"k": r.k, "f": r.f_val, "h": r.h_val, "grad_h_sq": r.grad_h_sq,
            "delta_sq": r.delta_sq, "lambda": r.lam, "kkt_stationarity": r.kkt_stationarity,
            "hypergrad_norm": None if np.isnan(r.hypergrad_norm) else r.hypergrad_norm}


def _csv_name(res):
    j = res["job"]
    return f"{j['problem']}_{j['method']}_K{j['K']}.csv"


def _run_summary(res):
    out = {"method": res["job"]["method"], "K": res["job"]["K"], "diverged": res["diverged"],
           "error": res["error"], "oracle_calls": res["oracle_calls"],
           "oracle_calls_total": int(sum(res["oracle_calls"].values())),
           "wall_seconds": res["wall_seconds"], "resolved_config": res["resolved"]}
    trace = res["trace"]
    if trace is not None and trace.records:
        out["trace_csv"] = _csv_name(res)
        out["final"] = _record_dict(trace.records[-1])
        crit = (Criterion.MAX_H_AND_STATIONARITY if trace.schedule_name == "cor3"
                else Criterion.MAX_GRAD_H_AND_STATIONARITY)
        out["best_criterion"] = crit.value
        out["best"] = _record_dict(trace.records[best_iterate(trace, crit)])
        if trace.iterations:
            out["means"] = {k: trace.mean(k) for k in trace.sums}
    return out


def _write_outputs(cfg, results, out_dir, emit_plots):
    for res in results:
        if res["trace"] is not None:
            output.write_trace_csv(os.path.join(out_dir, _csv_name(res)), res["trace"].records)
    if emit_plots:
        for K in cfg.K_list:
            for column, label in (("kkt_stationarity", "stationarity"), ("h_val", "h")):
                series = {}
                for res in results:
                    tr = res["trace"]
                    if res["job"]["K"] == K and tr is not None and tr.records:
                        series[res["job"]["method"]] = (tr.column("k"), tr.column(column))
                if series:
                    output.write_svg(os.path.join(out_dir, f"{cfg.problem}_K{K}_{label}.svg"),
                                     series, title=f"{cfg.problem}, K={K}", ylabel=label)


def _load(config_path, out_dir, record_every):
    cfg = load_config(config_path)
    out = out_dir if out_dir is not None else cfg.output_dir
    rec = record_every if record_every is not None else cfg.record_every
    return cfg, out, rec


def cmd_run(config_path, output_dir=None, jobs=1, record_every=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg, out_dir, rec = _load(config_path, output_dir, record_every)
    except ConfigFileError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    results = run_jobs(_job_list(cfg, rec), jobs)
    _write_outputs(cfg, results, out_dir, cfg.emit_plot_data)
    runs = [_run_summary(r) for r in results]
    diverged = any(r["diverged"] for r in results)
    failed = [r for r in results if r["trace"] is None]
    summary = {"command": "run", "config": cfg.to_dict(), "output_dir": out_dir,
               "record_every": rec, "diverged": diverged, "partial": diverged or bool(failed),
               "runs": runs}
    output.write_json(os.path.join(out_dir, "summary.json"), summary)
    for r in results:
        if r["error"]:
            print(f"{r['job']['method']} K={r['job']['K']}: {r['error']}", file=stderr)
    if diverged:
        return EXIT_DIVERGED
    return EXIT_FAILED if failed else EXIT_OK


def _sweep_check(cfg, path):
    from .config import _line_of

    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError:
        text = ""
    Ks = sorted(cfg.K_list)
    if len(set(Ks)) < 3 or Ks[-1] < 100 * Ks[0]:
        raise ConfigFileError(path, _line_of(text, "K_list"),
                              "rate sweep needs >= 3 distinct K spanning >= 2 decades")
    for spec in cfg.methods:
        if spec.name not in RATE_THRESHOLDS:
            raise ConfigFileError(path, _line_of(text, "methods"),
                                  f"rate sweep supports {sorted(RATE_THRESHOLDS)}, not {spec.name!r}")


def cmd_rate_sweep(config_path, output_dir=None, jobs=1, record_every=None,
                   stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg, out_dir, rec = _load(config_path, output_dir, record_every)
        _sweep_check(cfg, config_path)
    except ConfigFileError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    results = run_jobs(_job_list(cfg, rec), jobs)
    _write_outputs(cfg, results, out_dir, cfg.emit_plot_data)
    diverged = any(r["diverged"] for r in results)
    failed = any(r["trace"] is None for r in results)
    rates = {}
    all_pass = not (diverged or failed)
    for spec in cfg.methods:
        mine = [r for r in results if r["job"]["method"] == spec.name and r["trace"] is not None
                and not r["diverged"]]
        entry = {"K": [r["job"]["K"] for r in mine], "means": {}, "slopes": {}, "thresholds": {},
                 "passed": {}}
        for metric, thr in RATE_THRESHOLDS[spec.name].items():
            vals = [r["trace"].mean(metric) for r in mine]
            entry["means"][metric] = vals
            try:
                slope = rate_slope(zip(entry["K"], vals))
            except ValueError:
                slope = None
            entry["slopes"][metric] = slope
            entry["thresholds"][metric] = thr
            ok = slope is not None and slope <= thr
            entry["passed"][metric] = ok
            all_pass = all_pass and ok
        rates[spec.name] = entry
        if cfg.emit_plot_data and entry["K"]:
            series = {m: (entry["K"], v) for m, v in entry["means"].items()}
            output.write_svg(os.path.join(out_dir, f"{cfg.problem}_{spec.name}_rates.svg"), series,
                             title=f"{spec.name} mean residuals vs K", xlabel="K", ylabel="mean")
    doc = {"command": "rate-sweep", "config": cfg.to_dict(), "output_dir": out_dir,
           "record_every": rec, "diverged": diverged, "passed": all_pass, "rates": rates,
           "runs": [_run_summary(r) for r in results]}
    output.write_json(os.path.join(out_dir, "rates.json"), doc)
    if diverged:
        return EXIT_DIVERGED
    for name, entry in rates.items():
        for metric, ok in entry["passed"].items():
            if not ok:
                print(f"{name}: slope of mean {metric} = {entry['slopes'][metric]} "
                      f"misses threshold {entry['thresholds'][metric]}", file=stderr)
    return EXIT_OK if all_pass else EXIT_FAILED


# ---------------------------------------------------------------------------
# validate

FD_TOL = 1e-5
SYM_TOL = 1e-10
QP_TOL = 1e-8
N_POINTS = 10


def qp_oracle_error(problem, point, alphas=(0.01, 0.1, 1.0)) -> float:
    """Worst gap between the closed-form QP and the projection oracle at ``point``,
    over both rho variants and several alphas, relative to the solution scale."""
    o = problem.oracles
    x, y = point
    gfx, gfy = o.grad_f(x, y)
    ghx, ghy = core_qp.grad_h(o, x, y)
    h0 = core_qp.eval_h(o, x, y)
    worst = 0.0
    for rho in (core_qp.rho_regular(ghx, ghy), core_qp.rho_general(ghx, ghy, h0)):
        for alpha in alphas:
            step = core_qp.solve_qp(gfx, gfy, ghx, ghy, rho, alpha)
            bx, by, blam = core_qp.qp_brute_oracle(gfx, gfy, ghx, ghy, rho, alpha)
            scale = max(1.0, float(np.max(np.abs(np.concatenate([bx, by])))))
            worst = max(worst,
                        float(np.max(np.abs(step.delta_x - bx))) / scale,
                        float(np.max(np.abs(step.delta_y - by))) / scale,
                        abs(step.lam - blam) / max(1.0, abs(blam)))
    return worst


def validate_problem(problem, seed=0, n_points=N_POINTS) -> dict:
    rng = np.random.default_rng(seed)
    fd = sym = qp = 0.0
    worst_fd_key = None
    for i in range(n_points):
        point = problem.sample_point(rng)
        rep = problems.finite_diff_report(problem, point, seed=seed + i)
        key = max(rep, key=rep.get)
        if rep[key] >= fd:
            fd, worst_fd_key = rep[key], key
        sym = max(sym, problems.hvp_symmetry(problem, point, seed=seed + i))
        qp = max(qp, qp_oracle_error(problem, point))
    checks = {
        "finite_diff": {"value": fd, "tol": FD_TOL, "worst_oracle": worst_fd_key},
        "hvp_symmetry": {"value": sym, "tol": SYM_TOL},
        "qp_oracle": {"value": qp, "tol": QP_TOL},
    }
    for c in checks.values():
        c["passed"] = bool(c["value"] <= c["tol"])
    return {"problem": problem.name, "seed": seed, "points": n_points, "checks": checks,
            "passed": all(c["passed"] for c in checks.values())}


def cmd_validate(problem_name, seed=0, stdout=sys.stdout, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        problem = problems.make_problem(problem_name)
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    report = validate_problem(problem, seed)
    stdout.write(output.to_json(report))
    failed = [name for name, c in report["checks"].items() if not c["passed"]]
    if failed:
        print(f"validation failed: {', '.join(failed)}", file=stderr)
        return EXIT_FAILED
    return EXIT_OK
