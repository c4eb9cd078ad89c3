"""Empirical rates on the strongly convex synthetic problem.

Runs both schedules for several budgets K and fits log-log slopes of the averaged
residuals. Theory predicts -2/3 for the regular variant and -1/3 for the general one.
Takes about 20 seconds.
"""

from pbgd import problems
from pbgd.metrics import rate_slope
from pbgd.solver import make_config, run, warm_start

problem = problems.make_sc_synthetic()
x0, y0 = problem.initial_point(0)
Ks = [1_000, 10_000, 100_000]

for schedule, metrics in (("cor1", ("delta_sq", "grad_h_sq")), ("cor3", ("delta_sq", "h_val"))):
    means = {m: [] for m in metrics}
    for K in Ks:
        cfg = make_config(schedule, K, problem.oracles.constants)
        y = warm_start(problem.oracles, x0, y0, cfg.alpha, cfg.C0)
        trace = run(problem.oracles, cfg, x0, y)
        for m in metrics:
            means[m].append(trace.mean(m))
        print(f"{schedule} K={K:>6}: " + ", ".join(f"mean {m} {means[m][-1]:.3e}" for m in metrics))
    for m in metrics:
        print(f"  slope of mean {m}: {rate_slope(zip(Ks, means[m])):.3f}")
