"""Nonconvex lower level g = cos(||Hy - x||^2 / 2): ours versus BOME.

AID is not applicable here (no strong convexity), so the comparison is with BOME on
the residual ||Delta||^2 and the lower-level stationarity h, per oracle call.
"""

import numpy as np

from pbgd import problems
from pbgd.baselines import BaselineConfig, bome_run
from pbgd.oracles import CountingOracles
from pbgd.solver import make_config, resolve_constants, run, warm_start

problem = problems.make_nc_synthetic()
x0, y0 = problem.initial_point(0)
consts = resolve_constants(problem.oracles, x0, y0)
print(f"estimated L_f = {consts['L_f']:.2f}, L_h = {consts['L_h']:.2f}")

K = 20_000
oracle = CountingOracles(problem.oracles)
cfg = make_config("cor1", K, consts)
y = warm_start(oracle, x0, y0, cfg.alpha, cfg.C0)
ours = run(oracle, cfg, x0, y)

bome = bome_run(problem, x0, y0, BaselineConfig("bome", K=K // 5, outer_step=0.01, record_every=K // 500))

for name, tr in (("ours", ours), ("BOME", bome)):
    calls = sum(tr.records[-1].oracle_calls.values())
    d = tr.column("delta_sq")
    print(f"{name:>5}: {calls:>7} oracle calls, final h {tr.records[-1].h_val:.2e}, "
          f"best ||Delta||^2 {np.min(d):.2e}")
