"""Least-squares lower level g = ||Ay - Bx||^2 / 2 satisfies a regularity bound.

||grad_y g|| <= c ||grad h|| with c = 1 / (2 sigma_min^+(A^T A)), so driving ||grad h||^2
to eps also drives h = ||grad_y g||^2 below c^2 eps.
"""

import numpy as np

from pbgd import core_qp, problems
from pbgd.solver import best_iterate, make_config, run, warm_start

problem = problems.make_regularity_example()
c = problem.metadata["regularity_c"]
rng = np.random.default_rng(0)
ratios = []
for _ in range(100):
    x, y = problem.sample_point(rng)
    gx, gy = core_qp.grad_h(problem.oracles, x, y)
    ratios.append(np.linalg.norm(problem.oracles.grad_y_g(x, y)) / np.linalg.norm(np.r_[gx, gy]))
print(f"c = {c:.4f}; largest ||grad_y g|| / ||grad h|| over 100 points = {max(ratios):.4f}")

x0, y0 = problem.initial_point(0)
cfg = make_config("cor1", 20_000, problem.oracles.constants)
trace = run(problem.oracles, cfg, x0, warm_start(problem.oracles, x0, y0, cfg.alpha, cfg.C0))
r = trace.records[best_iterate(trace)]
print(f"best iterate k={r.k}: ||grad h||^2 = {r.grad_h_sq:.3e}, h = {r.h_val:.3e} "
      f"<= c^2 ||grad h||^2 = {c * c * r.grad_h_sq:.3e}")
