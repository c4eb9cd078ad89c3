"""One direction-finding step by hand, then the same step through the library.

Toy problem: f = (x^2 + y^2) / 2 and g = (y - x)^2 / 2 at (x, y) = (1, 0).
"""

import numpy as np

from pbgd import core_qp
from pbgd.problems import make_quadratic_toy

oracle = make_quadratic_toy().oracles
x, y = np.array([1.0]), np.array([0.0])

gfx, gfy = oracle.grad_f(x, y)
ghx, ghy = core_qp.grad_h(oracle, x, y)
print("grad f =", gfx, gfy, " grad h =", ghx, ghy)

# regular rho = ||grad h||^2 = 8; with alpha = 1 the constraint is active
rho = core_qp.rho_regular(ghx, ghy)
step = core_qp.solve_qp(gfx, gfy, ghx, ghy, rho, alpha=1.0)
print(f"lambda = {step.lam}, direction = ({step.delta_x[0]}, {step.delta_y[0]})")
print(f"linearized constraint slack = {step.constraint_slack}")

# the projection of -grad f onto the half-space gives the same answer
bx, by, blam = core_qp.qp_brute_oracle(gfx, gfy, ghx, ghy, rho, 1.0)
print(f"projection oracle: lambda = {blam}, direction = ({bx[0]}, {by[0]})")

# a step of size 0.1 moves to (0.75, 0.15)
print("next iterate:", x + 0.1 * step.delta_x, y + 0.1 * step.delta_y)
