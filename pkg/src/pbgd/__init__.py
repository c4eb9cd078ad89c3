"""Bilevel optimization by perturbed gradient descent with closed-form QP directions."""

from .core_qp import (StepResult, direction, eval_h, grad_h, multiplier, qp_brute_oracle,
                      rho_general, rho_regular, solve_qp)
from .oracles import CountingOracles, EvaluationError, ProblemOracles
from .solver import (ConfigError, Criterion, DivergenceError, IterateRecord, RhoVariant,
                     SolverConfig, Trace, WarmStartError, best_iterate, make_config, run,
                     schedule_cor1, schedule_cor3, warm_start)

__version__ = "0.1.0"
