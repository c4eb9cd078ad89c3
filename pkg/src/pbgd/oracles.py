"""Oracle bundle shared by the solver, the baselines and the benchmark problems."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

Vector = np.ndarray


class EvaluationError(ArithmeticError):
    """An oracle returned a non-finite value."""

    def __init__(self, what: str, x, y, bad_index=None):
        self.what = what
        self.x = np.array(x, dtype=float, copy=True)
        self.y = np.array(y, dtype=float, copy=True)
        self.bad_index = bad_index
        super().__init__(f"non-finite {what} at x={self.x!r}, y={self.y!r}"
                         f" (offending entries: {bad_index})")


def check_finite(value, what, x, y):
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr.ravel())).tolist()
        raise EvaluationError(what, x, y, bad)
    return value


NONNEGATIVE_CONSTANTS = ("L_f", "L_h", "C_f", "C_g", "L_yy_g", "L_yx_g")


@dataclass(frozen=True)
class ProblemOracles:
    """Callable evaluators of a bilevel problem ``min f(x, y) s.t. y in argmin g(x, .)``.

    ``hvp_yx(x, y, v)`` returns ``(d grad_y g / dx)^T v`` (length ``dim_x``) and
    ``hvp_yy(x, y, v)`` returns ``(d grad_y g / dy)^T v`` (length ``dim_y``).
    ``g_eval`` and ``grad_x_g`` are optional; the warm start uses the former for
    backtracking and the BOME baseline needs the latter.
    """

    dim_x: int
    dim_y: int
    f_eval: Callable[[Vector, Vector], float]
    grad_f: Callable[[Vector, Vector], tuple]
    grad_y_g: Callable[[Vector, Vector], Vector]
    hvp_yx: Callable[[Vector, Vector, Vector], Vector]
    hvp_yy: Callable[[Vector, Vector, Vector], Vector]
    constants: Mapping[str, float] = field(default_factory=dict)
    g_eval: Optional[Callable[[Vector, Vector], float]] = None
    grad_x_g: Optional[Callable[[Vector, Vector], Vector]] = None

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_y < 1:
            raise ValueError("dimensions must be positive")
        for key, val in self.constants.items():
            if key in NONNEGATIVE_CONSTANTS and val < 0:
                raise ValueError(f"constant {key} must be nonnegative, got {val}")


# counter keys; "value" covers f and g evaluations, "grad_g" both grad_y_g and grad_x_g
ORACLE_KINDS = ("value", "grad_f", "grad_g", "hvp")


class CountingOracles:
    """Wraps a :class:`ProblemOracles` and counts calls per oracle kind.

    Exposes the same attributes, so it can be passed wherever oracles are expected.
    """

    def __init__(self, oracles: ProblemOracles):
        self.base = oracles
        self.counts = Counter({k: 0 for k in ORACLE_KINDS})

    def __getattr__(self, name):
        return getattr(self.base, name)

    def snapshot(self) -> dict:
        return {k: int(self.counts[k]) for k in ORACLE_KINDS}

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def f_eval(self, x, y):
        self.counts["value"] += 1
        return self.base.f_eval(x, y)

    @property
    def g_eval(self):
        if self.base.g_eval is None:
            return None

        def counted(x, y):
            self.counts["value"] += 1
            return self.base.g_eval(x, y)

        return counted

    def grad_f(self, x, y):
        self.counts["grad_f"] += 1
        return self.base.grad_f(x, y)

    def grad_y_g(self, x, y):
        self.counts["grad_g"] += 1
        return self.base.grad_y_g(x, y)

    def grad_x_g(self, x, y):
        if self.base.grad_x_g is None:
            raise NotImplementedError("problem does not supply grad_x_g")
        self.counts["grad_g"] += 1
        return self.base.grad_x_g(x, y)

    def hvp_yx(self, x, y, v):
        self.counts["hvp"] += 1
        return self.base.hvp_yx(x, y, v)

    def hvp_yy(self, x, y, v):
        self.counts["hvp"] += 1
        return self.base.hvp_yy(x, y, v)
