"""Experiment config files: JSON parsing and validation with line-anchored errors.

Schema (keys not listed are rejected)::

    {
      "problem": "sc_synthetic",              # one of problems.REGISTRY
      "problem_params": {"n": 20},            # optional, passed to the generator
      "methods": ["ours_cor1", {"name": "aid", "overrides": {"outer_step": 0.2}}],
      "K_list": [1000, 10000],
      "seed": 0,                              # initial point and solver seed
      "output_dir": "results",               # optional, CLI flag wins
      "emit_plot_data": true,                 # SVG charts next to the CSVs
      "record_every": null,                   # optional, CLI flag wins
      "monitor_hypergradient": false          # AID surrogate norm per recorded row
    }

Overrides for ``ours_*`` go to :class:`SolverConfig` (``C0``, ``alpha``, ``gamma``,
``warm_start_budget`` ...); for ``aid``/``bome`` to :class:`BaselineConfig`.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field

from .. import problems
from ..baselines import BaselineConfig
from ..solver import SolverConfig

METHODS = ("ours_cor1", "ours_cor3", "aid", "bome")
TOP_KEYS = {"problem", "problem_params", "methods", "K_list", "seed", "output_dir",
            "emit_plot_data", "record_every", "monitor_hypergradient"}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)} - {"K", "record_every"}
_BASELINE_KEYS = {f.name for f in dataclasses.fields(BaselineConfig)} - {"method", "K", "record_every"}


class ConfigFileError(ValueError):
    """Config problem located at ``path:line``."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    methods: tuple
    K_list: tuple
    seed: int = 0
    problem_params: dict = field(default_factory=dict)
    output_dir: str = "results"
    emit_plot_data: bool = True
    record_every: int | None = None
    monitor_hypergradient: bool = False

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["methods"] = [dataclasses.asdict(m) for m in self.methods]
        d["K_list"] = list(self.K_list)
        return d


def _line_of(text, key):
    """1-based line of the first ``"key"`` occurrence, or 1."""
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(text, path="<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(path, exc.lineno, f"invalid JSON: {exc.msg} (column {exc.colno})") from None

    def fail(key, msg):
        raise ConfigFileError(path, _line_of(text, key), msg)

    if not isinstance(raw, dict):
        raise ConfigFileError(path, 1, "top level must be an object")
    for key in raw:
        if key not in TOP_KEYS:
            fail(key, f"unknown key {key!r}")
    for key in ("problem", "methods", "K_list"):
        if key not in raw:
            raise ConfigFileError(path, 1, f"missing required key {key!r}")

    problem = raw["problem"]
    if problem not in problems.REGISTRY:
        fail("problem", f"unknown problem {problem!r}; choose from {sorted(problems.REGISTRY)}")
    params = raw.get("problem_params", {})
    if not isinstance(params, dict):
        fail("problem_params", "problem_params must be an object")
    try:
        instance = problems.make_problem(problem, **params)
    except (TypeError, ValueError) as exc:
        fail("problem_params", f"bad problem_params: {exc}")

    K_list = raw["K_list"]
    if not isinstance(K_list, list) or not K_list:
        fail("K_list", "K_list must be a non-empty list")
    if not all(_is_int(k) and k >= 1 for k in K_list):
        fail("K_list", "K_list entries must be positive integers")

    seed = raw.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        fail("seed", "seed must be an unsigned 64-bit integer")
    rec = raw.get("record_every")
    if rec is not None and not (_is_int(rec) and rec >= 1):
        fail("record_every", "record_every must be a positive integer")
    for key in ("emit_plot_data", "monitor_hypergradient"):
        if key in raw and not isinstance(raw[key], bool):
            fail(key, f"{key} must be true or false")
    out = raw.get("output_dir", "results")
    if not isinstance(out, str) or not out:
        fail("output_dir", "output_dir must be a non-empty string")

    methods_raw = raw["methods"]
    if not isinstance(methods_raw, list) or not methods_raw:
        fail("methods", "methods must be a non-empty list")
    methods = []
    for entry in methods_raw:
        if isinstance(entry, str):
            spec = MethodSpec(entry)
        elif isinstance(entry, dict) and set(entry) <= {"name", "overrides"} and "name" in entry:
            ov = entry.get("overrides", {})
            if not isinstance(ov, dict):
                fail("overrides", "overrides must be an object")
            spec = MethodSpec(entry["name"], dict(ov))
        else:
            fail("methods", f"bad method entry {entry!r}")
        if spec.name not in METHODS:
            fail("methods", f"unknown method {spec.name!r}; choose from {list(METHODS)}")
        allowed = _SOLVER_KEYS if spec.name.startswith("ours") else _BASELINE_KEYS
        for key in spec.overrides:
            if key not in allowed:
                fail(key, f"override {key!r} not valid for {spec.name}")
        if spec.name == "aid" and not instance.strongly_convex:
            fail("methods", f"aid requires a strongly convex lower level; {problem} is not")
        if spec.name == "bome" and instance.oracles.grad_x_g is None:
            fail("methods", f"bome needs grad_x g, which {problem} does not provide")
        try:
            if spec.name.startswith("ours"):
                SolverConfig(**{"K": 1, "alpha": 1.0, "gamma": 1.0, **spec.overrides})
            else:
                BaselineConfig(method=spec.name, **spec.overrides)
        except (TypeError, ValueError) as exc:
            fail("methods", f"bad overrides for {spec.name}: {exc}")
        methods.append(spec)

    return ExperimentConfig(
        problem=problem, methods=tuple(methods), K_list=tuple(K_list), seed=seed,
        problem_params=dict(params), output_dir=out,
        emit_plot_data=raw.get("emit_plot_data", True), record_every=rec,
        monitor_hypergradient=raw.get("monitor_hypergradient", False))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(path, 0, f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
