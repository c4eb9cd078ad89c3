"""Coreset toy: pick softmax weights over four points so the lower-level fit hits a target.

Compares oracle calls needed by each method to push the hypergradient norm below 1e-4.
"""

from pbgd import problems
from pbgd.baselines import BaselineConfig, aid_run, bome_run, hypergradient_monitor
from pbgd.oracles import CountingOracles
from pbgd.problems import softmax
from pbgd.solver import make_config, run, warm_start

problem = problems.make_coreset()
monitor = hypergradient_monitor(problem)
x0, y0 = problem.initial_point(0)

oracle = CountingOracles(problem.oracles)
cfg = make_config("cor1", 2000, problem.oracles.constants, record_every=1)
ours = run(oracle, cfg, x0, warm_start(oracle, x0, y0, cfg.alpha, cfg.C0), hypergrad=monitor)
aid = aid_run(problem, x0, BaselineConfig("aid", K=5000), y0=y0, hypergrad=monitor)
bome = bome_run(problem, x0, y0, BaselineConfig("bome", K=5000), hypergrad=monitor)

for name, tr in (("ours", ours), ("AID", aid), ("BOME", bome)):
    hit = next((r for r in tr.records if r.hypergrad_norm <= 1e-4), None)
    where = f"after {sum(hit.oracle_calls.values())} oracle calls" if hit else "never"
    print(f"{name:>5}: ||F|| <= 1e-4 {where}; final ||F|| = {tr.records[-1].hypergrad_norm:.1e}")

print("target y0:", problem.extras["y0"])
print("A softmax(x) at our final x:", problem.extras["A"] @ softmax(ours.final_x))
