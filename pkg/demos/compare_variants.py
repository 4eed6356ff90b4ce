"""Small paired comparison of the four estimator variants.

Runs a handful of trials per scenario (all variants see the same noise) and
prints the mean full-state error psi, the tractor position error delta, and
the mean solve time eta. The orderings settle with ~100 trials; use
``adaptive-mhe bench`` for that. This script is for a quick look.

    python demos/compare_variants.py [trials]
"""
import sys

from adaptive_mhe.bench import ScenarioSpec, aggregate, run_scenario
from adaptive_mhe.disturbance import NoiseSpec

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 5

for kind in ("normal", "uniform"):
    spec = ScenarioSpec(kind, NoiseSpec(kind), trials=trials)
    res = run_scenario(spec)
    print(f"\n{kind} noise, {trials} trials")
    print(f"{'variant':10s} {'psi':>8s} {'delta':>8s} {'eta [ms]':>9s} {'inner':>6s}")
    for label, metrics in res.items():
        s = aggregate(metrics)
        print(f"{label:10s} {s.psi:8.4f} {s.delta:8.4f} {s.eta * 1e3:9.3f} "
              f"{s.mean_inner_iterations:6.2f}")
