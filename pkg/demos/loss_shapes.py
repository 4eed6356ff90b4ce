"""Tabulate the robust kernel phi for a few shapes.

For large residuals phi grows like |r|^(2 alpha - 2), so alpha = 1.1 is almost
flat there while alpha near 2 is quadratic. The second table shows the alpha
subproblem: the alpha minimizing phi plus the quadratic pull towards 2 drops
once a residual gets large relative to c.
"""
import numpy as np

from adaptive_mhe.mhe import StageCostParams, solve_alphas
from adaptive_mhe.robust_loss import phi

r = np.array([0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
print("r       " + "".join(f"{a:>10}" for a in (1.1, 1.5, 1.9, 1.999)))
for ri in r:
    print(f"{ri:<8}" + "".join(f"{phi(ri, a):10.4f}" for a in (1.1, 1.5, 1.9, 1.999)))

p = StageCostParams()
alpha = solve_alphas(np.tile(r, (4, 1)), p)[0]
print("\noptimal alpha per residual (gamma = %g, c = %g)" % (p.gamma[0], p.c))
for ri, a in zip(r, alpha):
    print(f"  r = {ri:5.1f}  ->  alpha = {a:.4f}")
