"""Solve a random single-kernel CMDP with EpiRC-PGS and compare with the LP optimum."""

import numpy as np

from epirc import (BisectionConfig, GenSpec, SubroutineConfig, bisection_solve, random_instance,
                   robust_returns, solve_cmdp_lp, uniform_policy)

inst = random_instance(GenSpec("cmdp", num_states=5, num_actions=3, gamma=0.9,
                               num_constraints=2, seed=0))
H = inst.horizon
print("thresholds (uniform policy's constraint returns):", np.round(inst.thresholds, 3))

lp = solve_cmdp_lp(inst)
print(f"LP optimum J* = {lp.value:.4f}, occupancy mass {lp.occupancy.sum():.4f} (= H)")

cfg = BisectionConfig(outer_iterations=10, subroutine=SubroutineConfig(2000, 1e-3))
pi, trace = bisection_solve(inst, cfg)
for r in trace.outer:
    print(f"k={r.k:2d}  b0={r.b0:7.4f}  interval=[{r.low:.4f}, {r.high:.4f}]  Delta={r.delta_hat:+.4f}")

J = robust_returns(inst, pi)
print(f"EpiRC objective {J[0]:.4f}, gap to J* {J[0] - lp.value:+.4f}, "
      f"max violation {np.max(J[1:] - inst.thresholds):+.4f}")
print(f"uniform policy objective {robust_returns(inst, uniform_policy(5, 3))[0]:.4f}")
