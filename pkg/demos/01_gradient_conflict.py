"""Why summing gradients can stall: the four-state counterexample.

Two kernels disagree about which one is worst for the objective and for the
constraint. At the always-a2 policy the Lagrangian gradient has no descent
direction when delta = 0, while a step on the single most violated term
still makes progress.
"""

import numpy as np

from epirc import counterexample_closed_forms, counterexample_instance, deterministic_policy
from epirc.epigraph import delta_from_returns, delta_hat, project_policy
from epirc.lagrangian import lagrangian_subgradient, lagrangian_value
from epirc.robust import RobustEvaluation

gamma, delta = 0.4, 0.1
H = 1 / (1 - gamma)
inst = counterexample_instance(gamma, delta)
pi1 = deterministic_policy([0, 0, 0, 0], 2)   # always a1
pi2 = deterministic_policy([1, 1, 1, 1], 2)   # always a2

# returns under each kernel match the closed forms
forms = counterexample_closed_forms(gamma, delta)
for pol, name in ((pi1, "pi1"), (pi2, "pi2")):
    ev = RobustEvaluation(inst, pol)
    print(name, "returns per kernel (rows P1, P2; columns c0, c1):")
    print(np.round(ev.kernel_returns, 4))
print("closed form J_c0,P1(pi2) =", round(forms[(0, 1, 2)], 4))

# with lambda = 1, pi2 is worse than pi1 by H*gamma/4 - 3*H*delta/4
gap = lagrangian_value(inst, pi2, [1.0]) - lagrangian_value(inst, pi1, [1.0])
print(f"L(pi2) - L(pi1) = {gap:.4f}  (formula {H * gamma / 4 - 3 * H * delta / 4:.4f})")

# at delta = 0 the Lagrangian gradient is flat across actions in every state
flat = counterexample_instance(gamma, 0.0)
g = lagrangian_subgradient(flat, pi2, [1.0])
print("Lagrangian gradient at pi2, delta = 0:\n", np.round(g, 4))

# the epigraph step follows one term only: pick b0 so the objective is active
b0 = RobustEvaluation(flat.with_thresholds([H]), pi2).values[0]
tight = flat.with_thresholds([H])
ev = RobustEvaluation(tight, pi2)
d0, n = delta_from_returns(ev.values, tight.full_thresholds(b0))
step = project_policy(pi2 - 1e-2 * ev.gradient(n))
print(f"Delta before {d0:.4f}, after one step {delta_hat(tight, step, b0)[0]:.4f}")
