"""Self-checks behind ``epirc validate``: counterexample identities, LP
cross-checks and analytic-vs-finite-difference gradients."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .envgen import GenSpec, counterexample_closed_forms, counterexample_instance, random_instance
from .evaluation import finite_diff_gradient, paired_directional, policy_gradient, return_value
from .lp import solve_cmdp_lp
from .mdp import deterministic_policy
from .robust import robust_returns


@dataclass
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def check_counterexample(tol: float = 1e-9) -> Check:
    worst = 0.0
    for gamma in (0.2, 0.4, 0.6, 0.9):
        for delta in (0.0, gamma / 8, gamma / 4):
            inst = counterexample_instance(gamma, delta)
            P = inst.uncertainty.kernels
            pols = {1: deterministic_policy([0] * 4, 2), 2: deterministic_policy([1] * 4, 2)}
            for (n, m, p), want in counterexample_closed_forms(gamma, delta).items():
                got = return_value(pols[p], P[m - 1], inst.costs[n], gamma, inst.mu)
                worst = max(worst, abs(got - want))
    return Check("counterexample identities", worst <= tol, f"max error {worst:.2e}")


def enumerate_deterministic(inst) -> float:
    """Smallest robust objective return over all deterministic policies that satisfy the constraints."""
    best = np.inf
    for acts in itertools.product(range(inst.num_actions), repeat=inst.num_states):
        J = robust_returns(inst, deterministic_policy(acts, inst.num_actions))
        if np.all(J[1:] <= inst.thresholds + 1e-12):
            best = min(best, J[0])
    return float(best)


def check_lp(seed: int = 0, runs: int = 10) -> list[Check]:
    consistency, enum = 0.0, 0.0
    for i in range(runs):
        inst = random_instance(GenSpec("cmdp", 5, 3, 0.9, num_constraints=2, seed=seed + i))
        sol = solve_cmdp_lp(inst)
        J = robust_returns(inst, sol.policy)
        consistency = max(consistency, abs(J[0] - sol.value), float(np.max(J[1:] - inst.thresholds)))
        small = random_instance(GenSpec("cmdp", 3, 3, 0.9, num_constraints=0, seed=seed + i))
        enum = max(enum, abs(solve_cmdp_lp(small).value - enumerate_deterministic(small)))
    return [Check("LP self-consistency", consistency <= 1e-7, f"max error {consistency:.2e}"),
            Check("LP vs enumeration", enum <= 1e-8, f"max error {enum:.2e}")]


def check_gradients(seed: int = 0, runs: int = 20, tol: float = 1e-4) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(runs):
        S, A = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        inst = random_instance(GenSpec("cmdp", S, A, 0.9, num_constraints=0, seed=seed + i))
        P = inst.uncertainty.kernels[0]
        pi = 0.9 * rng.dirichlet(np.ones(A), size=S) + 0.1 / A
        c = rng.random((S, A))      # generated 0/1 costs often make the return flat
        g = paired_directional(policy_gradient(pi, P, c, inst.gamma, inst.mu))
        fd = finite_diff_gradient(pi, P, c, inst.gamma, inst.mu)
        worst = max(worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
    return Check("policy gradient vs finite differences", worst <= tol, f"max relative error {worst:.2e}")


def run_validation(seed: int = 0) -> list[Check]:
    return [check_counterexample(), *check_lp(seed), check_gradients(seed)]
