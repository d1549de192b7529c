"""Random benchmark environments and the gradient-conflict counterexample.

Random instances follow the Dirichlet construction: every transition row is
``Dirichlet(0.1, ..., 0.1)``, every cost entry is 0 with probability 0.1 and 1
otherwise, and ``mu ~ Dirichlet(0.5, ..., 0.5)``. Randomness comes from
numpy's PCG64 bit generator seeded with the 64-bit spec seed; Gamma variates
use numpy's Marsaglia-Tsang sampler with the ``U^(1/a)`` boost for shapes below 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .mdp import RETURN_TOL, FiniteSet, KLSet, RCMDPInstance, uniform_policy
from .robust import robust_returns

PRNG_NAME = "numpy.PCG64"

SETTING_DEFAULTS = {
    "finite": dict(num_states=7, num_actions=4, gamma=0.995, num_kernels=5),
    "kl": dict(num_states=5, num_actions=3, gamma=0.99, kl_reg=2.0),
    "cmdp": dict(num_states=7, num_actions=4, gamma=0.99, num_kernels=1),
}


@dataclass(frozen=True)
class GenSpec:
    setting: str = "finite"
    num_states: Optional[int] = None
    num_actions: Optional[int] = None
    gamma: Optional[float] = None
    num_kernels: Optional[int] = None
    kl_reg: Optional[float] = None
    num_constraints: int = 5
    seed: int = 0

    def resolved(self) -> "GenSpec":
        """Fill unset fields from the per-setting defaults."""
        if self.setting not in SETTING_DEFAULTS:
            raise ValueError(f"unknown setting {self.setting!r}")
        vals = asdict(self)
        for key, val in SETTING_DEFAULTS[self.setting].items():
            if vals.get(key) is None:
                vals[key] = val
        if self.setting == "cmdp":
            vals["num_kernels"] = 1
        spec = GenSpec(**vals)
        if spec.num_states < 1 or spec.num_actions < 1 or spec.num_constraints < 0:
            raise ValueError("invalid sizes in GenSpec")
        if not 0 < spec.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if spec.setting == "kl" and not (spec.kl_reg and spec.kl_reg > 0):
            raise ValueError("kl setting needs kl_reg > 0")
        if spec.setting != "kl" and not (spec.num_kernels and spec.num_kernels >= 1):
            raise ValueError("finite settings need num_kernels >= 1")
        return spec


def sample_dirichlet(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Symmetric Dirichlet samples over the last axis of ``size``.

    Works in log space: ``log G(a) = log G(a + 1) + log(U) / a`` for ``a < 1``,
    then a softmax, so small concentrations never produce all-zero rows.
    """
    size = tuple(np.atleast_1d(size))
    if alpha < 1.0:
        logg = np.log(rng.standard_gamma(alpha + 1.0, size=size)) + np.log(rng.random(size)) / alpha
    else:
        logg = np.log(rng.standard_gamma(alpha, size=size))
    logg -= logg.max(axis=-1, keepdims=True)
    w = np.exp(logg)
    return w / w.sum(axis=-1, keepdims=True)


def feasible_thresholds(inst: RCMDPInstance) -> np.ndarray:
    """Thresholds equal to the uniform policy's robust constraint returns, clipped to ``[0, H]``.

    Overshoot of ``H`` by rounding alone is kept, so the uniform policy stays
    exactly feasible.
    """
    pi = uniform_policy(inst.num_states, inst.num_actions)
    J = robust_returns(inst, pi)[1:]
    H = inst.horizon
    return np.where(J <= H * (1 + RETURN_TOL), np.maximum(J, 0.0), H)


def random_instance(spec: GenSpec) -> RCMDPInstance:
    spec = spec.resolved()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    S, A, N = spec.num_states, spec.num_actions, spec.num_constraints
    if spec.setting == "kl":
        kernels = sample_dirichlet(rng, 0.1, (S, A, S))
    else:
        kernels = sample_dirichlet(rng, 0.1, (spec.num_kernels, S, A, S))
    costs = (rng.random((N + 1, S, A)) >= 0.1).astype(np.float64)
    mu = sample_dirichlet(rng, 0.5, (S,))
    unc = KLSet(kernels, spec.kl_reg) if spec.setting == "kl" else FiniteSet(kernels)
    meta = {"generator": PRNG_NAME, **asdict(spec)}
    inst = RCMDPInstance(spec.gamma, mu, costs, np.zeros(N), unc, meta)
    return inst.with_thresholds(feasible_thresholds(inst))


def counterexample_instance(gamma: float, delta: float, b1: float = 0.0) -> RCMDPInstance:
    """Four-state, two-action RCMDP with ``U = {P1, P2}`` where the objective and
    constraint gradients conflict at the always-``a2`` policy.

    States 0..3 and actions 0..1. Action 1 self-loops in states 0 and 1 under
    both kernels; states 2 and 3 are action independent and both drain into
    state 2 under ``P1`` and into state 3 under ``P2``.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not 0 <= delta <= min(1.0, gamma):
        raise ValueError("delta must satisfy 0 <= delta <= min(1, gamma) to keep costs in [0, 1]")
    S, A = 4, 2
    P1 = np.zeros((S, A, S))
    P2 = np.zeros((S, A, S))
    for P in (P1, P2):
        P[0, 0, 1] = 1.0
        P[0, 1, 0] = 1.0
        P[1, 1, 1] = 1.0
    P1[1, 0, 0] = 1.0
    P2[1, 0, 1] = 1.0
    P1[2:, :, 2] = 1.0
    P2[2:, :, 3] = 1.0

    c0 = np.array([[delta, 1.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    c1 = np.array([[1.0, gamma - delta], [1.0, 1.0 - delta], [0.0, 0.0], [1.0, 1.0]])
    meta = {"name": "counterexample", "gamma": gamma, "delta": delta}
    return RCMDPInstance(gamma, np.full(S, 0.25), np.stack([c0, c1]), np.array([b1]),
                         FiniteSet(np.stack([P1, P2])), meta)


def counterexample_closed_forms(gamma: float, delta: float) -> dict:
    """Closed-form returns ``J[(cost, kernel, policy)]`` for the counterexample
    (cost in {0, 1}, kernel in {1, 2}, policy in {1 = always a1, 2 = always a2})."""
    H = 1.0 / (1.0 - gamma)
    return {
        (0, 1, 1): H / 2 + H * (gamma + delta) / 4,
        (0, 2, 1): H / 2 + delta / 4,
        (1, 1, 1): H * (3 - gamma) / 4,
        (1, 2, 1): H * (3 + gamma) / 4,
        (0, 1, 2): H * (3 + gamma) / 4,
        (0, 2, 2): H * (3 - gamma) / 4,
        (1, 1, 2): H / 2 - H * delta / 2,
        (1, 2, 2): H / 2 + H * gamma / 2 - H * delta / 2,
    }
