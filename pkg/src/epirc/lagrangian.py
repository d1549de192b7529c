"""Lagrangian-formulation baseline (LF) and its averaging variants.

LF alternates ``T`` projected-gradient steps on
``L_lambda(pi) = J_0,U(pi) + sum_n lambda_n (J_n,U(pi) - b_n)`` with projected
dual ascent on ``lambda``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .epigraph import _initial_policy, project_policy
from .evaluation import occupancy
from .mdp import FiniteSet, RCMDPInstance, check_instance
from .robust import RobustEvaluation


def _check_lambda(inst: RCMDPInstance, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if lam.shape != (inst.num_constraints,):
        raise ValueError(f"expected {inst.num_constraints} multipliers, got {lam.shape}")
    if np.any(lam < 0):
        raise ValueError("Lagrange multipliers must be non-negative")
    return lam


def _lagrangian(values: np.ndarray, thresholds: np.ndarray, lam: np.ndarray) -> float:
    return float(values[0] + lam @ (values[1:] - thresholds))


def lagrangian_value(inst: RCMDPInstance, pi, lam) -> float:
    lam = _check_lambda(inst, lam)
    return _lagrangian(RobustEvaluation(inst, pi).values, inst.thresholds, lam)


def _subgradient(ev: RobustEvaluation, lam: np.ndarray) -> np.ndarray:
    g = ev.gradient(0)
    for n in np.flatnonzero(lam):
        g = g + lam[n] * ev.gradient(n + 1)
    return g


def lagrangian_subgradient(inst: RCMDPInstance, pi, lam) -> np.ndarray:
    """Sum of per-term worst-kernel gradients, ``grad_0 + sum_n lambda_n grad_n``."""
    lam = _check_lambda(inst, lam)
    return _subgradient(RobustEvaluation(inst, pi), lam)


@dataclass
class LagrangeConfig:
    outer_iterations: int = 10
    inner_iterations: int = 10_000
    lr_lambda: float = 0.01
    lr_policy: float = 5e-5
    initial_lambda: Optional[np.ndarray] = None
    initial_policy: object = "uniform"

    def __post_init__(self):
        if self.outer_iterations < 1 or self.inner_iterations < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.lr_lambda <= 0 or self.lr_policy <= 0:
            raise ValueError("learning rates must be positive")
        if self.initial_lambda is not None and np.any(np.asarray(self.initial_lambda) < 0):
            raise ValueError("initial multipliers must be non-negative")


@dataclass
class LFRecord:
    k: int
    policy: np.ndarray          # pi^(k+1)
    returns: np.ndarray         # robust returns of pi^(k+1)
    lam: np.ndarray             # lambda^(k) used by the inner loop
    violation: float
    wall_ms: float


@dataclass
class LFResult:
    policy: np.ndarray
    lambdas: np.ndarray                       # (K + 1, N): lambda^(0) .. lambda^(K)
    records: list = field(default_factory=list)


def max_violation(returns, thresholds) -> float:
    """``max_n J_n - b_n`` over the constraints (0 when there are none)."""
    returns = np.asarray(returns)
    if returns.size <= 1:
        return 0.0
    return float(np.max(returns[1:] - thresholds))


def update_multipliers(lam, violations, lr: float) -> np.ndarray:
    return np.maximum(np.asarray(lam) + lr * np.asarray(violations), 0.0)


def lf_solve(inst: RCMDPInstance, cfg: LagrangeConfig) -> LFResult:
    check_instance(inst)
    N = inst.num_constraints
    lam = np.zeros(N) if cfg.initial_lambda is None else _check_lambda(inst, cfg.initial_lambda)
    pi = _initial_policy(inst, cfg.initial_policy)
    b = inst.thresholds
    lambdas = [lam.copy()]
    records = []
    for k in range(cfg.outer_iterations):
        t0 = time.perf_counter()
        best = (math.inf, pi, None)
        cur = pi
        warm = None
        for _ in range(cfg.inner_iterations):
            ev = RobustEvaluation(inst, cur, kl_warm=warm)
            warm = ev.kl_values
            val = _lagrangian(ev.values, b, lam)
            if val < best[0]:
                best = (val, cur, ev.values.copy())
            cur = project_policy(cur - cfg.lr_policy * _subgradient(ev, lam))
        _, pi, returns = best
        records.append(LFRecord(k, pi, returns, lam.copy(), max_violation(returns, b),
                                1e3 * (time.perf_counter() - t0)))
        lam = update_multipliers(lam, returns[1:] - b, cfg.lr_lambda)
        lambdas.append(lam.copy())
    return LFResult(pi, np.array(lambdas).reshape(len(lambdas), N), records)


# ---------------------------------------------------------------------------
# averaging baselines


def average_policies(policies) -> np.ndarray:
    policies = list(policies)
    if not policies:
        raise ValueError("average_policies needs at least one policy")
    return np.mean(np.stack(policies), axis=0)


def state_action_occupancy(inst: RCMDPInstance, pi) -> np.ndarray:
    """``d(s) * pi(s, a)`` under the single kernel of a CMDP instance."""
    P = _single_kernel(inst)
    return occupancy(pi, P, inst.gamma, inst.mu)[:, None] * pi


def policy_from_occupancy(q: np.ndarray, min_mass: float = 1e-12) -> np.ndarray:
    """``pi(s, a) = q(s, a) / sum_a q(s, a)``; rows with no mass become uniform."""
    q = np.maximum(np.asarray(q, dtype=np.float64), 0.0)
    mass = q.sum(axis=1, keepdims=True)
    A = q.shape[1]
    return np.where(mass > min_mass, q / np.where(mass > min_mass, mass, 1.0), 1.0 / A)


def _single_kernel(inst: RCMDPInstance) -> np.ndarray:
    u = inst.uncertainty
    if not isinstance(u, FiniteSet) or len(u) != 1:
        raise ValueError("occupancy averaging is only defined for a single-kernel (CMDP) instance")
    return u.kernels[0]


def average_occupancy_policy(inst: RCMDPInstance, policies) -> np.ndarray:
    policies = list(policies)
    if not policies:
        raise ValueError("average_occupancy_policy needs at least one policy")
    _single_kernel(inst)
    q = np.mean([state_action_occupancy(inst, p) for p in policies], axis=0)
    return policy_from_occupancy(q)
