"""Epigraph-form solver: bisection over the objective threshold ``b0`` with a
projected policy-gradient subroutine that minimizes

    Delta_{b0}(pi) = max_{n = 0..N} J_{c_n, U}(pi) - b_n      (b_0 := b0).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .mdp import ROW_TOL, RCMDPInstance, as_policy, check_instance, uniform_policy
from .robust import RobustEvaluation

# ---------------------------------------------------------------------------
# projection


def project_policy(raw) -> np.ndarray:
    """Euclidean projection of every row of ``raw`` onto the probability simplex.

    Rows that already are distributions (within the row tolerance) are returned
    unchanged, which makes the projection exactly idempotent.
    """
    x = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("project_policy: input contains NaN or inf")
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    A = x.shape[1]
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, A + 1)
    cond = u - css / k > 0
    rho = A - 1 - np.argmax(cond[:, ::-1], axis=1)       # last index where cond holds
    theta = css[np.arange(x.shape[0]), rho] / (rho + 1)
    out = np.maximum(x - theta[:, None], 0.0)
    inside = np.all(x >= 0.0, axis=1) & (np.abs(x.sum(axis=1) - 1.0) <= ROW_TOL)
    out[inside] = x[inside]
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Delta evaluation


def _argmax_first(x: np.ndarray) -> int:
    return int(np.argmax(x))


def delta_from_returns(returns, thresholds) -> tuple[float, int]:
    """``max_n returns[n] - thresholds[n]`` and its lowest maximizing index."""
    gaps = np.asarray(returns) - np.asarray(thresholds)
    n = _argmax_first(gaps)
    return float(gaps[n]), n


def delta_hat(inst: RCMDPInstance, pi, b0: float) -> tuple[float, int]:
    """Estimated ``Delta_{b0}(pi)`` and the index of the most violated term."""
    if not math.isfinite(b0):
        raise ValueError("b0 must be finite")
    ev = RobustEvaluation(inst, pi)
    return delta_from_returns(ev.values, inst.full_thresholds(b0))


# ---------------------------------------------------------------------------
# projected policy-gradient subroutine


@dataclass
class SubroutineConfig:
    iterations: int = 10_000
    learning_rate: float = 5e-5
    initial_policy: Union[np.ndarray, str] = "uniform"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class InnerTrace:
    """Per-iterate record of a subroutine run; index ``t`` covers ``pi^(0) .. pi^(T)``."""

    selected: np.ndarray       # n^(t)
    delta: np.ndarray          # Delta-hat of pi^(t)
    best_t: int


@dataclass
class SubroutineResult:
    policy: np.ndarray
    best_delta: float
    returns: np.ndarray        # robust returns of the returned policy
    trace: InnerTrace


def _initial_policy(inst: RCMDPInstance, init) -> np.ndarray:
    if isinstance(init, str):
        if init != "uniform":
            raise ValueError(f"unknown initial policy {init!r}")
        return uniform_policy(inst.num_states, inst.num_actions)
    return as_policy(init)


def pgs_subroutine(inst: RCMDPInstance, b0: float, cfg: SubroutineConfig,
                   initial_policy=None) -> SubroutineResult:
    """Minimize ``Delta_{b0}`` by projected subgradient steps on the most violated term.

    Runs ``T`` updates ``pi <- Proj(pi - alpha * grad_{n(t)})`` and returns the
    iterate among ``pi^(0) .. pi^(T)`` with the smallest Delta-hat (earliest on ties).
    ``initial_policy`` overrides ``cfg.initial_policy`` (used for warm starts).
    """
    pi = _initial_policy(inst, cfg.initial_policy if initial_policy is None else initial_policy)
    b = inst.full_thresholds(b0)
    T = cfg.iterations
    alpha = cfg.learning_rate
    selected = np.empty(T + 1, dtype=np.int64)
    deltas = np.empty(T + 1)
    best = (math.inf, 0, pi, None)
    warm = None
    for t in range(T + 1):
        ev = RobustEvaluation(inst, pi, kl_warm=warm)
        warm = ev.kl_values
        d, n = delta_from_returns(ev.values, b)
        selected[t] = n
        deltas[t] = d
        if d < best[0]:
            best = (d, t, pi, ev.values.copy())
        if t == T:
            break
        pi = project_policy(pi - alpha * ev.gradient(n))
    d, t_best, pi_best, returns = best
    return SubroutineResult(pi_best, d, returns, InnerTrace(selected, deltas, t_best))


# ---------------------------------------------------------------------------
# bisection


@dataclass
class BisectionConfig:
    outer_iterations: int = 10
    subroutine: SubroutineConfig = field(default_factory=SubroutineConfig)
    warm_start: bool = True

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")


@dataclass
class OuterRecord:
    k: int
    low: float                 # i_k
    high: float                # j_k
    b0: float
    delta_hat: float
    returns: np.ndarray
    wall_ms: float
    policy: np.ndarray


@dataclass
class SolveTrace:
    outer: list = field(default_factory=list)     # OuterRecord per k
    inner: list = field(default_factory=list)     # InnerTrace per subroutine call (last = final)
    final_interval: tuple = (0.0, 0.0)


# A subroutine maps (b0, initial policy) to (policy, Delta-hat of that policy, robust returns).
Subroutine = Callable[[float, Optional[np.ndarray]], tuple]


def bisection_solve(inst: RCMDPInstance, cfg: BisectionConfig,
                    subroutine: Optional[Subroutine] = None):
    """Bisection search for the smallest ``b0`` with ``min_pi Delta_{b0}(pi) <= 0``.

    Starting from ``[0, H]``, each round solves the subroutine at the midpoint
    and moves the lower end up when Delta-hat > 0, otherwise the upper end down.
    The returned policy is the subroutine output at the final upper end ``j_K``.

    ``subroutine`` replaces :func:`pgs_subroutine`; it must return a tuple
    ``(policy, delta_hat, returns)`` where ``delta_hat`` is the estimated Delta
    of ``policy`` at the requested ``b0``.
    """
    if subroutine is None:
        check_instance(inst)
        sub_cfg = cfg.subroutine

        def subroutine(b0, init):
            res = pgs_subroutine(inst, b0, sub_cfg, initial_policy=init)
            trace.inner.append(res.trace)
            return res.policy, res.best_delta, res.returns

    trace = SolveTrace()
    low, high = 0.0, inst.horizon
    prev = None
    for k in range(cfg.outer_iterations):
        b0 = (low + high) / 2.0
        t0 = time.perf_counter()
        pi, d, returns = subroutine(b0, prev if cfg.warm_start else None)
        wall = 1e3 * (time.perf_counter() - t0)
        trace.outer.append(OuterRecord(k, low, high, b0, float(d), np.asarray(returns),
                                       wall, np.asarray(pi)))
        if d > 0:
            low = b0
        else:
            high = b0
        prev = pi
    trace.final_interval = (low, high)
    pi, _, _ = subroutine(high, prev if cfg.warm_start else None)
    return np.asarray(pi), trace


# ---------------------------------------------------------------------------
# theoretical constants


def theoretical_params(S: int, A: int, gamma: float, D: float, epsilon: float) -> dict:
    """Closed-form constants of the convergence guarantee.

    ``alpha`` and ``T`` are the bisection-combined settings
    (``C_alpha eps^2 / 4`` and ``16 C_T eps^-4``); ``alpha_sub`` and ``T_sub``
    are the stand-alone subroutine settings. ``K = floor(log2(2H / eps))``.
    These are extremely conservative and only documented, not used as defaults.
    """
    if D <= 0:
        raise ValueError("D must be positive")
    if min(S, A) < 1 or not 0 < gamma < 1:
        raise ValueError("need S, A >= 1 and gamma in (0, 1)")
    H = 1.0 / (1.0 - gamma)
    if not 0 < epsilon < H:
        raise ValueError("epsilon must lie in (0, H)")
    lip = H ** 2 * math.sqrt(A)
    smooth = 2.0 * gamma * A * H ** 3
    C = 1.0 / (2.0 * gamma * H * math.sqrt(A)) + 2.0 * D * H * math.sqrt(S)
    C_grad = 1.0 / (1024 * C ** 2 * smooth * math.sqrt(S))
    C_J = 1.0 / (1024 * C ** 2 * smooth)
    eps_grad = C_grad * epsilon ** 2
    C_alpha = 1.0 / (64 * C ** 2 * smooth * (lip ** 2 + eps_grad))
    C_T = 4096 * C ** 4 * smooth ** 2 * S * (lip ** 2 + eps_grad ** 2)
    return {
        "C": C, "C_partial": C_grad, "C_J": C_J, "C_alpha": C_alpha, "C_T": C_T,
        "lipschitz": lip, "weak_convexity": smooth,
        "alpha_sub": C_alpha * epsilon ** 2, "T_sub": C_T * epsilon ** -4,
        "alpha": C_alpha * epsilon ** 2 / 4.0, "T": 16.0 * C_T * epsilon ** -4,
        "K": int(math.floor(math.log2(2.0 * H / epsilon))),
    }
