"""Robust return and subgradient evaluators for finite and KL uncertainty sets.

For a policy ``pi`` and cost index ``n`` the evaluators return the worst-case
return ``max_{P in U} J_{c_n, P}(pi)``, the maximizing kernel, and the policy
gradient of ``J_{c_n, P}`` at that kernel (a valid subgradient of the robust
return by Danskin's theorem).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evaluation import policy_kernel
from .mdp import FiniteSet, KLSet, RCMDPInstance

KL_TOL = 1e-10


class KLConvergenceError(RuntimeError):
    """The regularized KL backup did not converge within its iteration cap."""


@dataclass
class EvalResult:
    value: float
    worst_kernel: np.ndarray
    q: np.ndarray
    occupancy: np.ndarray
    gradient: np.ndarray
    kernel_index: Optional[int] = None


# ---------------------------------------------------------------------------
# KL regularized backup


def kl_iteration_cap(gamma: float, tol: float = KL_TOL) -> int:
    H = 1.0 / (1.0 - gamma)
    return math.ceil(math.log(H / tol) / math.log(1.0 / gamma)) + 100


def kl_tilt(P: np.ndarray, V: np.ndarray, reg: float) -> np.ndarray:
    """Worst-case rows ``P*(s'|s,a) ∝ P(s'|s,a) exp((V(s') - max V) / reg)``.

    ``V`` may be batched as ``(B, S)``; the result is then ``(B, S, A, S)``.
    """
    V = np.asarray(V)
    w = np.exp((V - V.max(axis=-1, keepdims=True)) / reg)
    tilted = P * w[..., None, None, :]
    return tilted / tilted.sum(axis=-1, keepdims=True)


def kl_value_iteration(pi, P, costs, gamma: float, reg: float, *, q0=None,
                       tol: float = KL_TOL, max_iter: Optional[int] = None):
    """Iterate the regularized KL backup to its fixed point.

    ``Q <- c + gamma * sum_{s'} P*(s'|s,a) V(s')`` with ``P*`` the tilt of the
    nominal rows by the current ``V``. ``costs`` is ``(S, A)`` or batched
    ``(B, S, A)``. Returns ``(Q, residuals)`` where ``residuals[t]`` is the
    sup-norm change at step ``t``.
    """
    costs = np.asarray(costs, dtype=np.float64)
    Q = np.zeros_like(costs) if q0 is None else np.array(q0, dtype=np.float64)
    if max_iter is None:
        max_iter = kl_iteration_cap(gamma, tol)
    residuals = []
    for _ in range(max_iter):
        V = np.einsum("sa,...sa->...s", pi, Q)
        Ps = kl_tilt(P, V, reg)
        Qn = costs + gamma * np.einsum("...sat,...t->...sa", Ps, V)
        r = float(np.max(np.abs(Qn - Q)))
        residuals.append(r)
        Q = Qn
        if r <= tol:
            return Q, np.array(residuals)
    raise KLConvergenceError(
        f"KL backup did not reach tolerance {tol:g} in {max_iter} iterations "
        f"(last residual {residuals[-1]:.3e}); check reg and gamma")


def _kl_newton(pi, P, c_pi, gamma, reg, V0, tol, max_iter=60):
    """Alternate worst-kernel tilting with exact evaluation; ``None`` if it stalls."""
    S = pi.shape[0]
    V = V0
    eye = np.eye(S)
    for _ in range(max_iter):
        Ps = kl_tilt(P, V, reg)
        Vn = np.linalg.solve(eye - gamma * policy_kernel(pi, Ps), c_pi[..., None])[..., 0]
        if not np.all(np.isfinite(Vn)):
            return None
        if np.max(np.abs(Vn - V)) <= tol:
            return Vn
        V = Vn
    return None


def kl_fixed_point_values(pi, P, costs, gamma: float, reg: float, *, method: str = "auto",
                          v0=None, tol: float = KL_TOL) -> np.ndarray:
    """State values at the KL backup fixed point, batched over leading cost axes.

    ``method="iterate"`` runs the plain backup from ``Q = 0``. ``"auto"`` first
    alternates tilt/exact-solve steps (warm-started from ``v0`` when given),
    accepts the result only if the plain backup leaves it unchanged to within
    ``10 * tol * H``, and otherwise falls back to plain iteration.
    """
    costs = np.asarray(costs, dtype=np.float64)
    c_pi = np.einsum("sa,...sa->...s", pi, costs)
    if method == "auto":
        V0 = np.zeros_like(c_pi) if v0 is None else np.asarray(v0, dtype=np.float64)
        V = _kl_newton(pi, P, c_pi, gamma, reg, V0, tol)
        if V is not None:
            Ps = kl_tilt(P, V, reg)
            Q = costs + gamma * np.einsum("...sat,...t->...sa", Ps, V)
            resid = np.max(np.abs(np.einsum("sa,...sa->...s", pi, Q) - V))
            if resid <= 10 * tol / (1.0 - gamma):
                return V
    elif method != "iterate":
        raise ValueError(f"unknown method {method!r}")
    Q, _ = kl_value_iteration(pi, P, costs, gamma, reg, tol=tol)
    return np.einsum("sa,...sa->...s", pi, Q)


def kl_regularized_fixed_point(inst: RCMDPInstance, n: int, pi, *, method: str = "iterate",
                               tol: float = KL_TOL):
    """Fixed point ``Q`` of the KL backup for cost ``n`` and the kernel tilted by it."""
    u = _require_kl(inst)
    _check_index(inst, n)
    c = inst.costs[n]
    if method == "iterate":
        Q, _ = kl_value_iteration(pi, u.nominal, c, inst.gamma, u.reg, tol=tol)
        V = np.einsum("sa,sa->s", pi, Q)
    else:
        V = kl_fixed_point_values(pi, u.nominal, c, inst.gamma, u.reg, method=method, tol=tol)
        Q = c + inst.gamma * kl_tilt(u.nominal, V, u.reg) @ V
    return Q, kl_tilt(u.nominal, V, u.reg)


def kl_divergence(p, q) -> np.ndarray:
    """Row-wise ``KL(p || q)`` over the last axis (0 log 0 = 0)."""
    p = np.asarray(p)
    q = np.asarray(q)
    ratio = np.where(p > 0, p / np.where(p > 0, q, 1.0), 1.0)
    return np.sum(np.where(p > 0, p * np.log(ratio), 0.0), axis=-1)


# ---------------------------------------------------------------------------
# all-cost evaluation of one policy


class RobustEvaluation:
    """Robust returns of one policy for every cost index ``n = 0..N``.

    Values are computed eagerly; the worst-case ``Q``, occupancy and gradient
    for an index are assembled on request. ``kl_values`` holds the KL fixed
    point values and can seed the next evaluation of a nearby policy.
    """

    def __init__(self, inst: RCMDPInstance, pi, *, kl_warm=None, kl_method: str = "auto"):
        self.inst = inst
        self.pi = np.asarray(pi, dtype=np.float64)
        gamma = inst.gamma
        S = inst.num_states
        self._eye = np.eye(S)
        c_pi = np.einsum("sa,nsa->ns", self.pi, inst.costs)
        u = inst.uncertainty
        self.kl_values = None
        self._occ_cache: dict = {}
        if isinstance(u, FiniteSet):
            P_pi = policy_kernel(self.pi, u.kernels)                     # (M, S, S)
            self._M = self._eye - gamma * P_pi
            V = np.linalg.solve(self._M, np.broadcast_to(c_pi.T, (len(u), S, c_pi.shape[0])))
            self._V = V                                                  # (M, S, N+1)
            self.kernel_returns = np.einsum("s,msn->mn", inst.mu, V)     # (M, N+1)
            self.worst = np.argmax(self.kernel_returns, axis=0)          # first index on ties
            self.values = self.kernel_returns[self.worst, np.arange(c_pi.shape[0])]
        elif isinstance(u, KLSet):
            Vfp = kl_fixed_point_values(self.pi, u.nominal, inst.costs, gamma, u.reg,
                                        method=kl_method, v0=kl_warm)
            self.kl_values = Vfp
            self._kernels = kl_tilt(u.nominal, Vfp, u.reg)               # (N+1, S, A, S)
            self._M = self._eye - gamma * policy_kernel(self.pi, self._kernels)
            self._V = np.linalg.solve(self._M, c_pi[..., None])[..., 0]  # (N+1, S)
            self.worst = None
            self.values = self._V @ inst.mu
        else:
            raise TypeError(f"unsupported uncertainty set {type(u).__name__}")

    def _parts(self, n: int):
        inst = self.inst
        if isinstance(inst.uncertainty, FiniteSet):
            m = int(self.worst[n])
            P = inst.uncertainty.kernels[m]
            V = self._V[m, :, n]
            key = m
            M = self._M[m]
        else:
            m = None
            P = self._kernels[n]
            V = self._V[n]
            key = n
            M = self._M[n]
        if key not in self._occ_cache:
            self._occ_cache[key] = (1.0 - inst.gamma) * np.linalg.solve(M.T, inst.mu)
        return m, P, V, self._occ_cache[key]

    def gradient(self, n: int) -> np.ndarray:
        _, P, V, d = self._parts(n)
        q = self.inst.costs[n] + self.inst.gamma * P @ V
        return self.inst.horizon * d[:, None] * q

    def result(self, n: int) -> EvalResult:
        m, P, V, d = self._parts(n)
        q = self.inst.costs[n] + self.inst.gamma * P @ V
        return EvalResult(value=float(self.values[n]), worst_kernel=P, q=q, occupancy=d.copy(),
                          gradient=self.inst.horizon * d[:, None] * q, kernel_index=m)


# ---------------------------------------------------------------------------
# single-index evaluators


def _check_index(inst: RCMDPInstance, n: int) -> None:
    if not 0 <= n <= inst.num_constraints:
        raise IndexError(f"cost index {n} out of range [0, {inst.num_constraints}]")


def _require_kl(inst: RCMDPInstance) -> KLSet:
    if not isinstance(inst.uncertainty, KLSet):
        raise TypeError("instance does not carry a KL uncertainty set")
    return inst.uncertainty


def eval_finite(inst: RCMDPInstance, n: int, pi) -> EvalResult:
    """Worst case over a finite kernel list (ties go to the lowest kernel index)."""
    if not isinstance(inst.uncertainty, FiniteSet):
        raise TypeError("instance does not carry a finite uncertainty set")
    _check_index(inst, n)
    return RobustEvaluation(inst, pi).result(n)


def eval_kl(inst: RCMDPInstance, n: int, pi, *, method: str = "auto") -> EvalResult:
    """Worst case over the KL-regularized set: backup fixed point, then exact re-solve
    under the tilted kernel."""
    _require_kl(inst)
    _check_index(inst, n)
    return RobustEvaluation(inst, pi, kl_method=method).result(n)


def robust_eval(inst: RCMDPInstance, n: int, pi) -> EvalResult:
    if isinstance(inst.uncertainty, FiniteSet):
        return eval_finite(inst, n, pi)
    return eval_kl(inst, n, pi)


def robust_returns(inst: RCMDPInstance, pi) -> np.ndarray:
    """Robust returns ``(J_0, ..., J_N)`` of ``pi``."""
    return RobustEvaluation(inst, pi).values.copy()
