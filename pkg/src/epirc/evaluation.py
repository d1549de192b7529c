"""Exact policy evaluation under a fixed transition kernel.

Everything here is a dense linear solve (LU with partial pivoting via
``numpy.linalg.solve``). The state-value system ``(I - gamma P_pi) V = c_pi``
is solved on the ``S x S`` state space and lifted to ``Q = c + gamma P V``;
this is the same fixed point as ``Q = (I - gamma P Pi^pi)^{-1} c``.

Occupancy measures use the normalized convention
``d(s) = (1 - gamma) * E[sum_h gamma^h 1{s_h = s}]`` which sums to one.
"""

from __future__ import annotations

import numpy as np


def policy_kernel(pi: np.ndarray, P: np.ndarray) -> np.ndarray:
    """State-to-state kernel ``P_pi[s, s'] = sum_a pi(s, a) P(s, a, s')``.

    ``P`` may carry leading batch dimensions, ``(..., S, A, S)``.
    """
    return np.einsum("sa,...sat->...st", pi, P)


def _solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:  # unreachable for gamma < 1
        raise np.linalg.LinAlgError(f"singular policy-evaluation system: {exc}") from exc


def value_function(pi, P, c, gamma: float) -> np.ndarray:
    """State values ``V(s) = sum_a pi(s, a) Q(s, a)``."""
    S = pi.shape[0]
    M = np.eye(S) - gamma * policy_kernel(pi, P)
    return _solve(M, np.einsum("sa,sa->s", pi, c))


def q_function(pi, P, c, gamma: float) -> np.ndarray:
    """Action values over the full ``S x A`` domain (zero-probability actions included)."""
    V = value_function(pi, P, c, gamma)
    return c + gamma * P @ V


def return_value(pi, P, c, gamma: float, mu) -> float:
    """Cost return ``J(pi) = sum_s mu(s) V(s)``."""
    return float(mu @ value_function(pi, P, c, gamma))


def occupancy(pi, P, gamma: float, mu) -> np.ndarray:
    """Normalized discounted state occupancy ``(1 - gamma) mu^T (I - gamma P_pi)^{-1}``."""
    S = pi.shape[0]
    M = np.eye(S) - gamma * policy_kernel(pi, P)
    return (1.0 - gamma) * _solve(M.T, np.asarray(mu, dtype=np.float64))


def policy_gradient(pi, P, c, gamma: float, mu) -> np.ndarray:
    """Direct-parameterization gradient ``H * d(s) * Q(s, a)`` with ``H = 1 / (1 - gamma)``."""
    H = 1.0 / (1.0 - gamma)
    return H * occupancy(pi, P, gamma, mu)[:, None] * q_function(pi, P, c, gamma)


def bellman_residual(Q, pi, P, c, gamma: float) -> float:
    """Sup-norm residual ``||Q - (c + gamma P Pi^pi Q)||``."""
    V = np.einsum("sa,sa->s", pi, Q)
    return float(np.max(np.abs(Q - (c + gamma * P @ V))))


def _pair_index(A: int) -> np.ndarray:
    return (np.arange(A) + 1) % A


def paired_directional(grad: np.ndarray) -> np.ndarray:
    """Project an ambient gradient onto the paired simplex directions used by
    :func:`finite_diff_gradient`: entry ``(s, a)`` is ``g(s, a) - g(s, (a+1) % A)``."""
    return grad - grad[:, _pair_index(grad.shape[1])]


def finite_diff_gradient(pi, P, c, gamma: float, mu, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of :func:`return_value` along simplex directions.

    Entry ``(s, a)`` is the derivative along ``e_{s,a} - e_{s,b}`` with
    ``b = (a + 1) % A``, which keeps the perturbed policy on the simplex.
    Compare against :func:`paired_directional` of an analytic gradient.
    """
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi < step):
        raise ValueError("finite_diff_gradient needs a strictly interior policy (all entries >= step)")
    S, A = pi.shape
    pair = _pair_index(A)
    out = np.zeros((S, A))
    if A == 1:
        return out
    for s in range(S):
        for a in range(A):
            d = np.zeros_like(pi)
            d[s, a] += 1.0
            d[s, pair[a]] -= 1.0
            hi = return_value(pi + step * d, P, c, gamma, mu)
            lo = return_value(pi - step * d, P, c, gamma, mu)
            out[s, a] = (hi - lo) / (2.0 * step)
    return out
