"""Occupancy-measure LP for single-kernel CMDPs, solved with a dense two-phase
primal simplex (Bland's rule).

Variables are the unnormalized discounted state-action occupancies
``q(s, a) = E[sum_h gamma^h 1{s_h = s, a_h = a}]``, so ``sum q = H`` and
``J_c = <c, q>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lagrangian import _single_kernel, policy_from_occupancy
from .mdp import RCMDPInstance, check_instance

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LPInfeasible(Exception):
    """The CMDP constraints admit no occupancy measure (no feasible policy)."""


class LPUnbounded(Exception):
    pass


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, max_iter: int) -> None:
    """Minimize the objective held in the last row of tableau ``T``.

    Last row holds reduced costs (columns) and ``-objective`` (last entry).
    Bland's rule: entering = lowest eligible index, leaving = lowest basis index among ties.
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        red = T[-1, :-1]
        enter = np.flatnonzero((red < -PIVOT_TOL) & allowed)
        if enter.size == 0:
            return
        col = enter[0]
        colv = T[:m, col]
        pos = colv > PIVOT_TOL
        if not np.any(pos):
            raise LPUnbounded("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))
        row = ties[np.argmin(basis[ties])]
        _pivot(T, basis, row, col)
    raise RuntimeError("simplex iteration limit reached")


def simplex(c, A_eq, b_eq, max_iter: int = 50_000):
    """Solve ``min c^T x  s.t.  A_eq x = b_eq, x >= 0``.

    Returns ``(x, value)``. Raises :class:`LPInfeasible` or :class:`LPUnbounded`.
    """
    c = np.asarray(c, dtype=np.float64)
    A = np.array(A_eq, dtype=np.float64)
    b = np.array(b_eq, dtype=np.float64)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificials n .. n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    _run_simplex(T, basis, np.ones(n + m, dtype=bool), max_iter)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPInfeasible(f"phase-1 objective {-T[-1, -1]:.3e} > 0")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > PIVOT_TOL)
            if cand.size == 0:
                continue
            _pivot(T, basis, r, cand[0])
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = basis[keep]

    # phase 2
    T[-1, :n] = c
    T[-1, -1] = 0.0
    for r, j in enumerate(basis):
        T[-1] -= c[j] * T[r]
    _run_simplex(T, basis, np.ones(n, dtype=bool), max_iter)
    x = np.zeros(n)
    x[basis] = T[:-1, -1]
    return x, float(c @ x)


@dataclass
class LPSolution:
    value: float
    occupancy: np.ndarray       # unnormalized q(s, a), sums to H
    policy: np.ndarray


def occupancy_lp(inst: RCMDPInstance):
    """Dense standard-form data ``(c, A_eq, b_eq, num_q)`` with one slack per constraint."""
    P = _single_kernel(inst)
    S, A, N = inst.num_states, inst.num_actions, inst.num_constraints
    nq = S * A
    # flow balance: sum_a q(s,a) - gamma sum_{s',a'} P(s|s',a') q(s',a') = mu(s)
    flow = np.kron(np.eye(S), np.ones((1, A))) - inst.gamma * P.reshape(nq, S).T
    A_eq = np.zeros((S + N, nq + N))
    A_eq[:S, :nq] = flow
    A_eq[S:, :nq] = inst.costs[1:].reshape(N, nq)
    A_eq[S:, nq:] = np.eye(N)
    b_eq = np.concatenate([inst.mu, inst.thresholds])
    c = np.concatenate([inst.costs[0].reshape(nq), np.zeros(N)])
    return c, A_eq, b_eq, nq


def solve_cmdp_lp(inst: RCMDPInstance) -> LPSolution:
    """Optimal constrained return of a single-kernel instance and an optimal policy."""
    check_instance(inst)
    c, A_eq, b_eq, nq = occupancy_lp(inst)
    x, value = simplex(c, A_eq, b_eq)
    q = x[:nq].reshape(inst.num_states, inst.num_actions)
    return LPSolution(value, q, policy_from_occupancy(q))
