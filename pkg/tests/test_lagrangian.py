import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epirc.envgen import counterexample_instance
from epirc.lagrangian import (LagrangeConfig, average_occupancy_policy, average_policies,
                              lagrangian_subgradient, lagrangian_value, lf_solve, max_violation,
                              policy_from_occupancy, state_action_occupancy, update_multipliers)
from epirc.mdp import FiniteSet, RCMDPInstance, deterministic_policy, is_policy
from epirc.evaluation import occupancy
from epirc.robust import RobustEvaluation, robust_returns

from conftest import random_policy, small_cmdp, small_kl

G, D = 0.4, 0.09
H = 1 / (1 - G)


def test_zero_lambda_is_objective():
    inst = small_kl(0, N=2)
    pi = random_policy(np.random.default_rng(0), 5, 3)
    ev = RobustEvaluation(inst, pi)
    assert lagrangian_value(inst, pi, [0, 0]) == pytest.approx(ev.values[0], abs=1e-12)
    assert np.allclose(lagrangian_subgradient(inst, pi, [0, 0]), ev.gradient(0), atol=1e-12)


def test_counterexample_gap(pi1, pi2):
    inst = counterexample_instance(G, D)
    gap = lagrangian_value(inst, pi2, [1.0]) - lagrangian_value(inst, pi1, [1.0])
    assert gap == pytest.approx(H * G / 4 - 3 * H * D / 4, abs=1e-9)
    assert gap == pytest.approx(0.0541667, abs=5e-8)


def test_zero_costs():
    inst = RCMDPInstance(0.9, [0.5, 0.5], np.zeros((3, 2, 2)), [0.3, 0.7],
                         FiniteSet(np.full((2, 2, 2), 0.5)))
    assert lagrangian_value(inst, np.full((2, 2), 0.5), [2.0, 1.0]) == pytest.approx(-1.3)


def test_negative_lambda_rejected():
    inst = small_cmdp(0)
    with pytest.raises(ValueError):
        lagrangian_value(inst, np.full((3, 2), 0.5), [-0.1])
    with pytest.raises(ValueError):
        LagrangeConfig(initial_lambda=np.array([-1.0]))


def test_counterexample_subgradient(pi2):
    inst = counterexample_instance(G, D)
    g = lagrangian_subgradient(inst, pi2, [1.0])
    # objective term under P1 plus constraint term under P2
    assert 4 / H * g[0, 0] == pytest.approx((D + H * G) + (H - H * G * D), abs=1e-12)
    assert 4 / H * g[0, 0] == pytest.approx(2.36333, abs=5e-6)
    assert 4 / H * (g[0, 0] - g[0, 1]) == pytest.approx(2 * D, abs=1e-12)
    assert g[1, 0] > g[1, 1]


def test_counterexample_stationary_at_zero_delta(pi2):
    g = lagrangian_subgradient(counterexample_instance(G, 0.0), pi2, [1.0])
    assert np.allclose(g[:, 0], g[:, 1], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.floats(0, 5), min_size=2, max_size=2),
       st.lists(st.floats(0, 5), min_size=2, max_size=2))
def test_lagrangian_affine_in_lambda(seed, lam, mu):
    inst = small_cmdp(seed, N=2)
    pi = random_policy(np.random.default_rng(seed), 3, 2)
    J = robust_returns(inst, pi)
    lhs = lagrangian_value(inst, pi, np.add(lam, mu)) - lagrangian_value(inst, pi, lam)
    assert lhs == pytest.approx(np.dot(mu, J[1:] - inst.thresholds), abs=1e-9)


def test_multiplier_update_clamps():
    assert update_multipliers([0.5], [-60.0], 0.01)[0] == 0.0
    assert update_multipliers([0.5], [10.0], 0.01)[0] == pytest.approx(0.6)
    assert max_violation([3.0], []) == 0.0


def test_slack_constraints_keep_lambda_zero():
    inst = small_cmdp(1, 4, 3, N=2)
    inst = inst.with_thresholds(np.full(2, inst.horizon))
    res = lf_solve(inst, LagrangeConfig(3, 50, 0.01, 1e-3))
    assert np.all(res.lambdas == 0)
    J0 = [r.returns[0] for r in res.records]
    assert all(b <= a + 1e-12 for a, b in zip(J0, J0[1:]))


def test_lambda_nonnegative_trajectory():
    inst = small_kl(3, N=3)
    res = lf_solve(inst, LagrangeConfig(4, 30, 0.5, 1e-3))
    assert res.lambdas.shape == (5, 3) and np.all(res.lambdas >= 0)
    assert len(res.records) == 4


def test_lf_trapped_near_pi2(pi2):
    inst = counterexample_instance(G, G / 4)
    start = 0.96 * pi2 + 0.02
    r0 = np.linalg.norm(start - pi2)
    res = lf_solve(inst, LagrangeConfig(5, 2000, 0.01, 1e-3, initial_lambda=[1.0], initial_policy=start))
    assert np.linalg.norm(res.policy - pi2) <= min(0.05, r0 + 1e-12)


def test_average_policies():
    a, b = deterministic_policy([0, 0], 2), deterministic_policy([1, 1], 2)
    assert np.array_equal(average_policies([a]), a)
    assert np.array_equal(average_policies([a, b]), np.full((2, 2), 0.5))
    rng = np.random.default_rng(0)
    assert is_policy(average_policies([random_policy(rng, 4, 3) for _ in range(7)]), 1e-12)
    with pytest.raises(ValueError):
        average_policies([])


def test_occupancy_average_single_policy():
    inst = small_cmdp(2, 4, 3)
    pi = random_policy(np.random.default_rng(1), 4, 3)
    out = average_occupancy_policy(inst, [pi])
    visited = occupancy(pi, inst.uncertainty.kernels[0], 0.9, inst.mu) > 1e-12
    assert np.allclose(out[visited], pi[visited], atol=1e-12)


def test_occupancy_average_rejects_multi_kernel():
    inst = small_cmdp(0)
    P = inst.uncertainty.kernels[0]
    with pytest.raises(ValueError):
        average_occupancy_policy(inst.with_uncertainty(FiniteSet(np.stack([P, P]))), [np.full((3, 2), 0.5)])
    with pytest.raises(ValueError):
        average_occupancy_policy(small_kl(0), [np.full((5, 3), 1 / 3)])


def test_occupancy_average_matches_averaged_occupancy():
    rng = np.random.default_rng(3)
    for seed in range(10):
        inst = small_cmdp(seed, 2, 2)
        pols = [random_policy(rng, 2, 2) for _ in range(2)]
        target = np.mean([state_action_occupancy(inst, p) for p in pols], axis=0)
        assert np.allclose(state_action_occupancy(inst, average_occupancy_policy(inst, pols)), target, atol=1e-8)


def test_policy_from_occupancy_zero_mass_rows():
    pi = policy_from_occupancy(np.array([[0.0, 0.0, 0.0], [1.0, 3.0, 0.0]]))
    assert np.allclose(pi, [[1 / 3] * 3, [0.25, 0.75, 0.0]])
