import numpy as np
import pytest

from epirc.envgen import GenSpec, random_instance
from epirc.mdp import FiniteSet, KLSet, RCMDPInstance, deterministic_policy


def single_state(costs, gamma=0.5, thresholds=()):
    """One-state instance; ``costs`` is a list of per-action cost rows."""
    costs = np.asarray(costs, dtype=float)[:, None, :]
    A = costs.shape[2]
    return RCMDPInstance(gamma, [1.0], costs, thresholds, FiniteSet(np.ones((1, 1, A, 1))))


def small_cmdp(seed, S=3, A=2, gamma=0.9, N=1):
    return random_instance(GenSpec("cmdp", S, A, gamma, num_constraints=N, seed=seed))


def small_kl(seed, S=5, A=3, gamma=0.9, reg=2.0, N=1):
    return random_instance(GenSpec("kl", S, A, gamma, kl_reg=reg, num_constraints=N, seed=seed))


def random_policy(rng, S, A, floor=0.0):
    pi = rng.dirichlet(np.ones(A), size=S)
    return (pi + floor) / (1 + A * floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pi1():
    return deterministic_policy([0, 0, 0, 0], 2)


@pytest.fixture
def pi2():
    return deterministic_policy([1, 1, 1, 1], 2)


__all__ = ["single_state", "small_cmdp", "small_kl", "random_policy", "report", "KLSet"]


# ---------------------------------------------------------------------------
# acceptance reporting: one line per criterion, repeated in the terminal summary

ACCEPTANCE_LINES = []


def report(criterion: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {criterion:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
