"""Core tabular RCMDP types, validation and JSON (de)serialization.

Policies, kernels and costs are plain ``float64`` numpy arrays:

* kernel ``P[s, a, s']``, shape ``(S, A, S)``
* cost ``c[s, a]`` in ``[0, 1]``, shape ``(S, A)``
* policy ``pi[s, a]``, rows on the probability simplex, shape ``(S, A)``

States and actions are indexed from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

ROW_TOL = 1e-12
# returns computed by linear solves may exceed H by rounding; thresholds get this slack
RETURN_TOL = 1e-12


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    x.setflags(write=False)
    return x


def _renormalize(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Divide rows by their sums where the sum is within ``ROW_TOL`` of 1.

    Rows that are off by rounding noise only are left untouched, so that
    serialization round trips are exact.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    sums = x.sum(axis=axis, keepdims=True)
    dev = np.abs(sums - 1.0)
    close = (dev <= ROW_TOL) & (dev > 8 * np.finfo(np.float64).eps)
    return np.where(close, x / np.where(close, sums, 1.0), x)


# ---------------------------------------------------------------------------
# uncertainty sets


@dataclass(frozen=True)
class FiniteSet:
    """Finite uncertainty set ``{P_1, ..., P_M}``; ``kernels`` has shape (M, S, A, S)."""

    kernels: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        if k.ndim == 3:
            k = k[None]
        object.__setattr__(self, "kernels", _readonly(_renormalize(k)))

    def __len__(self) -> int:
        return self.kernels.shape[0]


@dataclass(frozen=True)
class KLSet:
    """(s, a)-rectangular KL set, parameterized by the regularization strength ``reg``.

    The robust backup tilts each nominal row by ``exp(V / reg)``.
    """

    nominal: np.ndarray
    reg: float

    def __post_init__(self):
        object.__setattr__(self, "nominal", _readonly(_renormalize(self.nominal)))
        object.__setattr__(self, "reg", float(self.reg))


UncertaintySet = Union[FiniteSet, KLSet]


# ---------------------------------------------------------------------------
# instance


@dataclass(frozen=True)
class RCMDPInstance:
    """A tabular robust constrained MDP.

    ``costs[0]`` is the objective; ``costs[1:]`` are constraint costs with
    thresholds ``thresholds`` (one per constraint).
    """

    gamma: float
    mu: np.ndarray
    costs: np.ndarray
    thresholds: np.ndarray
    uncertainty: UncertaintySet
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "mu", _readonly(_renormalize(np.ravel(self.mu))))
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.ndim == 2:
            costs = costs[None]
        object.__setattr__(self, "costs", _readonly(costs))
        object.__setattr__(self, "thresholds", _readonly(np.ravel(self.thresholds)))

    @property
    def num_states(self) -> int:
        return self.costs.shape[1]

    @property
    def num_actions(self) -> int:
        return self.costs.shape[2]

    @property
    def num_constraints(self) -> int:
        return self.costs.shape[0] - 1

    @property
    def horizon(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    def full_thresholds(self, b0: float) -> np.ndarray:
        """Thresholds ``(b0, b_1, ..., b_N)`` including the objective threshold."""
        return np.concatenate([[float(b0)], self.thresholds])

    def with_thresholds(self, thresholds) -> "RCMDPInstance":
        return RCMDPInstance(self.gamma, self.mu, self.costs, thresholds,
                             self.uncertainty, dict(self.meta))

    def with_uncertainty(self, uncertainty: UncertaintySet) -> "RCMDPInstance":
        return RCMDPInstance(self.gamma, self.mu, self.costs, self.thresholds,
                             uncertainty, dict(self.meta))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    index: Any
    value: Any
    message: str

    def __str__(self) -> str:
        loc = "" if self.index is None else f"[{self.index}]"
        return f"{self.field}{loc}: {self.message} (observed {self.value!r})"


def _check_stochastic(name: str, arr: np.ndarray, out: list[Violation]) -> None:
    bad = np.argwhere((arr < 0) | (arr > 1))
    for idx in bad[:5]:
        out.append(Violation(name, tuple(int(i) for i in idx), float(arr[tuple(idx)]),
                             "entry outside [0, 1]"))
    sums = arr.sum(axis=-1)
    for idx in np.argwhere(np.abs(sums - 1.0) > ROW_TOL)[:5]:
        out.append(Violation(name, tuple(int(i) for i in idx), float(sums[tuple(idx)]),
                             "row does not sum to 1"))


def validate_instance(inst: RCMDPInstance) -> list[Violation]:
    """Return the list of violated instance invariants (empty when valid)."""
    out: list[Violation] = []
    costs = inst.costs
    if costs.ndim != 3 or costs.shape[0] < 1 or costs.shape[1] < 1 or costs.shape[2] < 1:
        return [Violation("costs", None, costs.shape, "expected shape (N+1, S, A) with N+1 >= 1")]
    n_cost, S, A = costs.shape
    if not 0.0 < inst.gamma < 1.0:
        out.append(Violation("gamma", None, inst.gamma, "must lie in (0, 1)"))
    H = 1.0 / (1.0 - inst.gamma) if inst.gamma < 1.0 else np.inf

    mu = inst.mu
    if mu.shape != (S,):
        out.append(Violation("mu", None, mu.shape, f"expected length {S}"))
    else:
        for s in np.flatnonzero(mu < 0):
            out.append(Violation("mu", int(s), float(mu[s]), "negative probability"))
        if abs(mu.sum() - 1.0) > ROW_TOL:
            out.append(Violation("mu", None, float(mu.sum()), "mu does not sum to 1"))

    for idx in np.argwhere((costs < 0) | (costs > 1))[:5]:
        out.append(Violation("costs", tuple(int(i) for i in idx), float(costs[tuple(idx)]),
                             "cost outside [0, 1]"))

    b = inst.thresholds
    if b.shape != (n_cost - 1,):
        out.append(Violation("thresholds", None, b.shape,
                             f"expected {n_cost - 1} thresholds (one per constraint cost)"))
    else:
        for n in np.flatnonzero((b < 0) | (b > H * (1 + RETURN_TOL)) | ~np.isfinite(b)):
            out.append(Violation("thresholds", int(n), float(b[n]), f"threshold outside [0, H={H:g}]"))

    u = inst.uncertainty
    if isinstance(u, FiniteSet):
        if len(u) == 0:
            out.append(Violation("uncertainty.kernels", None, 0, "finite set is empty"))
        elif u.kernels.shape[1:] != (S, A, S):
            out.append(Violation("uncertainty.kernels", None, u.kernels.shape,
                                 f"expected kernels of shape ({S}, {A}, {S})"))
        else:
            _check_stochastic("uncertainty.kernels", u.kernels, out)
    elif isinstance(u, KLSet):
        if u.nominal.shape != (S, A, S):
            out.append(Violation("uncertainty.nominal", None, u.nominal.shape,
                                 f"expected shape ({S}, {A}, {S})"))
        else:
            _check_stochastic("uncertainty.nominal", u.nominal, out)
            for idx in np.argwhere(u.nominal <= 0)[:5]:
                out.append(Violation("uncertainty.nominal", tuple(int(i) for i in idx),
                                     float(u.nominal[tuple(idx)]),
                                     "KL nominal kernel must be strictly positive"))
        if not (u.reg > 0 and np.isfinite(u.reg)):
            out.append(Violation("uncertainty.reg", None, u.reg, "regularization must be positive"))
    else:
        out.append(Violation("uncertainty", None, type(u).__name__, "unknown uncertainty set type"))
    return out


def check_instance(inst: RCMDPInstance) -> RCMDPInstance:
    """Raise ``ValueError`` listing every violation if ``inst`` is invalid."""
    errors = validate_instance(inst)
    if errors:
        raise ValueError("invalid RCMDP instance:\n  " + "\n  ".join(map(str, errors)))
    return inst


def kernels_of(inst: RCMDPInstance) -> np.ndarray:
    """Kernel stack for a finite set, or the nominal kernel (as a 1-stack) for KL."""
    u = inst.uncertainty
    return u.kernels if isinstance(u, FiniteSet) else u.nominal[None]


# ---------------------------------------------------------------------------
# policies


def is_policy(pi: np.ndarray, tol: float = ROW_TOL) -> bool:
    pi = np.asarray(pi)
    return (pi.ndim == 2 and bool(np.all(pi >= 0)) and bool(np.all(pi <= 1))
            and bool(np.all(np.abs(pi.sum(axis=1) - 1.0) <= tol)))


def as_policy(probs) -> np.ndarray:
    """Validate a policy array, renormalizing rows that are within tolerance."""
    pi = _renormalize(np.asarray(probs, dtype=np.float64))
    if not is_policy(pi):
        raise ValueError("not a policy: rows must be probability distributions over actions")
    return pi


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    if num_states < 1 or num_actions < 1:
        raise ValueError("uniform_policy needs at least one state and one action")
    return np.full((num_states, num_actions), 1.0 / num_actions)


def deterministic_policy(actions, num_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    if np.any(actions < 0) or np.any(actions >= num_actions):
        raise ValueError(f"action index out of range [0, {num_actions})")
    pi = np.zeros((actions.size, num_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


# ---------------------------------------------------------------------------
# JSON schema


def instance_to_dict(inst: RCMDPInstance) -> dict:
    u = inst.uncertainty
    if isinstance(u, FiniteSet):
        unc = {"type": "finite", "kernels": u.kernels.tolist()}
    else:
        unc = {"type": "kl", "nominal": u.nominal.tolist(), "reg": u.reg}
    d = {
        "num_states": inst.num_states,
        "num_actions": inst.num_actions,
        "gamma": inst.gamma,
        "mu": inst.mu.tolist(),
        "costs": inst.costs.tolist(),
        "thresholds": inst.thresholds.tolist(),
        "uncertainty": unc,
    }
    if inst.meta:
        d["meta"] = inst.meta
    return d


def instance_from_dict(d: dict) -> RCMDPInstance:
    unc = d["uncertainty"]
    kind = unc.get("type")
    if kind == "finite":
        u: UncertaintySet = FiniteSet(np.asarray(unc["kernels"], dtype=np.float64))
    elif kind == "kl":
        if "reg" not in unc:
            if "radius" in unc:
                raise ValueError("KL sets are parameterized by the regularization strength 'reg'; "
                                 "a radius-parameterized KL set ('radius') is not supported")
            raise ValueError("KL uncertainty set requires 'reg'")
        u = KLSet(np.asarray(unc["nominal"], dtype=np.float64), float(unc["reg"]))
    else:
        raise ValueError(f"unknown uncertainty type {kind!r}")
    inst = RCMDPInstance(
        gamma=d["gamma"],
        mu=np.asarray(d["mu"], dtype=np.float64),
        costs=np.asarray(d["costs"], dtype=np.float64),
        thresholds=np.asarray(d["thresholds"], dtype=np.float64),
        uncertainty=u,
        meta=dict(d.get("meta", {})),
    )
    if inst.num_states != d["num_states"] or inst.num_actions != d["num_actions"]:
        raise ValueError("num_states/num_actions disagree with array shapes")
    return inst


def dumps_instance(inst: RCMDPInstance) -> str:
    return json.dumps(instance_to_dict(inst))


def loads_instance(text: str) -> RCMDPInstance:
    return instance_from_dict(json.loads(text))


def save_instance(inst: RCMDPInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst))


def load_instance(path) -> RCMDPInstance:
    with open(path) as fh:
        return loads_instance(fh.read())
