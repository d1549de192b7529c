"""Seed-grid experiments: generate instances, run EpiRC-PGS and the Lagrangian
baselines, and write per-iteration metrics.

Per-run outputs (``<out>/runs/``) are a metrics CSV and a JSON list of the
policy at every outer iteration. ``<out>/metrics.csv`` concatenates all runs,
``<out>/aggregate.csv`` holds mean and standard error over seeds, and
``<out>/summary.json`` records the marked policy of every run.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .envgen import PRNG_NAME, GenSpec, random_instance
from .epigraph import BisectionConfig, SubroutineConfig, bisection_solve
from .lagrangian import (LagrangeConfig, average_occupancy_policy, average_policies,
                         lf_solve, max_violation)
from .lp import LPInfeasible, solve_cmdp_lp
from .mdp import RCMDPInstance, uniform_policy
from .robust import robust_returns

log = logging.getLogger(__name__)

ALGORITHMS = ("epirc", "lf", "lf-pi-avg", "lf-occ-avg", "lp-oracle")
CMDP_ONLY = ("lf-occ-avg", "lp-oracle")
CSV_COLUMNS = ("seed", "algorithm", "k", "violation", "relative_return", "b0_low", "b0_high", "wall_ms")

# (T, alpha) of the inner policy-gradient loop per setting
INNER_DEFAULTS = {"finite": (10_000, 5e-5), "cmdp": (10_000, 5e-5), "kl": (1_000, 5e-4)}


class ConfigError(ValueError):
    pass


@dataclass
class MetricRow:
    seed: int
    algorithm: str
    k: int
    violation: float
    relative_return: float
    b0_low: Optional[float] = None
    b0_high: Optional[float] = None
    wall_ms: float = 0.0
    policy: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


def select_marked_policy(rows) -> int:
    """Index of the feasible row with the smallest return, else of the row with
    the smallest violation (earliest on ties)."""
    rows = list(rows)
    if not rows:
        raise ValueError("select_marked_policy needs at least one row")
    feasible = [i for i, r in enumerate(rows) if r.violation <= 0]
    if feasible:
        return min(feasible, key=lambda i: (rows[i].relative_return, i))
    return min(range(len(rows)), key=lambda i: (rows[i].violation, i))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_rows(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    write_rows(rows, buf)
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricRow]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        opt = lambda v: None if v == "" else float(v)  # noqa: E731
        out.append(MetricRow(int(rec["seed"]), rec["algorithm"], int(rec["k"]),
                             float(rec["violation"]), float(rec["relative_return"]),
                             opt(rec["b0_low"]), opt(rec["b0_high"]), float(rec["wall_ms"])))
    return out


def aggregate(rows) -> list[dict]:
    """Mean and standard error of violation and relative return per (algorithm, k)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.algorithm, r.k), []).append(r)
    out = []
    for (alg, k), grp in sorted(groups.items()):
        rec = {"algorithm": alg, "k": k, "num_runs": len(grp)}
        for name in ("violation", "relative_return"):
            vals = np.array([getattr(r, name) for r in grp])
            rec[f"{name}_mean"] = float(vals.mean())
            rec[f"{name}_stderr"] = (float(vals.std(ddof=1) / math.sqrt(len(vals)))
                                     if len(vals) > 1 else 0.0)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    setting: str = "finite"
    generator: GenSpec = field(default_factory=GenSpec)
    algorithms: tuple = ("epirc", "lf", "lf-pi-avg")
    epirc: BisectionConfig = field(default_factory=BisectionConfig)
    lf: LagrangeConfig = field(default_factory=LagrangeConfig)
    seeds: tuple = tuple(range(10))
    output_dir: Optional[str] = "results"
    record_timing: bool = True

    def validate(self) -> "ExperimentConfig":
        if self.setting not in INNER_DEFAULTS:
            raise ConfigError(f"unknown setting {self.setting!r}")
        if self.generator.setting != self.setting:
            raise ConfigError("generator.setting must match setting")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {alg!r}")
            if alg in CMDP_ONLY and self.setting != "cmdp":
                raise ConfigError(f"{alg} is only defined for the cmdp setting (|U| = 1)")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        return self

    @classmethod
    def default(cls, setting: str, **overrides) -> "ExperimentConfig":
        if setting not in INNER_DEFAULTS:
            raise ConfigError(f"unknown setting {setting!r}")
        T, alpha = INNER_DEFAULTS[setting]
        K = 10
        algs = ("epirc", "lf", "lf-pi-avg") + (CMDP_ONLY if setting == "cmdp" else ())
        cfg = cls(setting=setting, generator=GenSpec(setting=setting), algorithms=algs,
                  epirc=BisectionConfig(K, SubroutineConfig(T, alpha)),
                  # LF gets the same number of inner passes as EpiRC (K rounds + final solve)
                  lf=LagrangeConfig(K + 1, T, 0.01, alpha))
        for key, val in overrides.items():
            setattr(cfg, key, val)
        return cfg.validate()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            setting = d.get("setting", "finite")
            base = cls.default(setting)
            gen = dict(d.get("generator", {}))
            gen.setdefault("setting", setting)
            base.generator = GenSpec(**gen)
            if "algorithms" in d:
                base.algorithms = tuple(d["algorithms"])
            if "epirc" in d:
                e = dict(d["epirc"])
                sub = dict(e.pop("subroutine", {}))
                cur = base.epirc.subroutine
                sub_cfg = SubroutineConfig(sub.get("iterations", cur.iterations),
                                           sub.get("learning_rate", cur.learning_rate))
                base.epirc = BisectionConfig(e.get("outer_iterations", base.epirc.outer_iterations),
                                             sub_cfg, e.get("warm_start", base.epirc.warm_start))
            if "lf" in d:
                lf = {**{f.name: getattr(base.lf, f.name) for f in fields(LagrangeConfig)}, **d["lf"]}
                base.lf = LagrangeConfig(**lf)
            if "seeds" in d:
                base.seeds = tuple(int(s) for s in d["seeds"])
            if "output_dir" in d:
                base.output_dir = d["output_dir"]
            if "record_timing" in d:
                base.record_timing = bool(d["record_timing"])
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad experiment config: {exc}") from exc
        return base.validate()

    def to_dict(self) -> dict:
        lf = asdict(self.lf)
        if lf["initial_lambda"] is not None:
            lf["initial_lambda"] = list(map(float, lf["initial_lambda"]))
        lf.pop("initial_policy", None)
        return {
            "setting": self.setting,
            "generator": asdict(self.generator),
            "algorithms": list(self.algorithms),
            "epirc": {"outer_iterations": self.epirc.outer_iterations,
                      "warm_start": self.epirc.warm_start,
                      "subroutine": {"iterations": self.epirc.subroutine.iterations,
                                     "learning_rate": self.epirc.subroutine.learning_rate}},
            "lf": lf,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "record_timing": self.record_timing,
        }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# running


def _row(inst, seed, alg, k, pi, returns, J0_unif, wall, low=None, high=None) -> MetricRow:
    return MetricRow(seed, alg, k, max_violation(returns, inst.thresholds),
                     float(returns[0] - J0_unif), low, high, wall, np.asarray(pi))


def run_epirc(inst: RCMDPInstance, cfg: BisectionConfig, seed: int, J0_unif: float,
              timing: bool = True) -> list[MetricRow]:
    t0 = time.perf_counter()
    pi, trace = bisection_solve(inst, cfg)
    total = 1e3 * (time.perf_counter() - t0)
    rows = [_row(inst, seed, "epirc", r.k, r.policy, r.returns, J0_unif,
                 r.wall_ms if timing else 0.0, r.low, r.high) for r in trace.outer]
    low, high = trace.final_interval
    final_wall = total - sum(r.wall_ms for r in trace.outer)
    rows.append(_row(inst, seed, "epirc", len(trace.outer), pi, robust_returns(inst, pi),
                     J0_unif, final_wall if timing else 0.0, low, high))
    return rows


def run_lf_family(inst: RCMDPInstance, cfg: LagrangeConfig, seed: int, J0_unif: float,
                  algorithms, timing: bool = True) -> dict:
    """Run LF once and derive the requested averaging baselines from its iterates."""
    res = lf_solve(inst, cfg)
    pol0 = uniform_policy(inst.num_states, inst.num_actions)
    history = [pol0] + [r.policy for r in res.records]
    out = {}
    if "lf" in algorithms:
        out["lf"] = [_row(inst, seed, "lf", r.k, r.policy, r.returns, J0_unif,
                          r.wall_ms if timing else 0.0) for r in res.records]
    for alg, avg in (("lf-pi-avg", lambda ps: average_policies(ps)),
                     ("lf-occ-avg", lambda ps: average_occupancy_policy(inst, ps))):
        if alg not in algorithms:
            continue
        rows = []
        for r in res.records:
            pi = avg(history[: r.k + 2])
            rows.append(_row(inst, seed, alg, r.k, pi, robust_returns(inst, pi), J0_unif,
                             r.wall_ms if timing else 0.0))
        out[alg] = rows
    return out


def _policies_json(rows) -> str:
    return json.dumps([{"k": r.k, "policy": r.policy.tolist()} for r in rows])


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every (seed, algorithm) pair of ``cfg`` and write the artifacts.

    Failures of single runs are logged and reported under ``"failures"``
    without stopping the remaining runs.
    """
    cfg.validate()
    out = Path(cfg.output_dir) if cfg.output_dir else None
    if out is not None:
        (out / "runs").mkdir(parents=True, exist_ok=True)
    all_rows: list[MetricRow] = []
    runs, failures = [], []
    for idx, seed in enumerate(cfg.seeds):
        try:
            spec = GenSpec(**{**asdict(cfg.generator), "seed": int(seed)})
            inst = random_instance(spec)
            J0_unif = float(robust_returns(inst, uniform_policy(inst.num_states, inst.num_actions))[0])
        except Exception as exc:  # noqa: BLE001
            log.exception("instance generation failed for seed %s", seed)
            failures.append({"run": idx, "seed": seed, "algorithm": None, "error": repr(exc)})
            continue
        J_star = None
        if "lp-oracle" in cfg.algorithms:
            try:
                J_star = solve_cmdp_lp(inst).value
            except LPInfeasible as exc:
                failures.append({"run": idx, "seed": seed, "algorithm": "lp-oracle", "error": repr(exc)})
        produced: dict = {}
        if "epirc" in cfg.algorithms:
            try:
                produced["epirc"] = run_epirc(inst, cfg.epirc, seed, J0_unif, cfg.record_timing)
            except Exception as exc:  # noqa: BLE001
                log.exception("epirc failed for seed %s", seed)
                failures.append({"run": idx, "seed": seed, "algorithm": "epirc", "error": repr(exc)})
        lf_algs = [a for a in cfg.algorithms if a.startswith("lf")]
        if lf_algs:
            try:
                produced.update(run_lf_family(inst, cfg.lf, seed, J0_unif, lf_algs, cfg.record_timing))
            except Exception as exc:  # noqa: BLE001
                log.exception("lf failed for seed %s", seed)
                failures.append({"run": idx, "seed": seed, "algorithm": "lf", "error": repr(exc)})
        for alg, rows in produced.items():
            m = select_marked_policy(rows)
            marked = rows[m]
            J0 = J0_unif + marked.relative_return
            run = {"run": idx, "seed": int(seed), "algorithm": alg, "marked_k": marked.k,
                   "marked_violation": marked.violation,
                   "marked_relative_return": marked.relative_return,
                   "marked_return": J0, "marked_policy": marked.policy.tolist(),
                   "uniform_return": J0_unif}
            if J_star is not None:
                run["lp_optimum"] = J_star
                run["gap_to_lp"] = J0 - J_star
            runs.append(run)
            all_rows.extend(rows)
            if out is not None:
                stem = out / "runs" / f"run{idx:03d}_seed{seed}_{alg}"
                stem.with_suffix(".csv").write_text(rows_to_csv(rows))
                stem.with_suffix(".json").write_text(_policies_json(rows))
        if J_star is not None:
            runs.append({"run": idx, "seed": int(seed), "algorithm": "lp-oracle", "lp_optimum": J_star})
    agg = aggregate(all_rows)
    report = {"config": cfg.to_dict(), "generator": PRNG_NAME, "runs": runs,
              "aggregate": agg, "failures": failures}
    if out is not None:
        (out / "metrics.csv").write_text(rows_to_csv(all_rows))
        with open(out / "aggregate.csv", "w") as fh:
            if agg:
                w = csv.DictWriter(fh, fieldnames=list(agg[0]), lineterminator="\n")
                w.writeheader()
                w.writerows(agg)
        (out / "summary.json").write_text(json.dumps(report, indent=1))
    report["rows"] = all_rows
    return report
