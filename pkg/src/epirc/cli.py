"""Command-line interface: ``epirc {envgen,solve,baseline,validate,bench}``.

Exit status is 0 on success, 1 when a run or check failed and 2 on a
configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .envgen import GenSpec, random_instance
from .experiment import (ALGORITHMS, ConfigError, ExperimentConfig, _policies_json,
                         load_config, rows_to_csv, run_epirc, run_experiment, run_lf_family,
                         select_marked_policy)
from .lagrangian import _single_kernel
from .lp import LPInfeasible, solve_cmdp_lp
from .mdp import dumps_instance, load_instance, save_instance, uniform_policy, validate_instance
from .robust import robust_returns
from .validation import run_validation

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.setting and args.setting != cfg.setting:
            raise ConfigError("--setting disagrees with the config file")
        return cfg
    return ExperimentConfig.default(args.setting or "finite")


def _instance(args, cfg: ExperimentConfig):
    if getattr(args, "instance", None):
        try:
            inst = load_instance(args.instance)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load instance {args.instance}: {exc}") from exc
        problems = validate_instance(inst)
        if problems:
            raise ConfigError("invalid instance: " + "; ".join(v.message for v in problems))
        return inst
    seed = args.seed[0] if args.seed else cfg.seeds[0]
    return random_instance(GenSpec(**{**asdict(cfg.generator), "seed": seed}))


def _write_rows(out, stem: str, rows) -> None:
    if out is None:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(rows_to_csv(rows))
    (out / f"{stem}.json").write_text(_policies_json(rows))


def _report(alg: str, rows) -> dict:
    m = rows[select_marked_policy(rows)]
    return {"algorithm": alg, "marked_k": m.k, "violation": m.violation,
            "relative_return": m.relative_return, "policy": m.policy.tolist()}


def cmd_envgen(args) -> int:
    if args.config:
        try:
            with open(args.config) as fh:
                spec = GenSpec(**json.load(fh))
        except (OSError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad generator config: {exc}") from exc
    else:
        spec = GenSpec(setting=args.setting or "finite")
    if args.seed:
        spec = GenSpec(**{**asdict(spec), "seed": args.seed[0]})
    if args.setting and spec.setting != args.setting:
        raise ConfigError("--setting disagrees with the config file")
    try:
        inst = random_instance(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out:
        save_instance(inst, args.out)
    else:
        print(dumps_instance(inst))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    inst = _instance(args, cfg)
    J0 = float(robust_returns(inst, uniform_policy(inst.num_states, inst.num_actions))[0])
    seed = args.seed[0] if args.seed else cfg.seeds[0]
    rows = run_epirc(inst, cfg.epirc, seed, J0, cfg.record_timing)
    _write_rows(args.out, "epirc", rows)
    print(json.dumps(_report("epirc", rows)))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config(args)
    inst = _instance(args, cfg)
    if args.algorithm == "lp-oracle":
        try:
            sol = solve_cmdp_lp(inst)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        except LPInfeasible as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(json.dumps({"algorithm": "lp-oracle", "value": sol.value, "policy": sol.policy.tolist()}))
        return EXIT_OK
    if args.algorithm == "lf-occ-avg":
        try:
            _single_kernel(inst)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    J0 = float(robust_returns(inst, uniform_policy(inst.num_states, inst.num_actions))[0])
    seed = args.seed[0] if args.seed else cfg.seeds[0]
    rows = run_lf_family(inst, cfg.lf, seed, J0, [args.algorithm], cfg.record_timing)[args.algorithm]
    _write_rows(args.out, args.algorithm, rows)
    print(json.dumps(_report(args.algorithm, rows)))
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = run_validation(args.seed[0] if args.seed else 0)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.ok for c in checks) else EXIT_FAIL


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.seed:
        cfg.seeds = tuple(args.seed)
    if args.out:
        cfg.output_dir = args.out
    cfg.validate()
    report = run_experiment(cfg)
    for run in report["runs"]:
        if "marked_violation" in run:
            print(f"seed {run['seed']:>3} {run['algorithm']:<11} k={run['marked_k']:<3} "
                  f"violation={run['marked_violation']:+.4f} "
                  f"relative_return={run['marked_relative_return']:+.4f}")
    for f in report["failures"]:
        print(f"FAILED seed {f['seed']} {f['algorithm']}: {f['error']}", file=sys.stderr)
    return EXIT_FAIL if report["failures"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epirc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance=False):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable for bench)")
        sp.add_argument("--out", help="output path")
        sp.add_argument("--setting", choices=("finite", "kl", "cmdp"))
        if instance:
            sp.add_argument("--instance", help="instance JSON (otherwise generated from the config)")
        return sp

    common(sub.add_parser("envgen", help="write a random instance")).set_defaults(func=cmd_envgen)
    common(sub.add_parser("solve", help="run EpiRC-PGS"), True).set_defaults(func=cmd_solve)
    b = common(sub.add_parser("baseline", help="run a Lagrangian baseline or the LP oracle"), True)
    b.add_argument("--algorithm", choices=[a for a in ALGORITHMS if a != "epirc"], default="lf")
    b.set_defaults(func=cmd_baseline)
    common(sub.add_parser("validate", help="run built-in correctness checks")).set_defaults(func=cmd_validate)
    common(sub.add_parser("bench", help="run a seed-grid experiment")).set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
