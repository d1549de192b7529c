"""A small seed grid comparing EpiRC-PGS with the Lagrangian baseline.

Writes CSV and JSON artifacts to ./demo_results and prints the marked policy
of each run: the feasible iterate with the lowest return, or the least
violating one when none is feasible.
"""

from epirc.experiment import ExperimentConfig, run_experiment
from epirc import BisectionConfig, GenSpec, LagrangeConfig, SubroutineConfig

cfg = ExperimentConfig.default("cmdp")
cfg.generator = GenSpec("cmdp", num_states=5, num_actions=3, gamma=0.9, num_constraints=2)
cfg.epirc = BisectionConfig(8, SubroutineConfig(1000, 1e-3))
cfg.lf = LagrangeConfig(9, 1000, 0.01, 1e-3)
cfg.seeds = (0, 1, 2)
cfg.output_dir = "demo_results"

report = run_experiment(cfg)
for run in report["runs"]:
    if run["algorithm"] == "lp-oracle":
        print(f"seed {run['seed']}  LP optimum {run['lp_optimum']:.4f}")
        continue
    print(f"seed {run['seed']}  {run['algorithm']:<11} violation {run['marked_violation']:+.4f}  "
          f"return {run['marked_return']:.4f}  gap {run['gap_to_lp']:+.4f}")
