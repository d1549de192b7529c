"""Tabular robust constrained MDP solvers.

The main entry points are :func:`bisection_solve` (EpiRC-PGS),
:func:`lf_solve` (Lagrangian baseline), :func:`robust_returns` and
:func:`solve_cmdp_lp` for single-kernel instances.
"""

from .envgen import GenSpec, counterexample_closed_forms, counterexample_instance, random_instance
from .epigraph import (BisectionConfig, SubroutineConfig, bisection_solve, delta_hat,
                       pgs_subroutine, project_policy, theoretical_params)
from .lagrangian import LagrangeConfig, lagrangian_subgradient, lagrangian_value, lf_solve
from .lp import LPInfeasible, solve_cmdp_lp
from .mdp import (FiniteSet, KLSet, RCMDPInstance, deterministic_policy, load_instance,
                  save_instance, uniform_policy, validate_instance)
from .robust import RobustEvaluation, eval_finite, eval_kl, robust_eval, robust_returns

__version__ = "0.1.0"

__all__ = [
    "BisectionConfig", "FiniteSet", "GenSpec", "KLSet", "LPInfeasible", "LagrangeConfig",
    "RCMDPInstance", "RobustEvaluation", "SubroutineConfig", "bisection_solve",
    "counterexample_closed_forms", "counterexample_instance", "delta_hat",
    "deterministic_policy", "eval_finite", "eval_kl", "lagrangian_subgradient",
    "lagrangian_value", "lf_solve", "load_instance", "pgs_subroutine", "project_policy",
    "random_instance", "robust_eval", "robust_returns", "save_instance", "solve_cmdp_lp",
    "theoretical_params", "uniform_policy", "validate_instance",
]
