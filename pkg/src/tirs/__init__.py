"""Finite-horizon time-inconsistent risk-sensitive MDPs.

Equilibria of the ε-problem and of its max-plus limit by backward Hamiltonian
recursion, step-optimality verification, and ε → 0 convergence sweeps.
"""
from .convergence import SweepResult, default_grid, geometric_grid, sweep, w_metric
from .equilibrium import (
    DeviationReport,
    EquilibriumSolution,
    GapReport,
    Policy,
    evaluate_policy,
    policy_values,
    precommitment_gap,
    solve_eps,
    solve_limit,
    verify_step_optimality,
)
from .examples import (
    Example1Config,
    Example2Config,
    build_discounted_costs,
    build_example1,
    build_example2,
    fixed_kernel_model,
    random_model,
)
from .model import (
    INF,
    KernelError,
    ModelError,
    ModelSpec,
    ValidationReport,
    kernel_at,
    rate_row,
    validate_assumptions,
)
from .operators import (
    LIMIT,
    ArgminSet,
    bellman_argmin,
    hamiltonian_eps,
    hamiltonian_limit,
    lambda_eps,
    lambda_limit,
    varadhan_check,
)

__version__ = "0.1.0"
