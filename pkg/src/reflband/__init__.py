"""Barrier policies for dividend-style singular control of reflected diffusions.

The library solves the infinite-horizon problem of paying out a
cumulative dividend D (earning a marginal rate eta(x)) from a one-
dimensional diffusion that is reflected at zero by costly injections L
(costing kappa per unit), maximizing

    E[ integral e^{-rt} eta(X) dD  -  kappa * integral e^{-rt} dL ].

The optimal policy is a band [0, b*]: reflect at zero, pay dividends at
b*.  The package computes b* and the value function from the
fundamental solutions of the generator, certifies the result against
the HJB variational inequality, specializes to closed forms for the
mean-reverting (Ornstein-Uhlenbeck) dividend model, and validates
everything with a reproducible Monte Carlo simulator of the doubly
reflected state.

Entry points
------------
``solve_boundary`` / ``build_value``
    Free boundary and value function for a diffusion + reward pair.
``compute_basis`` / ``ou_hat_basis``
    Fundamental solutions, by generic ODE shooting or OU closed forms.
``estimate_payoff`` / ``estimate_case_c_value`` / ``estimate_vprime_stopping``
    Monte Carlo checks of the analytic value and its derivative.
``sensitivity_sweep``
    Comparative statics of the OU model with monotonicity verdicts.
``load_config`` + the ``reflband`` command-line tool
    JSON-driven solve / simulate / sweep pipelines.
"""

from .basis import FundamentalBasis, basis_to_csv, compute_basis, hitting_laplace
from .boundary import (
    ControlSolution,
    HjbReport,
    boundary_objective,
    build_value,
    coefficients,
    epsilon_boundary_sequence,
    solution_to_json,
    solve_boundary,
    transformed_scale_check,
    value_to_csv,
    verify_hjb,
)
from .config import OutputSpec, ProblemConfig, load_config, ou_params_for, resolve_basis
from .diffusion import DiffusionSpec, Grid, brownian, ou
from .errors import (
    DomainTooSmall,
    InputError,
    ModelError,
    NumericalError,
    PathError,
    ReflbandError,
)
from .jsonio import dumps_17g
from .montecarlo import (
    BandPaths,
    SimConfig,
    SimEstimate,
    backend_name,
    compiled_backend_available,
    dump_paths_csv,
    estimate_case_c_value,
    estimate_hitting_laplace,
    estimate_payoff,
    estimate_vprime_stopping,
    simulate_double_reflection,
)
from .ou import (
    OUParams,
    SweepResult,
    SweepRow,
    cylinder_D,
    ou_hat_basis,
    sensitivity_sweep,
    solve_ou_boundary,
)
from .reward import (
    CaseLabel,
    RewardSpec,
    case_quantity,
    classify,
    constant_reward,
    exp_decay_reward,
    from_running_reward,
    linear_reward,
)

__version__ = "0.1.0"

__all__ = [
    "BandPaths",
    "CaseLabel",
    "ControlSolution",
    "DiffusionSpec",
    "DomainTooSmall",
    "FundamentalBasis",
    "Grid",
    "HjbReport",
    "InputError",
    "ModelError",
    "NumericalError",
    "OUParams",
    "OutputSpec",
    "PathError",
    "ProblemConfig",
    "ReflbandError",
    "RewardSpec",
    "SimConfig",
    "SimEstimate",
    "SweepResult",
    "SweepRow",
    "backend_name",
    "basis_to_csv",
    "boundary_objective",
    "brownian",
    "build_value",
    "case_quantity",
    "classify",
    "coefficients",
    "compiled_backend_available",
    "compute_basis",
    "constant_reward",
    "cylinder_D",
    "dump_paths_csv",
    "dumps_17g",
    "epsilon_boundary_sequence",
    "estimate_case_c_value",
    "estimate_hitting_laplace",
    "estimate_payoff",
    "estimate_vprime_stopping",
    "exp_decay_reward",
    "from_running_reward",
    "hitting_laplace",
    "linear_reward",
    "load_config",
    "ou",
    "ou_hat_basis",
    "ou_params_for",
    "resolve_basis",
    "sensitivity_sweep",
    "simulate_double_reflection",
    "solution_to_json",
    "solve_boundary",
    "solve_ou_boundary",
    "transformed_scale_check",
    "value_to_csv",
    "verify_hjb",
    "__version__",
]
