"""Primal-dual interior-point methods for bound-constrained problems with approximate Newton directions."""

from .active_sets import (
    EstimationThresholds,
    IndexPartition,
    estimate_active,
    estimate_inactive_multipliers,
    estimate_partition,
    exact_partition,
)
from .approx import (
    ApproxVariant,
    dlambda_comp_partial,
    dx_comp_partial,
    dx_schur_partial,
    full_approximate_direction,
    partial_step_direction,
    recover_active_multipliers,
    recover_inactive_multipliers,
    reduced_schur_solve,
)
from .exceptions import *  # noqa: F401,F403
from .harness import CertifiedProblem, ErrorRecord, GeneratorSpec, error_sweep, fit_slope, generate, iteration_table
from .ipm import (
    Algorithm,
    Outcome,
    RunTrace,
    SolverConfig,
    initial_point,
    solve,
    solve_approx,
    solve_higher_order,
    solve_intermediate,
    solve_reference,
)
from .newton import Direction, StepLengths, apply_step, max_feasible_steps, modified_newton_direction, newton_direction
from .problem import BoundedProblem, QuadraticProblem, parse_problem, read_problem, serialize, validate, write_problem
from .residual import Iterate, component_orders, jacobian, make_iterate, residual

__version__ = "0.1.0"
