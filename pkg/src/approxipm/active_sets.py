"""Active and inactive index sets: exact ones from a solution, estimated ones at runtime."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import BoundedProblem
from .residual import Iterate, gaps


@dataclass(frozen=True)
class IndexPartition:
    """Boolean masks over the n variables.

    ``a_l``/``a_u`` mark variables treated as sitting on their lower/upper
    bound. ``i_l``/``i_u`` mark multipliers treated as vanishing. An index
    may be in neither ``a_l`` nor ``i_l`` when estimation is undecided.
    """

    a_l: np.ndarray
    a_u: np.ndarray
    i_l: np.ndarray
    i_u: np.ndarray

    @property
    def a_x(self) -> np.ndarray:
        return self.a_l | self.a_u

    @property
    def i_x(self) -> np.ndarray:
        return ~self.a_x

    @classmethod
    def empty(cls, problem: BoundedProblem) -> "IndexPartition":
        """No active bounds; every finite-bound multiplier counts as inactive."""
        z = np.zeros(problem.n, dtype=bool)
        return cls(z, z.copy(), problem.has_lower.copy(), problem.has_upper.copy())

    @classmethod
    def from_active(cls, problem: BoundedProblem, a_l, a_u) -> "IndexPartition":
        """Complete a pair of active masks: every other finite bound is inactive."""
        a_l = np.asarray(a_l, dtype=bool) & problem.has_lower
        a_u = np.asarray(a_u, dtype=bool) & problem.has_upper
        if np.any(a_l & a_u):
            raise ValueError("an index cannot be active at both bounds")
        return cls(a_l, a_u, problem.has_lower & ~a_l, problem.has_upper & ~a_u)

    def sizes(self) -> dict:
        return {k: int(np.count_nonzero(getattr(self, k))) for k in ("a_l", "a_u", "i_l", "i_u", "a_x", "i_x")}


@dataclass(frozen=True)
class EstimationThresholds:
    tau_a_exponent: float
    tau_i_exponent: float

    def __post_init__(self):
        for name in ("tau_a_exponent", "tau_i_exponent"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    def tau_a(self, mu: float) -> float:
        return mu**self.tau_a_exponent

    def tau_i(self, mu: float) -> float:
        return mu**self.tau_i_exponent


def exact_partition(
    problem: BoundedProblem,
    x_star: np.ndarray,
    lambda_l_star: np.ndarray,
    lambda_u_star: np.ndarray,
    tol_active: float = 1e-10,
    tol_degenerate: float = 1e-6,
) -> tuple[IndexPartition, np.ndarray]:
    """Sets read off a known solution, plus the mask of degenerate active indices."""
    x_star = np.asarray(x_star, dtype=float)
    with np.errstate(invalid="ignore"):
        gl = np.where(problem.has_lower, x_star - problem.lower, np.inf)
        gu = np.where(problem.has_upper, problem.upper - x_star, np.inf)
    if np.any(gl < 0) or np.any(gu < 0):
        raise ValueError("x_star violates its bounds")
    near_l = gl < tol_active
    near_u = gu < tol_active
    a_l = near_l & ~(near_u & (gu < gl))
    a_u = near_u & ~a_l
    part = IndexPartition.from_active(problem, a_l, a_u)
    degenerate = (a_l & (np.asarray(lambda_l_star) < tol_degenerate)) | (
        a_u & (np.asarray(lambda_u_star) < tol_degenerate)
    )
    return part, degenerate


def estimate_active(
    problem: BoundedProblem, it: Iterate, mu: float, thresholds: EstimationThresholds
) -> IndexPartition:
    """Flag a bound active when its gap is below both its multiplier and tau_A.

    Undecided multipliers go to the inactive sets, so the result is always
    complete; use ``estimate_inactive_multipliers`` for the stricter test.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    gl, gu = gaps(problem, it.x)
    tau = thresholds.tau_a(mu)
    hit_l = problem.has_lower & (gl < np.minimum(it.lambda_l, tau))
    hit_u = problem.has_upper & (gu < np.minimum(it.lambda_u, tau))
    both = hit_l & hit_u
    # nearer bound wins, ties to lower
    a_l = hit_l & ~(both & (gu < gl))
    a_u = hit_u & ~a_l
    return IndexPartition.from_active(problem, a_l, a_u)


def estimate_inactive_multipliers(
    problem: BoundedProblem, it: Iterate, mu: float, thresholds: EstimationThresholds
) -> tuple[np.ndarray, np.ndarray]:
    """Masks of multipliers below both their gap and tau_I."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    gl, gu = gaps(problem, it.x)
    tau = thresholds.tau_i(mu)
    i_l = problem.has_lower & (it.lambda_l < np.minimum(gl, tau))
    i_u = problem.has_upper & (it.lambda_u < np.minimum(gu, tau))
    return i_l, i_u


def estimate_partition(
    problem: BoundedProblem, it: Iterate, mu: float, thresholds: EstimationThresholds
) -> IndexPartition:
    """Active sets from ``estimate_active``; inactive multiplier sets from the tau_I rule.

    Multipliers whose bound is active are never marked inactive.
    """
    act = estimate_active(problem, it, mu, thresholds)
    i_l, i_u = estimate_inactive_multipliers(problem, it, mu, thresholds)
    return IndexPartition(act.a_l, act.a_u, i_l & ~act.a_l, i_u & ~act.a_u)
