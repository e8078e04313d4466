"""Exact Newton directions for F_mu and fraction-to-boundary steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import add_diagonal, spd_solve
from .exceptions import DegenerateStep
from .problem import BoundedProblem
from .residual import Iterate, check_interior

TAGS = ("newton", "S", "C", "ls", "b", "zero")


def tags(n: int, tag: str) -> np.ndarray:
    return np.full(n, tag, dtype="<U6")


@dataclass(frozen=True)
class Direction:
    """A search direction over (x, lambda_l, lambda_u), all full length n.

    ``*_tag`` records which formula produced each component.
    """

    dx: np.ndarray
    dlambda_l: np.ndarray
    dlambda_u: np.ndarray
    dx_tag: np.ndarray
    dlambda_l_tag: np.ndarray
    dlambda_u_tag: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.dx, self.dlambda_l, self.dlambda_u])

    def norm(self) -> float:
        return float(np.linalg.norm(self.stacked()))


@dataclass(frozen=True)
class StepLengths:
    alpha_p: float
    alpha_d: float


def _scrub(problem: BoundedProblem, dl: np.ndarray, du: np.ndarray, tl: np.ndarray, tu: np.ndarray):
    dl[~problem.has_lower] = 0.0
    du[~problem.has_upper] = 0.0
    tl[~problem.has_lower] = "zero"
    tu[~problem.has_upper] = "zero"


def newton_direction(problem: BoundedProblem, it: Iterate, mu_plus: float) -> Direction:
    """Solve F'(z) d = -F_{mu_plus}(z) through the condensed x-system."""
    gl, gu = check_interior(problem, it)
    _, g, H = problem.evaluate(it.x)
    lo, up = problem.has_lower, problem.has_upper
    d = it.lambda_l / gl + it.lambda_u / gu
    rhs = -g + mu_plus * (1.0 / gl - 1.0 / gu)
    dx = spd_solve(add_diagonal(H, d), rhs)
    dl = np.where(lo, -it.lambda_l + (mu_plus - it.lambda_l * dx) / gl, 0.0)
    du = np.where(up, -it.lambda_u + (mu_plus + it.lambda_u * dx) / gu, 0.0)
    n = problem.n
    tl, tu = tags(n, "newton"), tags(n, "newton")
    _scrub(problem, dl, du, tl, tu)
    return Direction(dx, dl, du, tags(n, "newton"), tl, tu)


def modified_newton_direction(problem: BoundedProblem, it: Iterate, mu_plus: float, coeff: Iterate) -> Direction:
    """Newton-like step at ``it`` whose matrix is frozen at ``coeff``.

    Solves F'(coeff) d = -F_{mu_plus}(it); used for the higher-order step
    where the Jacobian is taken at the intermediate point.
    """
    gl, gu = check_interior(problem, it)
    gel, geu = check_interior(problem, coeff)
    _, g, _ = problem.evaluate(it.x)
    H = problem.hessian(coeff.x)
    lo, up = problem.has_lower, problem.has_upper
    stat = g - it.lambda_l + it.lambda_u
    cl = np.where(lo, it.lambda_l * np.where(lo, gl, 0.0) - mu_plus, 0.0)
    cu = np.where(up, it.lambda_u * np.where(up, gu, 0.0) - mu_plus, 0.0)
    d = coeff.lambda_l / gel + coeff.lambda_u / geu
    rhs = -stat - cl / gel + cu / geu
    dx = spd_solve(add_diagonal(H, d), rhs)
    dl = np.where(lo, (-cl - coeff.lambda_l * dx) / gel, 0.0)
    du = np.where(up, (-cu + coeff.lambda_u * dx) / geu, 0.0)
    n = problem.n
    tl, tu = tags(n, "newton"), tags(n, "newton")
    _scrub(problem, dl, du, tl, tu)
    return Direction(dx, dl, du, tags(n, "newton"), tl, tu)


def _ratio(values: np.ndarray, rates: np.ndarray) -> float:
    """Largest alpha with values + alpha*rates >= 0 (values > 0)."""
    blocking = rates < 0
    if not blocking.any():
        return np.inf
    return float(np.min(values[blocking] / -rates[blocking]))


def max_feasible_steps(problem: BoundedProblem, it: Iterate, direction: Direction) -> StepLengths:
    """Raw maxima of the primal and dual step lengths (may be +inf)."""
    lo, up = problem.has_lower, problem.has_upper
    x, dx = it.x, direction.dx
    ap = min(
        _ratio(x[lo] - problem.lower[lo], dx[lo]),
        _ratio(problem.upper[up] - x[up], -dx[up]),
    )
    ad = min(
        _ratio(it.lambda_l[lo], direction.dlambda_l[lo]),
        _ratio(it.lambda_u[up], direction.dlambda_u[up]),
    )
    return StepLengths(ap, ad)


def apply_step(
    problem: BoundedProblem, it: Iterate, direction: Direction, fraction: float = 0.98
) -> tuple[Iterate, StepLengths]:
    raw = max_feasible_steps(problem, it, direction)
    ap = min(1.0, fraction * raw.alpha_p)
    ad = min(1.0, fraction * raw.alpha_d)
    new = Iterate(
        it.x + ap * direction.dx,
        it.lambda_l + ad * direction.dlambda_l,
        it.lambda_u + ad * direction.dlambda_u,
    )
    lo, up = problem.has_lower, problem.has_upper
    if (
        np.any(new.x[lo] - problem.lower[lo] <= 0)
        or np.any(problem.upper[up] - new.x[up] <= 0)
        or np.any(new.lambda_l[lo] <= 0)
        or np.any(new.lambda_u[up] <= 0)
    ):
        raise DegenerateStep(f"step (alpha_p={ap:g}, alpha_d={ad:g}) left the interior")
    if not np.all(np.isfinite(new.stacked())):
        raise DegenerateStep("step produced non-finite values")
    return new, StepLengths(ap, ad)
