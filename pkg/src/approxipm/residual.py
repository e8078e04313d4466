"""Barrier residual F_mu, its Jacobian, and component-order diagnostics.

Row layout of every residual vector and Jacobian: the n stationarity rows,
then one complementarity row per finite lower bound (increasing index),
then one per finite upper bound. Rows for infinite bounds do not exist and
the matching multipliers are held at exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import NonInterior
from .problem import BoundedProblem


@dataclass(frozen=True)
class Iterate:
    x: np.ndarray
    lambda_l: np.ndarray
    lambda_u: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lambda_l, self.lambda_u])

    def distance(self, other: "Iterate") -> float:
        return float(np.linalg.norm(self.stacked() - other.stacked()))


def make_iterate(problem: BoundedProblem, x, lambda_l=None, lambda_u=None) -> Iterate:
    """Build an Iterate, zeroing multipliers of infinite bounds."""
    x = np.array(x, dtype=float)
    ll = np.zeros(problem.n) if lambda_l is None else np.array(lambda_l, dtype=float)
    lu = np.zeros(problem.n) if lambda_u is None else np.array(lambda_u, dtype=float)
    ll[~problem.has_lower] = 0.0
    lu[~problem.has_upper] = 0.0
    return Iterate(x, ll, lu)


def gaps(problem: BoundedProblem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distances x - l and u - x; +inf where the bound is infinite."""
    with np.errstate(invalid="ignore"):
        gl = np.where(problem.has_lower, x - problem.lower, np.inf)
        gu = np.where(problem.has_upper, problem.upper - x, np.inf)
    return gl, gu


def check_interior(problem: BoundedProblem, it: Iterate, multipliers: bool = True) -> tuple[np.ndarray, np.ndarray]:
    gl, gu = gaps(problem, it.x)
    bad = ~(gl > 0) | ~(gu > 0)
    if bad.any():
        raise NonInterior(int(np.flatnonzero(bad)[0]))
    if multipliers:
        bad = (problem.has_lower & ~(it.lambda_l > 0)) | (problem.has_upper & ~(it.lambda_u > 0))
        if bad.any():
            raise NonInterior(int(np.flatnonzero(bad)[0]), "multiplier")
    return gl, gu


@dataclass(frozen=True)
class Residual:
    stationarity: np.ndarray
    comp_lower: np.ndarray
    comp_upper: np.ndarray
    norm: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.stationarity, self.comp_lower, self.comp_upper])


def residual(problem: BoundedProblem, it: Iterate, mu: float, gradient: np.ndarray | None = None) -> Residual:
    """F_mu at ``it``. mu = 0 gives the first-order optimality residual."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    check_interior(problem, it, multipliers=False)
    g = problem.gradient(it.x) if gradient is None else gradient
    stat = g - it.lambda_l + it.lambda_u
    lo, up = problem.has_lower, problem.has_upper
    cl = it.lambda_l[lo] * (it.x[lo] - problem.lower[lo]) - mu
    cu = it.lambda_u[up] * (problem.upper[up] - it.x[up]) - mu
    norm = float(np.sqrt(stat @ stat + cl @ cl + cu @ cu))
    return Residual(stat, cl, cu, norm)


def residual_norm(problem: BoundedProblem, it: Iterate, mu: float) -> float:
    return residual(problem, it, mu).norm


@dataclass(frozen=True)
class Jacobian:
    """Block form of F'(x, lambda); see ``dense`` for the assembled matrix."""

    hessian: object
    lower_index: np.ndarray
    upper_index: np.ndarray
    lambda_l: np.ndarray  # on lower_index
    gap_l: np.ndarray
    lambda_u: np.ndarray  # on upper_index
    gap_u: np.ndarray

    @property
    def size(self) -> int:
        return self.hessian.shape[0] + self.lower_index.size + self.upper_index.size

    def dense(self) -> np.ndarray:
        H = self.hessian.toarray() if sp.issparse(self.hessian) else np.asarray(self.hessian, dtype=float)
        n, nl, nu = H.shape[0], self.lower_index.size, self.upper_index.size
        J = np.zeros((n + nl + nu, n + nl + nu))
        J[:n, :n] = H
        kl = np.arange(nl)
        ku = np.arange(nu)
        J[self.lower_index, n + kl] = -1.0
        J[self.upper_index, n + nl + ku] = 1.0
        J[n + kl, self.lower_index] = self.lambda_l
        J[n + kl, n + kl] = self.gap_l
        J[n + nl + ku, self.upper_index] = -self.lambda_u
        J[n + nl + ku, n + nl + ku] = self.gap_u
        return J

    def matvec(self, dx: np.ndarray, dlambda_l: np.ndarray, dlambda_u: np.ndarray) -> np.ndarray:
        """F' applied to a direction given as full-length vectors."""
        il, iu = self.lower_index, self.upper_index
        top = self.hessian @ dx - dlambda_l + dlambda_u
        mid = self.lambda_l * dx[il] + self.gap_l * dlambda_l[il]
        bot = -self.lambda_u * dx[iu] + self.gap_u * dlambda_u[iu]
        return np.concatenate([top, mid, bot])


def jacobian(problem: BoundedProblem, it: Iterate) -> Jacobian:
    check_interior(problem, it, multipliers=False)
    il = np.flatnonzero(problem.has_lower)
    iu = np.flatnonzero(problem.has_upper)
    return Jacobian(
        hessian=problem.hessian(it.x),
        lower_index=il,
        upper_index=iu,
        lambda_l=it.lambda_l[il].copy(),
        gap_l=it.x[il] - problem.lower[il],
        lambda_u=it.lambda_u[iu].copy(),
        gap_u=problem.upper[iu] - it.x[iu],
    )


O_MU = "O(mu)"
THETA_1 = "Theta(1)"


def order_class(values: np.ndarray, mu: float) -> np.ndarray:
    """Label each value O(mu) if it is at most sqrt(mu), else Theta(1)."""
    return np.where(np.abs(values) <= np.sqrt(mu), O_MU, THETA_1)


@dataclass(frozen=True)
class ComponentReport:
    """Per-index gap and multiplier sizes relative to mu.

    ``*_ratio`` arrays hold value/mu (NaN where the bound is infinite).
    ``*_expected`` holds the class an index should have given its partition
    membership, or "" when the partition says nothing about it.
    """

    mu: float
    gap_l_ratio: np.ndarray
    lambda_l_ratio: np.ndarray
    gap_u_ratio: np.ndarray
    lambda_u_ratio: np.ndarray
    gap_l_class: np.ndarray
    lambda_l_class: np.ndarray
    gap_u_class: np.ndarray
    lambda_u_class: np.ndarray
    gap_l_expected: np.ndarray
    lambda_l_expected: np.ndarray
    gap_u_expected: np.ndarray
    lambda_u_expected: np.ndarray

    def violations(self) -> np.ndarray:
        """Boolean mask of indices where some observed class is unexpected."""
        bad = np.zeros(self.gap_l_ratio.size, dtype=bool)
        for obs, exp in (
            (self.gap_l_class, self.gap_l_expected),
            (self.lambda_l_class, self.lambda_l_expected),
            (self.gap_u_class, self.gap_u_expected),
            (self.lambda_u_class, self.lambda_u_expected),
        ):
            bad |= (exp != "") & (obs != exp)
        return bad


def component_orders(problem: BoundedProblem, it: Iterate, partition, mu: float) -> ComponentReport:
    if mu <= 0:
        raise ValueError("mu must be positive")
    gl, gu = gaps(problem, it.x)
    lo, up = problem.has_lower, problem.has_upper

    def side(gap, lam, has, active, inactive):
        gap_r = np.where(has, gap / mu, np.nan)
        lam_r = np.where(has, lam / mu, np.nan)
        gap_c = np.where(has, order_class(np.where(has, gap, 0.0), mu), "")
        lam_c = np.where(has, order_class(lam, mu), "")
        gap_e = np.where(has & active, O_MU, np.where(has & inactive, THETA_1, ""))
        lam_e = np.where(has & active, THETA_1, np.where(has & inactive, O_MU, ""))
        return gap_r, lam_r, gap_c, lam_c, gap_e, lam_e

    l_side = side(gl, it.lambda_l, lo, partition.a_l, partition.i_l)
    u_side = side(gu, it.lambda_u, up, partition.a_u, partition.i_u)
    return ComponentReport(
        mu,
        l_side[0], l_side[1], u_side[0], u_side[1],
        l_side[2], l_side[3], u_side[2], u_side[3],
        l_side[4], l_side[5], u_side[4], u_side[5],
    )
