"""Approximate Newton directions built from active-set information.

Every function takes and returns full-length vectors. Values outside the
index set an operation is defined on are zero.

Notation used below: ``gl = x - l`` and ``gu = u - x`` (``inf`` at infinite
bounds so every ratio with them vanishes), ``q = mu (1/gl - 1/gu)``, and
``d = lambda_l/gl + lambda_u/gu``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._linalg import add_diagonal, diagonal, spd_solve, submatrix
from .active_sets import IndexPartition
from .exceptions import IndefiniteReduced, ZeroDenominator
from .newton import Direction, tags
from .problem import BoundedProblem
from .residual import Iterate, check_interior

_ZERO_DENOM_RTOL = 1e-14


class DxSource(str, enum.Enum):
    S = "S"
    C = "C"


class ActiveMultiplierSource(str, enum.Enum):
    LS = "ls"
    B = "b"


class InactiveMultiplierSource(str, enum.Enum):
    LS = "ls"
    C = "C"


@dataclass(frozen=True)
class ApproxVariant:
    dx_a_source: DxSource = DxSource.S
    dlambda_a_source: ActiveMultiplierSource = ActiveMultiplierSource.LS
    dlambda_i_source: InactiveMultiplierSource = InactiveMultiplierSource.LS

    def __post_init__(self):
        object.__setattr__(self, "dx_a_source", DxSource(self.dx_a_source))
        object.__setattr__(self, "dlambda_a_source", ActiveMultiplierSource(self.dlambda_a_source))
        object.__setattr__(self, "dlambda_i_source", InactiveMultiplierSource(self.dlambda_i_source))

    def label(self) -> str:
        return f"({self.dx_a_source.value},{self.dlambda_a_source.value},{self.dlambda_i_source.value})"


def _mask(n: int, indices) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.dtype == bool:
        if idx.shape != (n,):
            raise ValueError("boolean index mask has the wrong length")
        return idx
    m = np.zeros(n, dtype=bool)
    m[idx.astype(int)] = True
    return m


def _complete(problem: BoundedProblem, partition: IndexPartition) -> IndexPartition:
    return IndexPartition.from_active(problem, partition.a_l, partition.a_u)


def schur_denominators(problem: BoundedProblem, it: Iterate) -> np.ndarray:
    gl, gu = check_interior(problem, it)
    return diagonal(problem.hessian(it.x)) + it.lambda_l / gl + it.lambda_u / gu


def dx_schur_partial(problem: BoundedProblem, it: Iterate, mu_plus: float, indices) -> np.ndarray:
    """Diagonal-only solve of the condensed rows at ``indices``."""
    gl, gu = check_interior(problem, it)
    _, g, H = problem.evaluate(it.x)
    hii = diagonal(H)
    denom = hii + it.lambda_l / gl + it.lambda_u / gu
    m = _mask(problem.n, indices)
    tiny = m & (np.abs(denom) < _ZERO_DENOM_RTOL * (1.0 + np.abs(hii)))
    if tiny.any():
        raise ZeroDenominator(int(np.flatnonzero(tiny)[0]))
    out = np.zeros(problem.n)
    q = mu_plus * (1.0 / gl - 1.0 / gu)
    out[m] = -(g[m] - q[m]) / denom[m]
    return out


def dx_comp_partial(problem: BoundedProblem, it: Iterate, mu_plus: float, partition: IndexPartition) -> np.ndarray:
    """Solve each active complementarity row for dx with the multiplier step dropped."""
    gl, gu = check_interior(problem, it)
    out = np.zeros(problem.n)
    al, au = partition.a_l, partition.a_u
    out[al] = -gl[al] + mu_plus / it.lambda_l[al]
    out[au] = gu[au] - mu_plus / it.lambda_u[au]
    return out


def dlambda_comp_partial(
    problem: BoundedProblem, it: Iterate, mu_plus: float, partition: IndexPartition
) -> tuple[np.ndarray, np.ndarray]:
    """Solve each inactive complementarity row for the multiplier step with dx dropped."""
    gl, gu = check_interior(problem, it)
    dl = np.zeros(problem.n)
    du = np.zeros(problem.n)
    il, iu = partition.i_l & problem.has_lower, partition.i_u & problem.has_upper
    dl[il] = -it.lambda_l[il] + mu_plus / gl[il]
    du[iu] = -it.lambda_u[iu] + mu_plus / gu[iu]
    return dl, du


def reduced_matrix(problem: BoundedProblem, it: Iterate, partition: IndexPartition):
    gl, gu = check_interior(problem, it)
    I = np.flatnonzero(partition.i_x)
    H = problem.hessian(it.x)
    d = it.lambda_l / gl + it.lambda_u / gu
    return add_diagonal(submatrix(H, I, I), d[I])


def reduced_schur_solve(
    problem: BoundedProblem, it: Iterate, mu_plus: float, partition: IndexPartition, dx_active: np.ndarray
) -> np.ndarray:
    """Condensed system restricted to i_x with the a_x part of dx moved to the right."""
    gl, gu = check_interior(problem, it)
    _, g, H = problem.evaluate(it.x)
    I = np.flatnonzero(partition.i_x)
    A = np.flatnonzero(partition.a_x)
    q = mu_plus * (1.0 / gl - 1.0 / gu)
    rhs = -g[I] + q[I]
    if A.size:
        rhs = rhs - submatrix(H, I, A) @ dx_active[A]
    d = it.lambda_l / gl + it.lambda_u / gu
    M = add_diagonal(submatrix(H, I, I), d[I])
    out = np.zeros(problem.n)
    out[I] = spd_solve(M, rhs, error=IndefiniteReduced)
    return out


def _compose(partition: IndexPartition, dx_active: np.ndarray, dx_inactive: np.ndarray) -> np.ndarray:
    return np.where(partition.a_x, dx_active, dx_inactive)


def recover_inactive_multipliers(
    problem: BoundedProblem,
    it: Iterate,
    mu_plus: float,
    partition: IndexPartition,
    dx_active: np.ndarray,
    dx_inactive: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Back-substitute dx into the complementarity rows of i_l and i_u."""
    gl, gu = check_interior(problem, it)
    dx = _compose(partition, dx_active, dx_inactive)
    il, iu = partition.i_l & problem.has_lower, partition.i_u & problem.has_upper
    dl = np.zeros(problem.n)
    du = np.zeros(problem.n)
    dl[il] = -it.lambda_l[il] + (mu_plus - it.lambda_l[il] * dx[il]) / gl[il]
    du[iu] = -it.lambda_u[iu] + (mu_plus + it.lambda_u[iu] * dx[iu]) / gu[iu]
    return dl, du


def recover_active_multipliers(
    problem: BoundedProblem,
    it: Iterate,
    mu_plus: float,
    partition: IndexPartition,
    dx_active: np.ndarray,
    dx_inactive: np.ndarray,
    dlambda_inactive: tuple[np.ndarray, np.ndarray],
    mode: str = "ls",
) -> tuple[np.ndarray, np.ndarray]:
    """Multiplier steps on a_l and a_u.

    Each active index has two rows touching its multiplier step: its
    stationarity row and its complementarity row. Mode ``b`` satisfies the
    stationarity row exactly; mode ``ls`` takes the least-squares fit to both.
    The other bound's multiplier step at the same index is read from
    ``dlambda_inactive``.
    """
    mode = ActiveMultiplierSource(mode)
    gl, gu = check_interior(problem, it)
    _, g, H = problem.evaluate(it.x)
    dx = _compose(partition, dx_active, dx_inactive)
    dl_in, du_in = dlambda_inactive
    s = g - it.lambda_l + it.lambda_u + H @ dx
    al, au = partition.a_l, partition.a_u
    dl = np.zeros(problem.n)
    du = np.zeros(problem.n)

    s_l = s[al] + du_in[al]
    s_u = s[au] - dl_in[au]
    if mode is ActiveMultiplierSource.B:
        dl[al] = s_l
        du[au] = -s_u
    else:
        g_l, g_u = gl[al], gu[au]
        c_l = it.lambda_l[al] * g_l - mu_plus + it.lambda_l[al] * dx[al]
        c_u = it.lambda_u[au] * g_u - mu_plus - it.lambda_u[au] * dx[au]
        dl[al] = (s_l - g_l * c_l) / (1.0 + g_l**2)
        du[au] = (-s_u - g_u * c_u) / (1.0 + g_u**2)
    return dl, du


def partial_step_direction(
    problem: BoundedProblem,
    it: Iterate,
    mu_plus: float,
    partition: IndexPartition,
    dx_source: str = "S",
    include_dlambda: bool = True,
    comp_mask: np.ndarray | None = None,
) -> Direction:
    """Cheap intermediate direction: dx only on a_x, multiplier steps only on i_l, i_u.

    ``comp_mask`` switches individual active indices to the complementarity
    formula regardless of ``dx_source``.
    """
    n = problem.n
    dx_source = DxSource(dx_source)
    dx, dx_tag = _active_dx(problem, it, mu_plus, partition, dx_source, comp_mask)
    tl, tu = tags(n, "zero"), tags(n, "zero")
    if include_dlambda:
        dl, du = dlambda_comp_partial(problem, it, mu_plus, partition)
        tl[partition.i_l & problem.has_lower] = "C"
        tu[partition.i_u & problem.has_upper] = "C"
    else:
        dl, du = np.zeros(n), np.zeros(n)
    return Direction(dx, dl, du, dx_tag, tl, tu)


def _active_dx(problem, it, mu_plus, partition, dx_source, comp_mask):
    n = problem.n
    use_c = partition.a_x & (dx_source is DxSource.C)
    if comp_mask is not None:
        use_c = use_c | (partition.a_x & np.asarray(comp_mask, dtype=bool))
    use_s = partition.a_x & ~use_c
    dx = np.zeros(n)
    dx_tag = tags(n, "zero")
    if use_s.any():
        dx[use_s] = dx_schur_partial(problem, it, mu_plus, use_s)[use_s]
        dx_tag[use_s] = "S"
    if use_c.any():
        dx[use_c] = dx_comp_partial(problem, it, mu_plus, partition)[use_c]
        dx_tag[use_c] = "C"
    return dx, dx_tag


def full_approximate_direction(
    problem: BoundedProblem,
    it: Iterate,
    mu_plus: float,
    partition: IndexPartition,
    variant: ApproxVariant = ApproxVariant(),
    comp_mask: np.ndarray | None = None,
) -> Direction:
    """Complete direction: partial dx on a_x, reduced solve on i_x, recovered multipliers.

    Only ``a_l`` and ``a_u`` of ``partition`` are used; every other finite
    bound is treated as inactive.
    """
    n = problem.n
    part = _complete(problem, partition)
    dx_a, dx_tag = _active_dx(problem, it, mu_plus, part, variant.dx_a_source, comp_mask)
    dx_i = reduced_schur_solve(problem, it, mu_plus, part, dx_a)
    dx_tag[part.i_x] = "ls"

    tl, tu = tags(n, "zero"), tags(n, "zero")
    if variant.dlambda_i_source is InactiveMultiplierSource.LS:
        dl_i, du_i = recover_inactive_multipliers(problem, it, mu_plus, part, dx_a, dx_i)
    else:
        dl_i, du_i = dlambda_comp_partial(problem, it, mu_plus, part)
    tl[part.i_l] = variant.dlambda_i_source.value
    tu[part.i_u] = variant.dlambda_i_source.value

    dl_a, du_a = recover_active_multipliers(
        problem, it, mu_plus, part, dx_a, dx_i, (dl_i, du_i), variant.dlambda_a_source
    )
    tl[part.a_l] = variant.dlambda_a_source.value
    tu[part.a_u] = variant.dlambda_a_source.value

    dx = _compose(part, dx_a, dx_i)
    dl = np.where(part.a_l, dl_a, dl_i)
    du = np.where(part.a_u, du_a, du_i)
    return Direction(dx, dl, du, dx_tag, tl, tu)


# Predicted errors. Each returns the exact difference (approximation minus
# Newton) expressed through Newton components, valid for any interior iterate.


def predicted_schur_error(problem: BoundedProblem, it: Iterate, newton: Direction) -> np.ndarray:
    """dx^S - dx^N = (off-diagonal row sum of H dx^N) / denominator, at every index."""
    H = problem.hessian(it.x)
    hii = diagonal(H)
    off = H @ newton.dx - hii * newton.dx
    return off / schur_denominators(problem, it)


def predicted_comp_dx_error(
    problem: BoundedProblem, it: Iterate, partition: IndexPartition, newton: Direction
) -> np.ndarray:
    gl, gu = check_interior(problem, it)
    out = np.zeros(problem.n)
    al, au = partition.a_l, partition.a_u
    out[al] = gl[al] / it.lambda_l[al] * newton.dlambda_l[al]
    out[au] = -gu[au] / it.lambda_u[au] * newton.dlambda_u[au]
    return out


def predicted_comp_dlambda_error(
    problem: BoundedProblem, it: Iterate, partition: IndexPartition, newton: Direction
) -> tuple[np.ndarray, np.ndarray]:
    gl, gu = check_interior(problem, it)
    il, iu = partition.i_l & problem.has_lower, partition.i_u & problem.has_upper
    dl = np.zeros(problem.n)
    du = np.zeros(problem.n)
    dl[il] = it.lambda_l[il] / gl[il] * newton.dx[il]
    du[iu] = -it.lambda_u[iu] / gu[iu] * newton.dx[iu]
    return dl, du


def predicted_reduced_error(
    problem: BoundedProblem,
    it: Iterate,
    partition: IndexPartition,
    dx_active: np.ndarray,
    newton: Direction,
) -> np.ndarray:
    """dx^ls - dx^N on i_x caused by an inexact a_x part."""
    I = np.flatnonzero(partition.i_x)
    A = np.flatnonzero(partition.a_x)
    out = np.zeros(problem.n)
    if I.size == 0 or A.size == 0:
        return out
    H = problem.hessian(it.x)
    rhs = -(submatrix(H, I, A) @ (dx_active[A] - newton.dx[A]))
    out[I] = spd_solve(reduced_matrix(problem, it, partition), rhs, error=IndefiniteReduced)
    return out


def predicted_inactive_multiplier_error(
    problem: BoundedProblem, it: Iterate, partition: IndexPartition, dx: np.ndarray, newton: Direction
) -> tuple[np.ndarray, np.ndarray]:
    """Error of back-substituted multipliers given a composed dx."""
    gl, gu = check_interior(problem, it)
    il, iu = partition.i_l & problem.has_lower, partition.i_u & problem.has_upper
    e = dx - newton.dx
    dl = np.zeros(problem.n)
    du = np.zeros(problem.n)
    dl[il] = -it.lambda_l[il] / gl[il] * e[il]
    du[iu] = it.lambda_u[iu] / gu[iu] * e[iu]
    return dl, du
