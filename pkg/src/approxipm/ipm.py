"""Primal-dual interior-point drivers.

All four drivers share one loop: compute a direction for the current mu,
take a fraction-to-boundary step, and shrink mu by sigma once
``||F_mu|| < mu`` at the new point. They differ only in how the direction
(and, for the intermediate-step variants, an extra cheap step) is formed.
"""

from __future__ import annotations

import enum
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .active_sets import EstimationThresholds, IndexPartition, estimate_active, estimate_partition
from .approx import ApproxVariant, DxSource, full_approximate_direction, partial_step_direction
from .exceptions import ApproxIPMError, InitFailure
from .newton import Direction, apply_step, modified_newton_direction, newton_direction
from .problem import BoundedProblem, clip_interior
from .residual import Iterate, make_iterate, residual_norm

INIT_MAX_STEPS = 100


def mu_at(mu0: float, sigma: float, k: int) -> float:
    """mu0 * sigma**k rounded to 15 significant digits, so decades print cleanly."""
    return float(f"{mu0 * sigma**k:.15g}")


class Algorithm(str, enum.Enum):
    NEWTON = "newton"
    APPROX_S = "aNS"
    APPROX_C = "aNC"
    INTERMEDIATE = "intermediate"
    HIGHER = "higher"


class Outcome(str, enum.Enum):
    CONVERGED = "converged"
    MU_FLOOR = "mu_floor"
    ITERATION_CAP = "iteration_cap"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class PartialStepRule:
    """Which components the intermediate step moves, and the estimation thresholds."""

    dx_source: DxSource
    include_dlambda: bool
    thresholds: EstimationThresholds


# Rows of the intermediate-step comparison: (dx^S on A), (dx^S on A, dlambda^C on I),
# (dx^C on A, dlambda^C on I).
PARTIAL_STEP_ROWS = {
    1: PartialStepRule(DxSource.S, False, EstimationThresholds(1 / 2, 3 / 4)),
    2: PartialStepRule(DxSource.S, True, EstimationThresholds(1 / 2, 3 / 4)),
    3: PartialStepRule(DxSource.C, True, EstimationThresholds(3 / 4, 3 / 4)),
}

APPROX_THRESHOLDS = {
    DxSource.S: EstimationThresholds(2 / 3, 3 / 4),
    DxSource.C: EstimationThresholds(3 / 4, 3 / 4),
}


@dataclass(frozen=True)
class SolverConfig:
    mu0: float = 100.0
    sigma: float = 0.1
    epsilon: float = 1e-10
    boundary_fraction: float = 0.98
    max_iters_per_mu: int = 50
    mu_min: float = 1e-12
    # None means the algorithm's own default
    thresholds: EstimationThresholds | None = None
    variant: ApproxVariant = field(default_factory=ApproxVariant)
    partial_row: int = 2
    newton_fallback: bool | None = None
    max_total_iters: int = 1000

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError("boundary_fraction must lie in (0, 1)")
        if not self.mu0 > 0.0 or not self.mu_min > 0.0:
            raise ValueError("mu0 and mu_min must be positive")
        if self.max_iters_per_mu < 1 or self.max_total_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.partial_row not in PARTIAL_STEP_ROWS:
            raise ValueError(f"partial_row must be one of {sorted(PARTIAL_STEP_ROWS)}")

    def as_dict(self) -> dict:
        th = self.thresholds
        return {
            "mu0": self.mu0,
            "sigma": self.sigma,
            "epsilon": self.epsilon,
            "boundary_fraction": self.boundary_fraction,
            "max_iters_per_mu": self.max_iters_per_mu,
            "mu_min": self.mu_min,
            "tau_a_exponent": None if th is None else th.tau_a_exponent,
            "tau_i_exponent": None if th is None else th.tau_i_exponent,
            "variant": self.variant.label(),
            "partial_row": self.partial_row,
            "newton_fallback": self.newton_fallback,
            "max_total_iters": self.max_total_iters,
        }


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mu: float
    mu_index: int  # mu = mu0 * sigma**mu_index
    res_mu: float  # ||F_mu|| at the new iterate
    res_0: float
    alpha_p: float
    alpha_d: float
    alpha_e_p: float  # intermediate step lengths, NaN when unused
    alpha_e_d: float
    n_inactive: int | None  # |I_x| estimate, None for pure Newton
    provenance: str
    wall_time: float
    fallback: bool


@dataclass
class RunTrace:
    algorithm: Algorithm
    config: SolverConfig
    records: list[IterationRecord] = field(default_factory=list)
    outcome: Outcome | None = None
    fallback_count: int = 0
    init_steps: int = 0
    iterate: Iterate | None = None
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED

    def final_kkt(self) -> float:
        return self.records[-1].res_0 if self.records else float("nan")

    def iterations_per_mu(self) -> dict[int, int]:
        """Iteration counts keyed by mu index."""
        return dict(Counter(r.mu_index for r in self.records))

    def mean_inactive_per_mu(self) -> dict[int, float]:
        out: dict[int, list[int]] = {}
        for r in self.records:
            if r.n_inactive is not None and not r.fallback:
                out.setdefault(r.mu_index, []).append(r.n_inactive)
        return {k: float(np.mean(v)) for k, v in out.items()}

    def capped_mu(self) -> set[int]:
        """mu indices at which the fallback engaged or the run hit the cap."""
        s = {r.mu_index for r in self.records if r.fallback}
        if self.outcome is Outcome.ITERATION_CAP and self.records:
            s.add(self.records[-1].mu_index)
        return s


def _provenance(d: Direction) -> str:
    parts = []
    for name, arr in (("dx", d.dx_tag), ("dll", d.dlambda_l_tag), ("dlu", d.dlambda_u_tag)):
        counts = Counter(arr.tolist())
        parts.append(name + ":" + ",".join(f"{k}={counts[k]}" for k in sorted(counts)))
    return ";".join(parts)


def initial_point(
    problem: BoundedProblem, mu0: float, start: Iterate | None = None, fraction: float = 0.98
) -> tuple[Iterate, int]:
    """A strictly interior point with ||F_mu0|| < mu0, and the Newton steps it took.

    Without ``start``: x = 0 clipped into the box, multipliers mu0/gap.
    """
    if start is None:
        x = clip_interior(np.zeros(problem.n), problem.lower, problem.upper)
        gl = x - problem.lower
        gu = problem.upper - x
        with np.errstate(divide="ignore"):
            it = make_iterate(problem, x, mu0 / gl, mu0 / gu)
    else:
        it = make_iterate(problem, start.x, start.lambda_l, start.lambda_u)
    for steps in range(INIT_MAX_STEPS + 1):
        if residual_norm(problem, it, mu0) < mu0:
            return it, steps
        if steps == INIT_MAX_STEPS:
            break
        try:
            it, _ = apply_step(problem, it, newton_direction(problem, it, mu0), fraction)
        except ApproxIPMError as exc:
            raise InitFailure(f"initialization broke down: {exc}") from exc
    raise InitFailure(f"||F_mu0|| >= mu0 after {INIT_MAX_STEPS} Newton steps")


class _Driver:
    """Shared continuation loop. Subclasses supply ``step``."""

    algorithm: Algorithm
    default_fallback = True

    def __init__(self, problem: BoundedProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        fb = config.newton_fallback
        self.fallback_enabled = self.default_fallback if fb is None else fb

    def step(self, it: Iterate, mu: float):
        """Return (new iterate, alpha_p, alpha_d, alpha_e_p, alpha_e_d, |I_x|, provenance)."""
        raise NotImplementedError

    def newton_step(self, it: Iterate, mu: float):
        d = newton_direction(self.problem, it, mu)
        new, sl = apply_step(self.problem, it, d, self.config.boundary_fraction)
        return new, sl.alpha_p, sl.alpha_d, np.nan, np.nan, None, _provenance(d)

    def run(self, start: Iterate | None = None) -> RunTrace:
        cfg, p = self.config, self.problem
        trace = RunTrace(self.algorithm, cfg)
        try:
            it, trace.init_steps = initial_point(p, cfg.mu0, start, cfg.boundary_fraction)
        except InitFailure as exc:
            trace.outcome, trace.message = Outcome.NUMERICAL_FAILURE, str(exc)
            return trace
        k = 1
        mu = mu_at(cfg.mu0, cfg.sigma, 1)
        at_mu = 0
        in_fallback = False
        while residual_norm(p, it, 0.0) > cfg.epsilon:
            if trace.iterations >= cfg.max_total_iters:
                trace.outcome = Outcome.ITERATION_CAP
                trace.message = "total iteration limit reached"
                break
            if at_mu >= cfg.max_iters_per_mu:
                if self.fallback_enabled and not in_fallback:
                    in_fallback = True
                    trace.fallback_count += 1
                    at_mu = 0
                else:
                    trace.outcome = Outcome.ITERATION_CAP
                    trace.message = f"no progress at mu={mu:g} after {cfg.max_iters_per_mu} iterations"
                    break
            t0 = time.perf_counter()
            try:
                if in_fallback:
                    out = self.newton_step(it, mu)
                else:
                    out = self.step(it, mu)
            except ApproxIPMError as exc:
                trace.outcome = Outcome.NUMERICAL_FAILURE
                trace.message = f"{type(exc).__name__}: {exc}"
                break
            it, ap, ad, aep, aed, n_in, prov = out
            res_mu = residual_norm(p, it, mu)
            res_0 = residual_norm(p, it, 0.0)
            trace.records.append(
                IterationRecord(
                    trace.iterations, mu, k, res_mu, res_0, ap, ad, aep, aed, n_in, prov,
                    time.perf_counter() - t0, in_fallback,
                )
            )
            at_mu += 1
            if res_mu < mu:
                if res_0 <= cfg.epsilon:
                    break
                next_mu = mu_at(cfg.mu0, cfg.sigma, k + 1)
                if next_mu < cfg.mu_min:
                    trace.outcome = Outcome.MU_FLOOR
                    trace.message = f"mu would drop below {cfg.mu_min:g}"
                    break
                k += 1
                mu = next_mu
                at_mu = 0
                in_fallback = False
        if trace.outcome is None:
            trace.outcome = Outcome.CONVERGED
        trace.iterate = it
        return trace


class _Reference(_Driver):
    algorithm = Algorithm.NEWTON
    default_fallback = False

    def step(self, it, mu):
        return self.newton_step(it, mu)


class _Approximate(_Driver):
    def __init__(self, problem, config, dx_source: DxSource):
        super().__init__(problem, config)
        self.dx_source = DxSource(dx_source)
        self.algorithm = Algorithm.APPROX_S if self.dx_source is DxSource.S else Algorithm.APPROX_C
        self.thresholds = config.thresholds or APPROX_THRESHOLDS[self.dx_source]
        self.variant = replace(config.variant, dx_a_source=self.dx_source)

    def step(self, it, mu):
        part = estimate_active(self.problem, it, mu, self.thresholds)
        d = full_approximate_direction(self.problem, it, mu, part, self.variant)
        new, sl = apply_step(self.problem, it, d, self.config.boundary_fraction)
        return new, sl.alpha_p, sl.alpha_d, np.nan, np.nan, int(part.i_x.sum()), _provenance(d)


class _TwoStage(_Driver):
    """Intermediate cheap step to z^E, then a Newton-type solve."""

    def __init__(self, problem, config):
        super().__init__(problem, config)
        self.rule = PARTIAL_STEP_ROWS[config.partial_row]
        self.thresholds = config.thresholds or self.rule.thresholds

    def intermediate(self, it, mu):
        part: IndexPartition = estimate_partition(self.problem, it, mu, self.thresholds)
        d = partial_step_direction(self.problem, it, mu, part, self.rule.dx_source, self.rule.include_dlambda)
        z_e, sl = apply_step(self.problem, it, d, self.config.boundary_fraction)
        return part, z_e, sl


class _Intermediate(_TwoStage):
    algorithm = Algorithm.INTERMEDIATE

    def step(self, it, mu):
        part, z_e, sl_e = self.intermediate(it, mu)
        d = newton_direction(self.problem, z_e, mu)
        new, sl = apply_step(self.problem, z_e, d, self.config.boundary_fraction)
        return new, sl.alpha_p, sl.alpha_d, sl_e.alpha_p, sl_e.alpha_d, int(part.i_x.sum()), _provenance(d)


class _HigherOrder(_TwoStage):
    algorithm = Algorithm.HIGHER

    def step(self, it, mu):
        part, z_e, sl_e = self.intermediate(it, mu)
        d = modified_newton_direction(self.problem, it, mu, z_e)
        new, sl = apply_step(self.problem, it, d, self.config.boundary_fraction)
        return new, sl.alpha_p, sl.alpha_d, sl_e.alpha_p, sl_e.alpha_d, int(part.i_x.sum()), _provenance(d)


def solve_reference(problem: BoundedProblem, config: SolverConfig = SolverConfig(), start=None) -> RunTrace:
    return _Reference(problem, config).run(start)


def solve_approx(
    problem: BoundedProblem, config: SolverConfig = SolverConfig(), dx_source: str = "S", start=None
) -> RunTrace:
    return _Approximate(problem, config, dx_source).run(start)


def solve_intermediate(problem: BoundedProblem, config: SolverConfig = SolverConfig(), start=None) -> RunTrace:
    return _Intermediate(problem, config).run(start)


def solve_higher_order(problem: BoundedProblem, config: SolverConfig = SolverConfig(), start=None) -> RunTrace:
    return _HigherOrder(problem, config).run(start)


def solve(problem: BoundedProblem, algorithm: str, config: SolverConfig = SolverConfig(), start=None) -> RunTrace:
    alg = Algorithm(algorithm)
    if alg is Algorithm.NEWTON:
        return solve_reference(problem, config, start)
    if alg is Algorithm.APPROX_S:
        return solve_approx(problem, config, "S", start)
    if alg is Algorithm.APPROX_C:
        return solve_approx(problem, config, "C", start)
    if alg is Algorithm.INTERMEDIATE:
        return solve_intermediate(problem, config, start)
    return solve_higher_order(problem, config, start)
