"""Experiment harness: certified random QPs, error sweeps, iteration tables, CSV/SVG output."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la

from .active_sets import IndexPartition
from .approx import (
    ApproxVariant,
    dx_comp_partial,
    dx_schur_partial,
    dlambda_comp_partial,
    full_approximate_direction,
    partial_step_direction,
    recover_active_multipliers,
    recover_inactive_multipliers,
    reduced_schur_solve,
)
from .exceptions import GenerationFailure, InsufficientData, PathFollowingFailure
from .ipm import Algorithm, RunTrace, SolverConfig, initial_point, mu_at, solve
from .newton import apply_step, newton_direction
from .problem import QuadraticProblem
from .residual import Iterate, residual_norm

BOUND_STYLES = ("lower-only", "two-sided", "mixed")
KKT_TOL = 1e-12
MAX_ATTEMPTS = 10
# class probabilities for bound_style="mixed": free, lower-only, upper-only, two-sided
_MIXED_PROBS = (0.1, 0.3, 0.2, 0.4)


@dataclass(frozen=True)
class GeneratorSpec:
    n: int = 50
    frac_inactive: float = 0.75
    density: float = 0.4
    bound_style: str = "mixed"
    magnitude: float = 1.0
    diag_shift: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.frac_inactive <= 1.0:
            raise ValueError("frac_inactive must lie in [0, 1]")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.bound_style not in BOUND_STYLES:
            raise ValueError(f"bound_style must be one of {BOUND_STYLES}")
        if not self.magnitude > 0 or not self.diag_shift > 0:
            raise ValueError("magnitude and diag_shift must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class CertifiedProblem:
    problem: QuadraticProblem
    x_star: np.ndarray
    lambda_l_star: np.ndarray
    lambda_u_star: np.ndarray
    partition_star: IndexPartition
    spec: GeneratorSpec

    @property
    def lambda_star(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lambda_l_star, self.lambda_u_star


def kkt_residual(problem: QuadraticProblem, x, lambda_l, lambda_u) -> float:
    """||F_0|| allowing x on its bounds."""
    stat = problem.gradient(x) - lambda_l + lambda_u
    lo, up = problem.has_lower, problem.has_upper
    cl = lambda_l[lo] * (x[lo] - problem.lower[lo])
    cu = lambda_u[up] * (problem.upper[up] - x[up])
    return float(np.sqrt(stat @ stat + cl @ cl + cu @ cu))


def _random_hessian(rng: np.random.Generator, n: int, density: float, shift: float) -> np.ndarray:
    upper = np.triu(rng.uniform(-1.0, 1.0, (n, n)) * (rng.random((n, n)) < density), 1)
    S = upper + upper.T + np.diag(rng.uniform(-1.0, 1.0, n))
    lam_min = la.eigvalsh(S, subset_by_index=[0, 0])[0] if n > 1 else S[0, 0]
    return S + (max(0.0, -lam_min) + shift) * np.eye(n)


def _attempt(spec: GeneratorSpec, rng: np.random.Generator) -> CertifiedProblem:
    n, mag = spec.n, spec.magnitude
    H = _random_hessian(rng, n, spec.density, spec.diag_shift)
    la.cholesky(H)  # raises LinAlgError when the shift was not enough

    if spec.bound_style == "lower-only":
        kind = np.full(n, 1)
    elif spec.bound_style == "two-sided":
        kind = np.full(n, 3)
    else:
        kind = rng.choice(4, size=n, p=_MIXED_PROBS)  # 0 free, 1 lower, 2 upper, 3 two-sided
    base = rng.uniform(-1.0, 1.0, n)
    width = rng.uniform(2.0, 4.0, n)
    lower = np.where((kind == 1) | (kind == 3), base, -np.inf)
    upper = np.where(kind == 2, base, np.where(kind == 3, base + width, np.inf))

    # exactly round(frac * n) inactive variables, free ones always among them
    target = int(round(spec.frac_inactive * n))
    free = kind == 0
    inactive = free.copy()
    others = rng.permutation(np.flatnonzero(~free))
    need = max(0, target - int(free.sum()))
    inactive[others[:need]] = True

    at_upper = (kind == 2) | ((kind == 3) & (rng.random(n) < 0.5))
    a_u = ~inactive & at_upper
    a_l = ~inactive & ~at_upper

    x = rng.uniform(-1.0, 1.0, n)
    gap = mag * rng.uniform(0.5, 1.5, n)
    x = np.where(kind == 1, lower + gap, x)
    x = np.where(kind == 2, upper - gap, x)
    x = np.where(kind == 3, lower + width * rng.uniform(0.25, 0.75, n), x)
    x[a_l] = lower[a_l]
    x[a_u] = upper[a_u]

    mult = mag * rng.uniform(0.5, 1.5, n)
    lam_l = np.where(a_l, mult, 0.0)
    lam_u = np.where(a_u, mult, 0.0)
    c = -(H @ x) + lam_l - lam_u

    problem = QuadraticProblem.from_dense(H, c, lower, upper)
    part = IndexPartition.from_active(problem, a_l, a_u)
    cert = CertifiedProblem(problem, x, lam_l, lam_u, part, spec)
    certify(cert)
    return cert


def certify(cert: CertifiedProblem) -> None:
    """Raise GenerationFailure unless KKT and strict-complementarity margins hold."""
    p, mag = cert.problem, cert.spec.magnitude
    kkt = kkt_residual(p, cert.x_star, cert.lambda_l_star, cert.lambda_u_star)
    if not kkt <= KKT_TOL:
        raise GenerationFailure(f"KKT residual {kkt:.3e} exceeds {KKT_TOL:g}")
    part = cert.partition_star
    margin = 0.1 * mag
    act = np.concatenate([cert.lambda_l_star[part.a_l], cert.lambda_u_star[part.a_u]])
    gl = cert.x_star - p.lower
    gu = p.upper - cert.x_star
    inact = np.concatenate([gl[part.i_l], gu[part.i_u]])
    if act.size and act.min() < margin:
        raise GenerationFailure("active multiplier below the strict-complementarity margin")
    if inact.size and inact.min() < margin:
        raise GenerationFailure("inactive gap below the strict-complementarity margin")


def generate(spec: GeneratorSpec) -> CertifiedProblem:
    rng = np.random.default_rng(spec.seed)
    last = None
    for _ in range(MAX_ATTEMPTS):
        try:
            return _attempt(spec, rng)
        except (la.LinAlgError, GenerationFailure) as exc:
            last = exc
    raise GenerationFailure(f"no certified problem after {MAX_ATTEMPTS} attempts: {last}")


# error sweep

ERROR_FIELDS = (
    "err_dxA_S", "err_dxA_C", "err_dxI_ls", "err_dlA_ls", "err_dlA_b",
    "err_dlI_ls", "err_dlI_C", "err_total",
)
PROGRESS_FIELDS = ("F_z", "F_zS", "F_zC", "F_zN")
SWEEP_COLUMNS = ("mu",) + ERROR_FIELDS + PROGRESS_FIELDS
TABLE_COLUMNS = ("problem", "algorithm", "mu_decade", "iters", "mean_Ix", "fallback")


@dataclass(frozen=True)
class ErrorRecord:
    mu: float
    err_dxA_S: float
    err_dxA_C: float
    err_dxI_ls: float
    err_dlA_ls: float
    err_dlA_b: float
    err_dlI_ls: float
    err_dlI_C: float
    err_total: float
    F_z: float
    F_zS: float
    F_zC: float
    F_zN: float
    # unit-step distances to the Newton iterate; not exported
    dist_newton_to_e: float = math.nan
    dist_newton_to_z: float = math.nan

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def _norm(*parts) -> float:
    return float(np.linalg.norm(np.concatenate([np.ravel(p) for p in parts])))


def measure(cert: CertifiedProblem, it: Iterate, mu: float, mu_plus: float, fraction: float = 0.98) -> ErrorRecord:
    """All error families and progress measures at ``it`` for target ``mu_plus``."""
    p, part = cert.problem, cert.partition_star
    A, I = part.a_x, part.i_x
    il, iu, al, au = part.i_l, part.i_u, part.a_l, part.a_u
    N = newton_direction(p, it, mu_plus)

    dx_s = dx_schur_partial(p, it, mu_plus, A)
    dx_c = dx_comp_partial(p, it, mu_plus, part)
    dx_i = reduced_schur_solve(p, it, mu_plus, part, dx_s)
    dl_i, du_i = recover_inactive_multipliers(p, it, mu_plus, part, dx_s, dx_i)
    dl_ls, du_ls = recover_active_multipliers(p, it, mu_plus, part, dx_s, dx_i, (dl_i, du_i), "ls")
    dl_b, du_b = recover_active_multipliers(p, it, mu_plus, part, dx_s, dx_i, (dl_i, du_i), "b")
    dl_c, du_c = dlambda_comp_partial(p, it, mu_plus, part)

    d_s = full_approximate_direction(p, it, mu_plus, part, ApproxVariant("S", "ls", "ls"))
    d_c = full_approximate_direction(p, it, mu_plus, part, ApproxVariant("C", "ls", "ls"))

    z_n, _ = apply_step(p, it, N, fraction)
    z_s, _ = apply_step(p, it, d_s, fraction)
    z_c, _ = apply_step(p, it, d_c, fraction)

    d_e = partial_step_direction(p, it, mu_plus, part, "S", True)
    step_n = N.stacked()
    dist_e = float(np.linalg.norm(step_n - d_e.stacked()))
    dist_z = float(np.linalg.norm(step_n))

    return ErrorRecord(
        mu=mu,
        err_dxA_S=_norm((dx_s - N.dx)[A]),
        err_dxA_C=_norm((dx_c - N.dx)[A]),
        err_dxI_ls=_norm((dx_i - N.dx)[I]),
        err_dlA_ls=_norm((dl_ls - N.dlambda_l)[al], (du_ls - N.dlambda_u)[au]),
        err_dlA_b=_norm((dl_b - N.dlambda_l)[al], (du_b - N.dlambda_u)[au]),
        err_dlI_ls=_norm((dl_i - N.dlambda_l)[il], (du_i - N.dlambda_u)[iu]),
        err_dlI_C=_norm((dl_c - N.dlambda_l)[il], (du_c - N.dlambda_u)[iu]),
        err_total=_norm(d_s.stacked() - N.stacked()),
        F_z=residual_norm(p, it, mu_plus),
        F_zS=residual_norm(p, z_s, mu_plus),
        F_zC=residual_norm(p, z_c, mu_plus),
        F_zN=residual_norm(p, z_n, mu_plus),
        dist_newton_to_e=dist_e,
        dist_newton_to_z=dist_z,
    )


def mu_ladder(start: float, stop: float, sigma: float = 0.1) -> list[float]:
    """start, start*sigma, ... down to stop (inclusive up to rounding)."""
    if not (start >= stop > 0) or not 0 < sigma < 1:
        raise ValueError("need start >= stop > 0 and 0 < sigma < 1")
    k = int(round(math.log(stop / start) / math.log(sigma)))
    return [mu_at(start, sigma, i) for i in range(k + 1)]


def _newton_until(p, it: Iterate, mu: float, cap: int, fraction: float) -> Iterate:
    for _ in range(cap):
        if residual_norm(p, it, mu) < mu:
            return it
        it, _ = apply_step(p, it, newton_direction(p, it, mu), fraction)
    if residual_norm(p, it, mu) < mu:
        return it
    raise PathFollowingFailure(f"Newton did not reach ||F_mu|| < mu at mu={mu:g}")


def error_sweep(cert: CertifiedProblem, mu_list: Sequence[float], config: SolverConfig = SolverConfig()) -> list[ErrorRecord]:
    """Follow the central path with Newton steps and measure every family at each listed mu.

    The path is entered at ``config.mu0`` and followed down the sigma
    ladder until the first listed mu, then through ``mu_list`` itself.
    """
    mus = [float(m) for m in mu_list]
    if not mus:
        return []
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu_list must be strictly decreasing")
    p = cert.problem
    frac = config.boundary_fraction
    it, _ = initial_point(p, config.mu0, fraction=frac)
    k = 1
    while mu_at(config.mu0, config.sigma, k) > mus[0] * (1 + 1e-9):
        it = _newton_until(p, it, mu_at(config.mu0, config.sigma, k), config.max_iters_per_mu, frac)
        k += 1
    out = []
    for m in mus:
        it = _newton_until(p, it, m, config.max_iters_per_mu, frac)
        out.append(measure(cert, it, m, config.sigma * m, frac))
    return out


def aggregate(runs: Sequence[Sequence[ErrorRecord]]) -> list[ErrorRecord]:
    """Mean over seeds, one record per mu, ordered by decreasing mu."""
    by_mu: dict[float, list[ErrorRecord]] = {}
    for run in runs:
        for r in run:
            by_mu.setdefault(r.mu, []).append(r)
    out = []
    for mu in sorted(by_mu, reverse=True):
        rs = by_mu[mu]
        vals = {f.name: float(np.mean([getattr(r, f.name) for r in rs])) for f in fields(ErrorRecord) if f.name != "mu"}
        out.append(ErrorRecord(mu=mu, **vals))
    return out


def fit_slope(records: Iterable[ErrorRecord], field: str, mu_range: tuple[float, float] | None = None) -> float:
    """Least-squares slope of log(error) against log(mu)."""
    pts = []
    for r in records:
        if mu_range is not None:
            lo, hi = sorted(mu_range)
            if not (lo * (1 - 1e-9) <= r.mu <= hi * (1 + 1e-9)):
                continue
        v = getattr(r, field)
        if v > 0 and math.isfinite(v):
            pts.append((math.log(r.mu), math.log(v)))
    if len(pts) < 3:
        raise InsufficientData(f"need at least 3 positive points for {field}, got {len(pts)}")
    xs, ys = np.array(pts).T
    return float(np.polyfit(xs, ys, 1)[0])


# iteration table


@dataclass(frozen=True)
class TableRow:
    problem: str
    algorithm: str
    mu_decade: float
    iters: int
    mean_Ix: float | None
    fallback: bool

    def cells(self) -> list[str]:
        return [
            self.problem,
            self.algorithm,
            f"{self.mu_decade:.0e}" if _is_decade(self.mu_decade) else repr(self.mu_decade),
            str(self.iters),
            "" if self.mean_Ix is None else f"{self.mean_Ix:.4f}",
            "-" if self.fallback else "",
        ]


def _is_decade(mu: float) -> bool:
    e = math.log10(mu)
    return abs(e - round(e)) < 1e-9


def table_rows(name: str, trace: RunTrace, mu_checkpoints: Sequence[float] | None = None) -> list[TableRow]:
    cfg = trace.config
    counts = trace.iterations_per_mu()
    means = trace.mean_inactive_per_mu()
    capped = trace.capped_mu()
    idx = sorted(counts)
    if mu_checkpoints is not None:
        wanted = {int(round(math.log(m / cfg.mu0) / math.log(cfg.sigma))) for m in mu_checkpoints}
        idx = [k for k in idx if k in wanted]
    rows = []
    for k in idx:
        mu = mu_at(cfg.mu0, cfg.sigma, k)
        mean = None if trace.algorithm is Algorithm.NEWTON else means.get(k)
        rows.append(TableRow(name, trace.algorithm.value, mu, counts[k], mean, k in capped))
    return rows


def iteration_table(
    problems: Sequence[tuple[str, QuadraticProblem]],
    algorithms: Sequence[str],
    mu_checkpoints: Sequence[float] | None = None,
    config: SolverConfig = SolverConfig(),
) -> list[TableRow]:
    rows = []
    for name, p in problems:
        for alg in algorithms:
            rows.extend(table_rows(name, solve(p, alg, config), mu_checkpoints))
    return rows


# export


def _comment_block(header: dict | None) -> str:
    if not header:
        return ""
    return "".join(f"# {k}: {header[k]}\n" for k in sorted(header))


def export_csv(records: Sequence[ErrorRecord], header: dict | None = None) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in sorted(records, key=lambda r: -r.mu):
        lines.append(",".join(f"{v:.16e}" for v in r.row()))
    return _comment_block(header) + "\n".join(lines) + "\n"


def export_table_csv(rows: Sequence[TableRow], header: dict | None = None) -> str:
    lines = [",".join(TABLE_COLUMNS)]
    for r in rows:
        lines.append(",".join(r.cells()))
    return _comment_block(header) + "\n".join(lines) + "\n"


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
SVG_WIDTH, SVG_HEIGHT = 640, 480


def export_svg(records: Sequence[ErrorRecord], series: Sequence[str] = ERROR_FIELDS, title: str = "") -> str:
    """Log-log line plot of ``series`` against mu."""
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = SVG_WIDTH - left - right, SVG_HEIGHT - top - bottom
    recs = sorted(records, key=lambda r: -r.mu)
    pts = {s: [(math.log10(r.mu), math.log10(getattr(r, s))) for r in recs if getattr(r, s) > 0 and math.isfinite(getattr(r, s))] for s in series}
    xs = [x for v in pts.values() for x, _ in v] or [0.0]
    ys = [y for v in pts.values() for _, y in v] or [0.0]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(x):
        # mu decreases left to right
        return left + (x1 - x) / (x1 - x0) * pw

    def sy(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{left + pw / 2:.2f}" y="22" font-size="14" text-anchor="middle" font-family="sans-serif">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    ystep = max(1, (y1 - y0) // 10)
    for k in range(x0, x1 + 1):
        out.append(f'<line x1="{sx(k):.2f}" y1="{top}" x2="{sx(k):.2f}" y2="{top + ph}" stroke="#dddddd"/>')
        out.append(f'<text x="{sx(k):.2f}" y="{top + ph + 18}" font-size="11" text-anchor="middle" font-family="sans-serif">1e{k}</text>')
    for k in range(y0, y1 + 1, ystep):
        out.append(f'<line x1="{left}" y1="{sy(k):.2f}" x2="{left + pw}" y2="{sy(k):.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{sy(k) + 4:.2f}" font-size="11" text-anchor="end" font-family="sans-serif">1e{k}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{SVG_HEIGHT - 10}" font-size="12" text-anchor="middle" font-family="sans-serif">mu</text>')
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        p = pts[s]
        if len(p) > 1:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in p)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in p:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}" font-size="11" font-family="sans-serif">{s}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def spec_dict(spec: GeneratorSpec) -> dict:
    return asdict(spec)
