import numpy as np
import pytest

from approxipm.problem import QuadraticProblem
from approxipm.residual import make_iterate

ACCEPTANCE_LINES: list[str] = []


def random_qp(rng, n, style="mixed", density=0.5, shift=0.5):
    """Random strictly convex QP with a mix of bound types."""
    S = rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < density)
    H = S @ S.T + shift * np.eye(n)
    base = rng.uniform(-1, 1, n)
    width = rng.uniform(1, 3, n)
    if style == "lower":
        kind = np.ones(n, dtype=int)
    elif style == "two":
        kind = np.full(n, 3)
    else:
        kind = rng.integers(0, 4, n)
    lower = np.where((kind == 1) | (kind == 3), base, -np.inf)
    upper = np.where(kind == 2, base, np.where(kind == 3, base + width, np.inf))
    return QuadraticProblem.from_dense(H, rng.normal(size=n), lower, upper)


def random_interior_iterate(rng, problem, spread=1.0):
    """Strictly interior point; gaps and multipliers span several magnitudes."""
    n = problem.n
    lo, up = problem.lower, problem.upper
    t = rng.uniform(0.05, 0.95, n)
    width = up - lo
    with np.errstate(invalid="ignore"):
        x = np.where(np.isfinite(width), lo + t * width, 0.0)
    x = np.where(np.isfinite(lo) & ~np.isfinite(up), lo + 10 ** rng.uniform(-3, 0, n) * spread, x)
    x = np.where(~np.isfinite(lo) & np.isfinite(up), up - 10 ** rng.uniform(-3, 0, n) * spread, x)
    x = np.where(~np.isfinite(lo) & ~np.isfinite(up), rng.normal(size=n), x)
    ll = 10 ** rng.uniform(-3, 0.5, n)
    lu = 10 ** rng.uniform(-3, 0.5, n)
    return make_iterate(problem, x, ll, lu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
