from dataclasses import fields
from pathlib import Path

import numpy as np
import pytest

from approxipm.active_sets import EstimationThresholds
from approxipm.exceptions import InitFailure
from approxipm.harness import GeneratorSpec, generate
from approxipm.ipm import (
    Algorithm,
    IterationRecord,
    Outcome,
    SolverConfig,
    initial_point,
    mu_at,
    solve,
    solve_approx,
    solve_higher_order,
    solve_intermediate,
    solve_reference,
)
from approxipm.problem import BoundedProblem, QuadraticProblem, read_problem
from approxipm.residual import make_iterate, residual_norm

HERE = Path(__file__).parent
ALGS = [a.value for a in Algorithm]


def shifted_square():
    # f = 1/2 (x - 1)^2 on x >= 0
    return QuadraticProblem.from_dense(np.eye(1), [-1.0], [0.0], [np.inf])


def wide_box(n=4, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    H = A @ A.T + np.eye(n)
    return QuadraticProblem.from_dense(H, rng.normal(size=n), np.full(n, -1e3), np.full(n, 1e3))


class TestInitialPoint:
    def test_default_start(self):
        p = QuadraticProblem.from_dense(np.eye(2), [0.0, 0.0], [0.0, -np.inf], [np.inf, np.inf])
        it, steps = initial_point(p, 100.0)
        assert np.all(it.x[p.has_lower] > 0)
        assert residual_norm(p, it, 100.0) < 100.0
        assert steps >= 0

    def test_start_on_the_path_takes_no_steps(self):
        p = shifted_square()
        # x = 1.5, lambda = 0.5 satisfies both equations exactly at mu = 0.75
        it, steps = initial_point(p, 0.75, start=make_iterate(p, [1.5], [0.5]))
        assert steps == 0
        assert it.x[0] == 1.5

    def test_clip_moves_infeasible_zero(self):
        p = QuadraticProblem.from_dense(np.eye(1), [0.0], [2.0], [4.0])
        it, _ = initial_point(p, 100.0)
        assert 2.0 < it.x[0] < 4.0

    def test_failure_raises(self):
        # unbounded below: Newton on the barrier cannot settle
        p = BoundedProblem([0.0], [np.inf], lambda x: (-x[0], np.array([-1.0]), np.zeros((1, 1))))
        with pytest.raises(InitFailure), np.errstate(all="ignore"):
            initial_point(p, 1e-3, start=make_iterate(p, [1e-12], [1e-12]))


class TestReference:
    def test_one_dim_converges_to_minimizer(self):
        tr = solve_reference(shifted_square())
        assert tr.outcome is Outcome.CONVERGED
        assert tr.iterate.x[0] == pytest.approx(1.0, abs=1e-9)
        assert tr.final_kkt() <= 1e-10

    def test_generated_problem(self):
        cert = generate(GeneratorSpec(n=50, seed=1))
        tr = solve_reference(cert.problem)
        assert tr.converged
        np.testing.assert_allclose(tr.iterate.x, cert.x_star, atol=1e-6)

    @pytest.mark.parametrize("name", ["qp_interior", "qp_degenerate", "qp_twosided"])
    def test_corpus_converges(self, name):
        assert solve_reference(read_problem(HERE / f"{name}.txt")).converged

    def test_mu_trace_invariants(self):
        cfg = SolverConfig()
        tr = solve_reference(generate(GeneratorSpec(n=30, seed=5)).problem, cfg)
        mus = [r.mu for r in tr.records]
        assert all(a >= b for a, b in zip(mus, mus[1:]))
        for r in tr.records:
            assert r.mu == mu_at(cfg.mu0, cfg.sigma, r.mu_index)
        # mu only moves on after the residual dropped below it
        for prev, nxt in zip(tr.records, tr.records[1:]):
            if nxt.mu < prev.mu:
                assert prev.res_mu < prev.mu
                assert nxt.mu_index == prev.mu_index + 1
        assert sum(tr.iterations_per_mu().values()) == tr.iterations

    def test_mu_at_is_clean(self):
        assert mu_at(100.0, 0.1, 6) == 1e-4
        assert mu_at(100.0, 0.1, 10) == 1e-8

    def test_mu_floor(self):
        cfg = SolverConfig(epsilon=1e-300, mu_min=1e-4)
        tr = solve_reference(shifted_square(), cfg)
        assert tr.outcome is Outcome.MU_FLOOR
        assert min(r.mu for r in tr.records) >= 1e-4

    def test_interiority_along_the_run(self):
        p = generate(GeneratorSpec(n=20, seed=7)).problem
        tr = solve_reference(p)
        it = tr.iterate
        assert np.all(it.x[p.has_lower] > p.lower[p.has_lower])
        assert np.all(it.x[p.has_upper] < p.upper[p.has_upper])
        assert np.all(it.lambda_l[p.has_lower] > 0) and np.all(it.lambda_u[p.has_upper] > 0)
        assert all(0 < r.alpha_p <= 1 and 0 < r.alpha_d <= 1 for r in tr.records)


class TestApproximate:
    def test_equals_newton_when_nothing_is_active(self):
        p = read_problem(HERE / "qp_interior.txt")
        a, n = solve_approx(p), solve_reference(p)
        assert a.converged and a.iterations == n.iterations
        np.testing.assert_allclose(a.iterate.x, n.iterate.x, rtol=1e-10, atol=1e-12)
        for ra, rn in zip(a.records, n.records):
            assert ra.mu == rn.mu
            assert ra.res_mu == pytest.approx(rn.res_mu, rel=1e-6, abs=1e-14)

    @pytest.mark.parametrize("src", ["S", "C"])
    def test_generated_problem_converges(self, src):
        cert = generate(GeneratorSpec(n=40, seed=2))
        tr = solve_approx(cert.problem, dx_source=src)
        assert tr.converged
        np.testing.assert_allclose(tr.iterate.x, cert.x_star, atol=1e-6)
        assert tr.algorithm.value == ("aNS" if src == "S" else "aNC")
        assert all(r.n_inactive is not None for r in tr.records if not r.fallback)

    def test_iteration_cap_without_fallback(self):
        cfg = SolverConfig(max_iters_per_mu=1, newton_fallback=False)
        tr = solve_approx(generate(GeneratorSpec(n=30, seed=3)).problem, cfg)
        assert tr.outcome is Outcome.ITERATION_CAP
        assert tr.fallback_count == 0
        assert tr.capped_mu()

    def test_fallback_engages(self):
        cfg = SolverConfig(max_iters_per_mu=1, newton_fallback=True)
        tr = solve_approx(generate(GeneratorSpec(n=30, seed=3)).problem, cfg)
        assert tr.fallback_count >= 1
        assert any(r.fallback for r in tr.records)
        fb = [r for r in tr.records if r.fallback]
        assert all(r.n_inactive is None for r in fb)
        assert {r.mu_index for r in fb} <= tr.capped_mu()

    def test_total_cap(self):
        tr = solve_approx(generate(GeneratorSpec(n=20, seed=3)).problem, SolverConfig(max_total_iters=3))
        assert tr.outcome is Outcome.ITERATION_CAP and tr.iterations == 3

    def test_custom_thresholds(self):
        cfg = SolverConfig(thresholds=EstimationThresholds(0.9, 0.9))
        assert solve_approx(generate(GeneratorSpec(n=20, seed=4)).problem, cfg).converged


class TestTwoStage:
    def test_zero_intermediate_step_reduces_to_newton(self):
        p = wide_box()
        cfg = SolverConfig(partial_row=1)
        ref = solve_reference(p, cfg)
        for tr in (solve_intermediate(p, cfg), solve_higher_order(p, cfg)):
            assert tr.iterations == ref.iterations
            np.testing.assert_array_equal(tr.iterate.x, ref.iterate.x)
            assert all(r.alpha_e_p == np.inf or r.alpha_e_p == 1.0 for r in tr.records)

    @pytest.mark.parametrize("row", [1, 2, 3])
    def test_rows_converge(self, row):
        cert = generate(GeneratorSpec(n=40, seed=6))
        for fn in (solve_intermediate, solve_higher_order):
            tr = fn(cert.problem, SolverConfig(partial_row=row))
            assert tr.converged
            np.testing.assert_allclose(tr.iterate.x, cert.x_star, atol=1e-6)
            assert not any(np.isnan(r.alpha_e_p) for r in tr.records)

    def test_bad_row(self):
        with pytest.raises(ValueError):
            SolverConfig(partial_row=4)


class TestTrace:
    @pytest.mark.parametrize("alg", ALGS)
    def test_deterministic(self, alg):
        p = generate(GeneratorSpec(n=25, seed=8)).problem
        a, b = solve(p, alg), solve(p, alg)
        strip = lambda tr: [(r.mu, r.res_mu, r.res_0, r.alpha_p, r.n_inactive, r.provenance) for r in tr.records]
        assert strip(a) == strip(b)
        np.testing.assert_array_equal(a.iterate.x, b.iterate.x)

    def test_record_schema(self):
        names = [f.name for f in fields(IterationRecord)]
        assert names[:4] == ["iteration", "mu", "mu_index", "res_mu"]
        tr = solve(shifted_square(), "aNS")
        r = tr.records[0]
        assert r.provenance.startswith("dx:")
        assert r.wall_time >= 0
        assert [x.iteration for x in tr.records] == list(range(tr.iterations))

    def test_config_validation(self):
        for bad in (dict(sigma=1.0), dict(epsilon=0.0), dict(boundary_fraction=1.0), dict(mu0=-1.0), dict(max_iters_per_mu=0)):
            with pytest.raises(ValueError):
                SolverConfig(**bad)
        d = SolverConfig().as_dict()
        assert d["variant"] == "(S,ls,ls)" and d["tau_a_exponent"] is None

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            solve(shifted_square(), "simplex")

    def test_numerical_failure_is_reported(self):
        # concave objective: the condensed system stops being positive definite
        p = BoundedProblem([-np.inf], [np.inf], lambda x: (-x[0] ** 2, -2 * x, -2 * np.eye(1)))
        tr = solve_reference(p, start=make_iterate(p, [1.0]))
        assert tr.outcome is Outcome.NUMERICAL_FAILURE
        assert tr.message
