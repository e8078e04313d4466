import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approxipm.exceptions import InsufficientData
from approxipm.harness import (
    ERROR_FIELDS,
    SWEEP_COLUMNS,
    TABLE_COLUMNS,
    ErrorRecord,
    GeneratorSpec,
    TableRow,
    aggregate,
    error_sweep,
    export_csv,
    export_svg,
    export_table_csv,
    fit_slope,
    generate,
    iteration_table,
    kkt_residual,
    measure,
    mu_ladder,
    table_rows,
)
from approxipm.ipm import SolverConfig, solve
from approxipm.problem import serialize
from approxipm.approx import ApproxVariant, full_approximate_direction

from oracle import dense_newton


def record(mu, value):
    vals = {c: value for c in SWEEP_COLUMNS if c != "mu"}
    return ErrorRecord(mu=mu, **vals)


def power_law(mus, slope, scale=1.0):
    return [record(m, scale * m**slope) for m in mus]


class TestGenerator:
    def test_deterministic(self):
        a, b = generate(GeneratorSpec(n=30, seed=9)), generate(GeneratorSpec(n=30, seed=9))
        assert serialize(a.problem) == serialize(b.problem)
        np.testing.assert_array_equal(a.x_star, b.x_star)
        assert serialize(generate(GeneratorSpec(n=30, seed=10)).problem) != serialize(a.problem)

    @pytest.mark.parametrize("style", ["lower-only", "two-sided", "mixed"])
    def test_certificate(self, style):
        cert = generate(GeneratorSpec(n=40, seed=3, bound_style=style))
        p = cert.problem
        assert kkt_residual(p, cert.x_star, cert.lambda_l_star, cert.lambda_u_star) <= 1e-12
        assert np.all(cert.x_star >= p.lower) and np.all(cert.x_star <= p.upper)
        assert np.all(cert.lambda_l_star >= 0) and np.all(cert.lambda_u_star >= 0)
        part = cert.partition_star
        # strict complementarity with margin
        assert np.all(cert.lambda_l_star[part.a_l] >= 0.1)
        gl = cert.x_star - p.lower
        assert np.all(gl[part.i_l] >= 0.1)
        assert np.all(np.linalg.eigvalsh(p.H) > 0)
        if style == "lower-only":
            assert np.all(p.has_lower) and not np.any(p.has_upper)

    def test_inactive_fraction(self):
        cert = generate(GeneratorSpec(n=1000, seed=1, density=0.01))
        assert abs(int(cert.partition_star.i_x.sum()) - 750) <= 0.05 * 750

    @pytest.mark.parametrize(
        "kw", [dict(n=0), dict(frac_inactive=1.5), dict(density=0.0), dict(bound_style="box"), dict(magnitude=0.0), dict(seed=-1)]
    )
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            GeneratorSpec(**kw)

    @given(st.integers(1, 2**31), st.floats(0.0, 1.0), st.integers(2, 25))
    @settings(max_examples=30, deadline=None)
    def test_certificate_property(self, seed, frac, n):
        cert = generate(GeneratorSpec(n=n, seed=seed, frac_inactive=frac))
        assert kkt_residual(cert.problem, cert.x_star, *cert.lambda_star) <= 1e-12
        p = cert.problem
        n_free = int(np.sum(~p.has_lower & ~p.has_upper))
        assert int(cert.partition_star.i_x.sum()) == max(round(frac * n), n_free)


class TestSlope:
    def test_exact_power_law(self):
        assert fit_slope(power_law([1e-2, 1e-3, 1e-4, 1e-5], 2.0), "err_total") == pytest.approx(2.0)

    def test_range_filter(self):
        recs = power_law([1e-2, 1e-3], 1.0) + power_law([1e-4, 1e-5, 1e-6], 3.0)
        assert fit_slope(recs, "err_total", (1e-4, 1e-6)) == pytest.approx(3.0)

    def test_needs_three_points(self):
        with pytest.raises(InsufficientData):
            fit_slope(power_law([1e-2, 1e-3], 2.0), "err_total")

    def test_zeros_are_dropped(self):
        recs = power_law([1e-2, 1e-3, 1e-4], 2.0) + [record(1e-5, 0.0)]
        assert fit_slope(recs, "err_total") == pytest.approx(2.0)
        with pytest.raises(InsufficientData):
            fit_slope([record(1e-2, 0.0)] * 4, "err_total")


class TestExport:
    def test_header_only_csv(self):
        assert export_csv([]) == ",".join(SWEEP_COLUMNS) + "\n"

    def test_single_row_csv(self):
        text = export_csv([record(1e-3, 0.5)], header={"seed": 1})
        lines = text.splitlines()
        assert lines[0] == "# seed: 1"
        assert lines[1].split(",") == list(SWEEP_COLUMNS)
        vals = [float(v) for v in lines[2].split(",")]
        assert vals[0] == 1e-3 and all(v == 0.5 for v in vals[1:])
        assert lines[2].split(",")[0] == "1.0000000000000000e-03"

    def test_rows_sorted_by_decreasing_mu(self):
        text = export_csv([record(1e-4, 1.0), record(1e-2, 1.0), record(1e-3, 1.0)])
        mus = [float(l.split(",")[0]) for l in text.splitlines()[1:]]
        assert mus == [1e-2, 1e-3, 1e-4]

    def test_svg_deterministic_and_sized(self):
        recs = power_law([1e-2, 1e-3, 1e-4], 2.0)
        a, b = export_svg(recs, title="t"), export_svg(recs, title="t")
        assert a == b
        root = ET.fromstring(a)
        assert root.get("width") == "640" and root.get("height") == "480"
        assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == len(ERROR_FIELDS)

    def test_svg_handles_empty(self):
        ET.fromstring(export_svg([]))

    def test_table_markers(self):
        rows = [TableRow("p", "newton", 1e-4, 3, None, False), TableRow("p", "aNS", 1e-5, 50, 12.5, True)]
        lines = export_table_csv(rows).splitlines()
        assert lines[0].split(",") == list(TABLE_COLUMNS)
        assert lines[1] == "p,newton,1e-04,3,,"
        assert lines[2] == "p,aNS,1e-05,50,12.5000,-"


@pytest.fixture(scope="module")
def sweep():
    cert = generate(GeneratorSpec(n=60, seed=1))
    return cert, error_sweep(cert, mu_ladder(1e-2, 1e-8))


class TestSweep:
    def test_one_record_per_mu(self, sweep):
        _, recs = sweep
        assert [r.mu for r in recs] == mu_ladder(1e-2, 1e-8)
        assert all(math.isfinite(getattr(r, f)) for r in recs for f in SWEEP_COLUMNS)

    def test_second_order_errors_shrink(self, sweep):
        _, recs = sweep
        small = [r for r in recs if r.mu <= 1e-4]
        for a, b in zip(small, small[1:]):
            for f in ("err_dxA_S", "err_dxA_C", "err_total"):
                ratio = getattr(a, f) / getattr(b, f)
                assert 30 <= ratio <= 300, (f, a.mu, ratio)

    def test_newton_makes_progress(self, sweep):
        _, recs = sweep
        for r in recs:
            if r.mu <= 1e-3:
                assert r.F_zN < r.F_z

    def test_measurement_matches_oracle(self, sweep):
        # re-measure at an iterate on the path and compare err_total against a dense solve
        cert, _ = sweep
        p = cert.problem
        tr = solve(p, "newton", SolverConfig(mu_min=1e-5, epsilon=1e-300))
        it = tr.iterate
        rec = measure(cert, it, 1e-5, 1e-6)
        d = full_approximate_direction(p, it, 1e-6, cert.partition_star, ApproxVariant("S", "ls", "ls"))
        dx, dl, du = dense_newton(p, it, 1e-6)
        ref = np.concatenate([d.dx - dx, d.dlambda_l - dl, d.dlambda_u - du])
        assert rec.err_total == pytest.approx(np.linalg.norm(ref), rel=1e-6)

    def test_aggregate_means(self):
        a = power_law([1e-2, 1e-3], 1.0, 1.0)
        b = power_law([1e-2, 1e-3], 1.0, 3.0)
        agg = aggregate([a, b])
        assert [r.mu for r in agg] == [1e-2, 1e-3]
        assert agg[0].err_total == pytest.approx(2e-2)

    def test_sweep_is_deterministic(self, sweep):
        cert, recs = sweep
        again = error_sweep(cert, mu_ladder(1e-2, 1e-8))
        assert export_csv(recs) == export_csv(again)

    def test_rejects_increasing_ladder(self, sweep):
        with pytest.raises(ValueError):
            error_sweep(sweep[0], [1e-4, 1e-3])


class TestTable:
    def test_rows_follow_trace(self):
        p = generate(GeneratorSpec(n=30, seed=2)).problem
        rows = iteration_table([("g2", p)], ["newton", "aNS"])
        newton = [r for r in rows if r.algorithm == "newton"]
        assert sum(r.iters for r in newton) == solve(p, "newton").iterations
        assert all(r.mean_Ix is None for r in newton)
        assert all(r.mean_Ix is not None for r in rows if r.algorithm == "aNS")

    def test_checkpoints_filter(self):
        p = generate(GeneratorSpec(n=30, seed=2)).problem
        rows = table_rows("g2", solve(p, "newton"), [1e-4, 1e-6])
        assert [r.mu_decade for r in rows] == [1e-4, 1e-6]

    def test_capped_marker(self):
        p = generate(GeneratorSpec(n=30, seed=3)).problem
        tr = solve(p, "aNS", SolverConfig(max_iters_per_mu=1, newton_fallback=False))
        rows = table_rows("g3", tr)
        assert rows[-1].fallback and rows[-1].cells()[-1] == "-"


def test_mu_ladder():
    assert mu_ladder(1e-2, 1e-5) == [1e-2, 1e-3, 1e-4, 1e-5]
    with pytest.raises(ValueError):
        mu_ladder(1e-5, 1e-2)
