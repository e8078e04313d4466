"""Command-line interface: solve, sweep, table, gen.

Exit status: 0 success, 1 usage error, 2 solver failure, 3 I/O or input-file error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields

import numpy as np

from .active_sets import EstimationThresholds
from .approx import ApproxVariant
from .exceptions import ApproxIPMError, ProblemFormatError, ValidationError
from .harness import (
    ERROR_FIELDS,
    PROGRESS_FIELDS,
    GeneratorSpec,
    aggregate,
    error_sweep,
    export_csv,
    export_svg,
    export_table_csv,
    fit_slope,
    generate,
    mu_ladder,
    table_rows,
)
from .ipm import Algorithm, SolverConfig, solve
from .problem import read_problem, serialize, validate, write_problem

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--mu0", type=float, default=100.0)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--epsilon", type=float, default=1e-10)
    g.add_argument("--boundary-fraction", type=float, default=0.98)
    g.add_argument("--max-iters-per-mu", type=_positive_int, default=50)
    g.add_argument("--mu-min", type=float, default=1e-12)
    g.add_argument("--max-total-iters", type=_positive_int, default=1000)
    g.add_argument("--tau-a-exp", type=float, default=None, help="active threshold exponent (default per algorithm)")
    g.add_argument("--tau-i-exp", type=float, default=None, help="inactive threshold exponent (default per algorithm)")
    g.add_argument("--variant", default="S,ls,ls", help="dx_A,dlambda_A,dlambda_I sources, e.g. C,b,C")
    g.add_argument("--partial-row", type=int, choices=(1, 2, 3), default=2, help="intermediate-step component rule")
    fb = g.add_mutually_exclusive_group()
    fb.add_argument("--fallback", dest="fallback", action="store_true", default=None)
    fb.add_argument("--no-fallback", dest="fallback", action="store_false")


def _add_generator_flags(p: argparse.ArgumentParser, n_default: int) -> None:
    g = p.add_argument_group("generator")
    g.add_argument("--n", type=_positive_int, default=n_default)
    g.add_argument("--frac-inactive", type=float, default=0.75)
    g.add_argument("--density", type=float, default=0.4)
    g.add_argument("--bound-style", choices=("lower-only", "two-sided", "mixed"), default="mixed")
    g.add_argument("--magnitude", type=float, default=1.0)
    g.add_argument("--diag-shift", type=float, default=1.0)
    g.add_argument("--seeds", type=_positive_int, default=1, help="number of seeded problems")
    g.add_argument("--seed-start", type=int, default=1, help="first seed")
    g.add_argument("--jobs", type=_positive_int, default=1)
    g.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="approxipm", description="Interior-point methods with approximate Newton directions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("--alg", action="append", choices=[a.value for a in Algorithm], required=True)
    p.add_argument("file")
    _add_solver_flags(p)

    p = sub.add_parser("sweep", help="error sweep on generated problems (CSV + SVG)")
    p.add_argument("--mus", default="1e-2:1e-8", help="A:B expands to A, sigma*A, ..., B")
    _add_generator_flags(p, 100)
    _add_solver_flags(p)

    p = sub.add_parser("table", help="iteration table on generated problems (CSV)")
    p.add_argument("--algs", default=",".join(a.value for a in Algorithm))
    _add_generator_flags(p, 50)
    _add_solver_flags(p)

    p = sub.add_parser("gen", help="write a generated problem file")
    p.add_argument("--spec", default="", help="comma-separated k=v generator fields, e.g. n=20,seed=3")
    p.add_argument("--out", default="-", help="output file, '-' for stdout")
    return parser


def config_from_args(args) -> SolverConfig:
    thresholds = None
    if args.tau_a_exp is not None or args.tau_i_exp is not None:
        if args.tau_a_exp is None or args.tau_i_exp is None:
            raise UsageError("--tau-a-exp and --tau-i-exp must be given together")
        thresholds = EstimationThresholds(args.tau_a_exp, args.tau_i_exp)
    parts = args.variant.split(",")
    if len(parts) != 3:
        raise UsageError("--variant takes three comma-separated sources")
    return SolverConfig(
        mu0=args.mu0,
        sigma=args.sigma,
        epsilon=args.epsilon,
        boundary_fraction=args.boundary_fraction,
        max_iters_per_mu=args.max_iters_per_mu,
        mu_min=args.mu_min,
        thresholds=thresholds,
        variant=ApproxVariant(*parts),
        partial_row=args.partial_row,
        newton_fallback=args.fallback,
        max_total_iters=args.max_total_iters,
    )


def spec_from_args(args, seed: int) -> GeneratorSpec:
    return GeneratorSpec(
        n=args.n,
        frac_inactive=args.frac_inactive,
        density=args.density,
        bound_style=args.bound_style,
        magnitude=args.magnitude,
        diag_shift=args.diag_shift,
        seed=seed,
    )


def parse_spec(text: str) -> GeneratorSpec:
    types = {f.name: f.type for f in fields(GeneratorSpec)}
    casts = {"int": int, "float": float, "str": str}
    kwargs = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in types:
            raise UsageError(f"bad --spec entry {item!r}; fields are {', '.join(types)}")
        try:
            kwargs[key] = casts[types[key]](value.strip())
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    return GeneratorSpec(**kwargs)


def parse_mus(text: str, sigma: float) -> list[float]:
    a, sep, b = text.partition(":")
    try:
        if not sep:
            return [float(a)]
        return mu_ladder(float(a), float(b), sigma)
    except ValueError as exc:
        raise UsageError(f"bad --mus {text!r}: {exc}") from None


def _echo(header: dict) -> None:
    for k in sorted(header):
        print(f"# {k}: {header[k]}")


def _seeds(args) -> list[int]:
    return list(range(args.seed_start, args.seed_start + args.seeds))


def _map(fn, items, jobs: int):
    if jobs == 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _cmd_solve(args) -> int:
    if len(args.alg) > 1:
        raise UsageError("--alg options are mutually exclusive; give exactly one")
    config = config_from_args(args)
    problem = read_problem(args.file)
    validate(problem)
    _echo({"command": "solve", "algorithm": args.alg[0], "file": args.file, **config.as_dict()})
    trace = solve(problem, args.alg[0], config)
    print(f"{'iter':>4} {'mu':>9} {'|F_mu|':>10} {'|F_0|':>10} {'alpha_p':>8} {'alpha_d':>8} {'|I_x|':>6} fb")
    for r in trace.records:
        nin = "" if r.n_inactive is None else str(r.n_inactive)
        print(
            f"{r.iteration:>4} {r.mu:>9.1e} {r.res_mu:>10.3e} {r.res_0:>10.3e} "
            f"{r.alpha_p:>8.4f} {r.alpha_d:>8.4f} {nin:>6} {'*' if r.fallback else ''}"
        )
    print(f"outcome: {trace.outcome.value}")
    print(f"iterations: {trace.iterations} (initialization: {trace.init_steps})")
    print(f"fallbacks: {trace.fallback_count}")
    print(f"final ||F_0||: {trace.final_kkt():.3e}")
    if trace.message:
        print(f"note: {trace.message}")
    return EXIT_OK if trace.converged else EXIT_SOLVER


def _sweep_one(job):
    spec, mus, config = job
    return error_sweep(generate(spec), mus, config)


def _cmd_sweep(args) -> int:
    config = config_from_args(args)
    mus = parse_mus(args.mus, config.sigma)
    seeds = _seeds(args)
    header = {
        "command": "sweep",
        "mus": ",".join(repr(m) for m in mus),
        "seeds": ",".join(map(str, seeds)),
        **{f"gen.{k}": v for k, v in asdict(spec_from_args(args, seeds[0])).items() if k != "seed"},
        **config.as_dict(),
    }
    _echo(header)
    runs = _map(_sweep_one, [(spec_from_args(args, s), mus, config) for s in seeds], args.jobs)
    mean = aggregate(runs)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "sweep.csv"), export_csv(mean, header))
    _write(os.path.join(args.out, "sweep_errors.svg"), export_svg(mean, ERROR_FIELDS, "mean error vs Newton"))
    _write(os.path.join(args.out, "sweep_progress.svg"), export_svg(mean, PROGRESS_FIELDS, "mean ||F_mu+||"))
    if len(mus) >= 3:
        for f in ERROR_FIELDS:
            slopes = [fit_slope(r, f) for r in runs]
            print(f"slope {f}: {np.mean(slopes):.3f} +/- {np.std(slopes):.3f}")
    print(f"wrote {len(mean)} rows to {os.path.join(args.out, 'sweep.csv')}")
    return EXIT_OK


def _table_one(job):
    spec, algs, config = job
    cert = generate(spec)
    rows = []
    for alg in algs:
        rows.extend(table_rows(f"seed{spec.seed}", solve(cert.problem, alg, config)))
    return rows


def _cmd_table(args) -> int:
    config = config_from_args(args)
    algs = [a.strip() for a in args.algs.split(",") if a.strip()]
    try:
        algs = [Algorithm(a).value for a in algs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seeds = _seeds(args)
    header = {
        "command": "table",
        "algorithms": ",".join(algs),
        "seeds": ",".join(map(str, seeds)),
        **{f"gen.{k}": v for k, v in asdict(spec_from_args(args, seeds[0])).items() if k != "seed"},
        **config.as_dict(),
    }
    _echo(header)
    chunks = _map(_table_one, [(spec_from_args(args, s), algs, config) for s in seeds], args.jobs)
    rows = [r for c in chunks for r in c]
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "table.csv")
    _write(path, export_table_csv(rows, header))
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    spec = parse_spec(args.spec)
    header = {"command": "gen", **asdict(spec)}
    cert = generate(spec)
    text = "\n".join(f"{k}: {header[k]}" for k in sorted(header))
    if args.out == "-":
        sys.stdout.write("".join(f"# {line}\n" for line in text.splitlines()))
        sys.stdout.write(serialize(cert.problem))
    else:
        _echo(header)
        write_problem(cert.problem, args.out, header=text)
        print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "table": _cmd_table, "gen": _cmd_gen}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"approxipm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ProblemFormatError, ValidationError) as exc:
        print(f"approxipm: input/output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ApproxIPMError as exc:
        print(f"approxipm: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"approxipm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> None:
    try:
        code = run(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
    sys.exit(code)
