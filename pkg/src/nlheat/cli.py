"""Command-line entry point: ``nlheat <command> ...``.

Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 numerical
infrastructure failure (non-convergent quadrature, unresolvable grid).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import kernels as kn
from .grid import Field, Grid, read_field, write_field
from .heat_kernel import NyquistError, kernel_fourier_inversion
from .report import InfrastructureError, _clean
from .suites import ANCHORS, SUITES, Config, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INFRA = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(_clean(doc), indent=2) + "\n")


def _grid(args) -> Grid:
    base = Grid.default(args.d)
    return Grid(args.d, args.N or base.N, args.L or base.L)


def _common(p: argparse.ArgumentParser, spec_required: bool = True) -> None:
    p.add_argument("--spec", required=spec_required, help="kernel, e.g. fractional:alpha=1")
    p.add_argument("--d", type=int, default=1, help="dimension")
    p.add_argument("--N", type=int, default=None, help="nodes per axis (power of two)")
    p.add_argument("--L", type=float, default=None, help="box half-width")


# ---------------------------------------------------------------------------
# commands

def cmd_symbol(args) -> int:
    from .symbol import symbol_eval
    spec = kn.parse_spec(args.spec, args.d)
    rows = []
    for x in args.xi:
        e = np.zeros(spec.d)
        e[0] = x
        v = symbol_eval(spec, e)
        if not v.converged:
            raise InfrastructureError(f"symbol quadrature did not converge at |xi| = {x}")
        rows.append({"xi": x, "m": v.value, "achieved_tol": v.achieved_tol})
    _emit({"spec": spec.label, "values": rows})
    return EXIT_PASS


def cmd_heatkernel(args) -> int:
    spec = kn.parse_spec(args.spec, args.d)
    g = _grid(args)
    P = kernel_fourier_inversion(spec, args.t, g, laplacian=args.mixed)
    if args.out:
        write_field(args.out, g, P.values, args.t)
    _emit({"spec": spec.label, "grid": g.to_dict(), "t": args.t, "mass": P.mass,
           "min": float(P.values.min()), "max": float(P.values.max()),
           "nyquist_ratio": P.meta["nyquist_ratio"], "out": args.out})
    return EXIT_PASS


def cmd_apply(args) -> int:
    from .nonlocal_op import OperatorSpec, apply_levy
    spec = kn.parse_spec(args.spec, args.d)
    g, vals, t = read_field(args.input)
    if g.d != spec.d:
        raise UsageError(f"field has d={g.d}, kernel has d={spec.d}")
    op = OperatorSpec.mixed(spec) if args.mixed else OperatorSpec.pure_jump(spec)
    Lu = apply_levy(op, Field(g, vals))
    if args.out:
        write_field(args.out, g, Lu.values, t)
    _emit({"spec": spec.label, "grid": g.to_dict(), "sup": float(np.max(np.abs(Lu.values))),
           "out": args.out})
    return EXIT_PASS


def _measure(args, g: Grid):
    from .solver import RadonMeasure
    if args.measure:
        with open(args.measure) as fh:
            return RadonMeasure.from_json(fh.read())
    if args.gaussian:
        return RadonMeasure.gaussian(g, args.gaussian)
    atoms = [((float(a),) + (0.0,) * (g.d - 1), 1.0) for a in (args.dirac or [0.0])]
    return RadonMeasure(atoms, name="atoms")


def cmd_solve(args) -> int:
    from .solver import solve_rf, trace_check
    spec = kn.parse_spec(args.spec, args.d)
    g = _grid(args)
    mu = _measure(args, g)
    sol = solve_rf(mu, spec, args.times, g)
    outs = []
    if args.out:
        for t, f in zip(sol.times, sol.fields):
            path = f"{args.out}_t{t:g}.bin"
            write_field(path, g, f.values, float(t))
            outs.append(path)
    _emit({"spec": spec.label, "measure": mu.name, "grid": g.to_dict(),
           "times": sol.times, "masses": sol.masses(), "min": sol.min_value(), "files": outs})
    return EXIT_PASS


def cmd_phi(args) -> int:
    from .comparison_phi import build_phi, verify_phi_bounds
    spec = kn.parse_spec(args.spec, args.d)
    phi = build_phi(spec)
    b = verify_phi_bounds(phi, grid=_grid(args), refine=not args.no_refine)
    _emit({"spec": spec.label, "c": b.c, "c_L": b.c_L, "c_B": b.c_B,
           "comparability": b.comparability, "stable": b.stable, "pass": b.passed,
           "bridge": phi.coef})
    return EXIT_PASS if b.passed else EXIT_FAIL


def cmd_oracle(args) -> int:
    from .mc_oracle import oracle_check
    spec = kn.parse_spec(args.spec, 1)
    r = oracle_check(spec, args.t, n=args.n, delta=args.delta, seed=args.seed)
    ok = r["distance"] < 0.02 and r["wrong_time_exceeds"]
    _emit({"spec": spec.label, **r, "pass": ok})
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    if args.list:
        for name, anchor in ANCHORS.items():
            sys.stdout.write(f"{name:22s} {anchor}\n")
        return EXIT_PASS
    cfg = Config.load(args.config) if args.config else Config()
    for key in ("spec", "d", "N", "L", "seed", "jobs"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    if args.no_refine:
        cfg.refine = False
    if args.print_config:
        _emit(cfg.to_dict())
        return EXIT_PASS
    if args.suite is None:
        raise UsageError("verify needs a suite name (or --list / --print-config)")
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    cfg.kernel  # parameter validation before any work
    rep = run_suite(args.suite, cfg)
    if args.deterministic:
        rep.seconds = 0.0
    if args.csv:
        rep.write_csv(args.csv)
    sys.stdout.write(rep.to_json() + "\n")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlheat", description="Nonlocal heat equation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("symbol", help="evaluate the Fourier symbol")
    _common(s)
    s.add_argument("--xi", type=float, nargs="+", default=[1.0])
    s.set_defaults(fn=cmd_symbol)

    s = sub.add_parser("heatkernel", help="build P_t on a grid")
    _common(s)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--mixed", action="store_true", help="add -Laplacian")
    s.add_argument("--out", help="binary field file")
    s.set_defaults(fn=cmd_heatkernel)

    s = sub.add_parser("apply", help="apply the nonlocal operator to a field file")
    _common(s)
    s.add_argument("--input", required=True)
    s.add_argument("--mixed", action="store_true")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_apply)

    s = sub.add_parser("solve", help="representation-formula solution")
    _common(s)
    s.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0])
    s.add_argument("--measure", help="measure JSON file")
    s.add_argument("--dirac", type=float, nargs="+", help="unit atoms on the first axis")
    s.add_argument("--gaussian", type=float, help="Gaussian density with this sigma")
    s.add_argument("--out", help="prefix for per-time field files")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("phi", help="build and verify the comparison function")
    _common(s)
    s.add_argument("--no-refine", action="store_true")
    s.set_defaults(fn=cmd_phi)

    s = sub.add_parser("oracle", help="Monte Carlo density check (d = 1)")
    s.add_argument("--spec", required=True)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--n", type=int, default=1_000_000)
    s.add_argument("--delta", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("verify", help="run a named verification suite")
    s.add_argument("suite", nargs="?")
    s.add_argument("--spec")
    s.add_argument("--d", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--L", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--config", help="JSON config file (flags override)")
    s.add_argument("--csv", help="directory for CSV detail files")
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--deterministic", action="store_true",
                   help="report seconds as 0 so output is byte-identical across runs")
    s.add_argument("--list", action="store_true", help="print the suite table")
    s.add_argument("--print-config", action="store_true", help="print the effective config")
    s.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        return args.fn(args)
    except (InfrastructureError, NyquistError, FloatingPointError) as exc:
        sys.stderr.write(f"nlheat: numerical failure: {exc}\n")
        return EXIT_INFRA
    except (UsageError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"nlheat: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
