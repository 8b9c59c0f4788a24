"""Command line: ``python -m fmatrix --problem stokes --nx 32 --sx 8``.

Several ``--nx`` / ``--sx`` values give a sweep over their product.  Exit
status is 0 only if every run converged.
"""
from __future__ import annotations

import argparse
import itertools
import sys

from .bench import RunConfig, format_csv, format_table, run, sweep
from .solver import SOLVERS


def parse_args(argv=None):
    p = argparse.ArgumentParser(prog="fmatrix", description=__doc__.splitlines()[0])
    p.add_argument("--problem", choices=["poisson", "darcy", "stokes", "cavity"], default="poisson")
    p.add_argument("--dim", type=int, choices=[2, 3], default=2)
    p.add_argument("--nx", type=int, nargs="+", default=[32])
    p.add_argument("--sx", type=int, nargs="+", default=[8])
    p.add_argument("--re", type=float, default=500.0, help="Reynolds number (cavity)")
    p.add_argument("--tol", type=float, default=None,
                   help="relative residual tolerance (default 1e-8, cavity 1e-6)")
    p.add_argument("--solver", choices=SOLVERS, default="auto")
    p.add_argument("--kappa", action="store_true", help="estimate the preconditioned condition number")
    p.add_argument("--maxit", type=int, default=1000, help="iteration limit of the Krylov solver")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_ms column (off by default so reports are reproducible)")
    p.add_argument("--export-matrix", metavar="PATH",
                   help="write the system as a header file plus Matrix Market A and B")
    return p.parse_args(argv)


def main(argv=None) -> int:
    a = parse_args(argv)
    try:
        configs = [RunConfig(a.problem, a.dim, nx, sx, a.re, a.tol, a.solver, a.kappa, a.seed,
                             a.timing, a.maxit)
                   for nx, sx in itertools.product(a.nx, a.sx)]
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if a.export_matrix:
        if len(configs) != 1:
            print("error: --export-matrix needs a single configuration", file=sys.stderr)
            return 2
        reports = [run(configs[0], export_matrix=a.export_matrix)]
    else:
        reports = sweep(configs)
    out = format_csv(reports) if a.format == "csv" else format_table(reports)
    sys.stdout.write(out)
    for r in reports:
        if r.error:
            print(f"error (n_x={r.n_x}, s_x={r.s_x}): {r.error}", file=sys.stderr)
    return 0 if all(r.converged and not r.error for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
