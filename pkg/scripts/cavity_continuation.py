"""Driven cavity: Newton continuation in Re, GMRES iterations of the first
Newton system at each Reynolds number.

    python scripts/cavity_continuation.py [--nx 64] [--re 500 1000 2000 4000 8000]

The continuation at n_x=64 up to Re=8000 takes a few minutes on one core.
"""
import argparse
import logging

from fmatrix.bench import RunConfig, format_table, run
from fmatrix.cavity import DEFAULT_SCHEDULE, cavity_rhs, continue_to_re, gen_cavity_jacobian


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--re", type=float, nargs="+", default=list(DEFAULT_SCHEDULE))
    p.add_argument("-v", "--verbose", action="store_true")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)
    schedule = sorted(a.re)
    reports = []
    state = continue_to_re(a.nx, schedule[:1])
    for i, Re in enumerate(schedule):
        k = gen_cavity_jacobian(a.nx, Re, state)
        if state.Re < Re:
            k.meta["rhs"] = cavity_rhs(a.nx, Re, state)
        r = run(RunConfig("cavity", 2, a.nx, 8, Re=Re, solver="gmres"), system=k)
        reports.append(r)
        print(f"Re={Re:g}: {r.iter} iterations (Jacobian at Re={state.Re:g})", flush=True)
        if i + 1 < len(schedule):
            state = continue_to_re(a.nx, [Re], start=state) if state.Re < Re else state
    print(format_table(reports))


if __name__ == "__main__":
    main()
