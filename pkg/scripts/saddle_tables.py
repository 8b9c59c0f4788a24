"""2D Darcy and Stokes grid refinement at s_x=8 (kappa at n_x=64).

    python scripts/saddle_tables.py [--max-nx 128] [--problem darcy stokes]
"""
import argparse

from fmatrix.bench import RunConfig, format_table, sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-nx", type=int, default=128)
    p.add_argument("--problem", nargs="+", default=["darcy", "stokes"], choices=["darcy", "stokes"])
    a = p.parse_args()
    sizes = [n for n in (16, 32, 64, 128, 256) if n <= a.max_nx]
    for prob in a.problem:
        print(f"2D {prob}, s_x = 8")
        print(format_table(sweep(RunConfig(prob, 2, n, 8, kappa=n == 64) for n in sizes)))


if __name__ == "__main__":
    main()
