"""2D Poisson: grid refinement at s_x=8 and subdomain-size sweep at n_x=256.

    python scripts/poisson_tables.py [--max-nx 256]
"""
import argparse

from fmatrix.bench import RunConfig, format_table, sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-nx", type=int, default=256)
    a = p.parse_args()
    sizes = [n for n in (32, 64, 128, 256, 512) if n <= a.max_nx]
    print("grid refinement, s_x = 8")
    print(format_table(sweep(RunConfig("poisson", 2, n, 8, kappa=True) for n in sizes)))
    print(f"subdomain size, n_x = {sizes[-1]}")
    print(format_table(sweep(RunConfig("poisson", 2, sizes[-1], s) for s in (4, 8, 16, 32))))


if __name__ == "__main__":
    main()
