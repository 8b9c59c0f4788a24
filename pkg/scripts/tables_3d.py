"""3D runs: Poisson at s_x=8, Darcy and Stokes at s_x=4.

    python scripts/tables_3d.py [--max-nx 16]
"""
import argparse

from fmatrix.bench import RunConfig, format_table, sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-nx", type=int, default=16)
    a = p.parse_args()
    print("3D poisson, s_x = 8")
    print(format_table(sweep(RunConfig("poisson", 3, n, 8, kappa=True)
                             for n in (16, 32) if n <= a.max_nx)))
    for prob in ("darcy", "stokes"):
        print(f"3D {prob}, s_x = 4")
        print(format_table(sweep(RunConfig(prob, 3, n, 4, kappa=n == 8)
                                 for n in (8, 16) if n <= a.max_nx)))


if __name__ == "__main__":
    main()
