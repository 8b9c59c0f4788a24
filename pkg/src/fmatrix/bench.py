"""Benchmark runs: one configuration -> one report row in the column order
``nx, sx, N, nnz, N_S, n, iter, fill1, fill2, kappa``."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .krylov import condition_estimate
from .problems import ProblemSpec, generate, random_divergence_free_system
from .saddle import save_saddle
from .solver import SOLVERS, HybridSolver

CSV_HEADER = ["nx", "sx", "N", "nnz", "NS", "n", "iter", "fill1", "fill2", "kappa", "wall_ms"]
KAPPA_DENSE_MAX = 2000
KAPPA_STEPS = 80


@dataclass(frozen=True)
class RunConfig:
    problem: str = "poisson"
    dim: int = 2
    n_x: int = 64
    s_x: int = 8
    Re: float = 500.0
    tol: float | None = None  # 1e-8, or 1e-6 for the cavity
    solver: str = "auto"
    kappa: bool = False
    seed: int = 0
    timing: bool = False
    maxit: int = 1000

    def __post_init__(self):
        ProblemSpec(self.problem, self.dim, self.n_x, self.Re, seed=self.seed)
        if self.s_x < 1 or self.n_x % self.s_x:
            raise ValueError(f"s_x={self.s_x} must divide n_x={self.n_x}")
        if self.maxit < 1:
            raise ValueError("maxit must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def tolerance(self) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-6 if self.problem == "cavity" else 1e-8


@dataclass
class SolveReport:
    n_x: int
    s_x: int
    N: int
    nnz: int
    N_S: int
    n: int
    iter: int
    fill1: float
    fill2: float
    fill_parts: dict = field(default_factory=dict)  # a, b, c relative to nnz(K)
    kappa: float | None = None
    wall_time: float | None = None
    converged: bool = False
    final_relative_residual: float = np.inf
    constraint_drift: float = 0.0
    error: str = ""

    def row(self) -> list:
        if self.error:
            return [str(self.n_x), str(self.s_x)] + ["-"] * 8 + [self.error]
        kap = "-" if self.kappa is None else f"{self.kappa:.3g}"
        wall = "-" if self.wall_time is None else f"{1000 * self.wall_time:.0f}"
        return [str(self.n_x), str(self.s_x), str(self.N), str(self.nnz), str(self.N_S),
                str(self.n), str(self.iter), f"{self.fill1:.3g}", f"{self.fill2:.3g}", kap, wall]

    def as_dict(self) -> dict:
        return asdict(self)


def _rhs(k, cfg: RunConfig):
    """Newton right-hand side for continued cavity runs, otherwise a seeded
    random solution (divergence free for saddle systems)."""
    if k.meta.get("rhs") is not None:
        return None, np.asarray(k.meta["rhs"], dtype=float)
    if k.m:
        x, b = random_divergence_free_system(k, cfg.seed)
    else:
        x = np.random.default_rng(cfg.seed).standard_normal(k.n)
        b = k.K @ x
    return x, b


def build_system(cfg: RunConfig):
    return generate(ProblemSpec(cfg.problem, cfg.dim, cfg.n_x, cfg.Re, seed=cfg.seed))


def run(cfg: RunConfig, system=None, export_matrix=None, solver=None) -> SolveReport:
    """Generate, set up the hybrid solver, iterate and collect the metrics.

    ``solver`` reuses an existing :class:`HybridSolver` for ``system``.
    """
    t0 = time.perf_counter()
    if solver is not None:
        system = solver.system
    k = build_system(cfg) if system is None else system
    if export_matrix:
        save_saddle(k, export_matrix)
    hs = HybridSolver(k, cfg.s_x) if solver is None else solver
    _, b = _rhs(k, cfg)
    _, tr = hs.solve(b, cfg.tolerance, cfg.solver, cfg.maxit)
    wall = time.perf_counter() - t0
    fs, pc = hs.factor_state, hs.preconditioner
    nnz = k.nnz
    parts = {"a": fs.fill_counters["a"] / nnz, "b": fs.fill_counters["b"] / nnz,
             "c": pc.fill["c"] / nnz}
    kappa = None
    if cfg.kappa and k.symmetric:
        nv = fs.n_velocity_schur if k.m else None
        if fs.schur.shape[0] <= KAPPA_DENSE_MAX:
            kappa = condition_estimate(fs.schur, pc.matrix(), nv)
        else:
            kappa = condition_estimate(fs.schur, pc, nv, steps=KAPPA_STEPS, seed=cfg.seed)
    return SolveReport(cfg.n_x, cfg.s_x, k.size, nnz, fs.schur.shape[0], pc.reduced.size,
                       tr.iterations, sum(parts.values()), pc.fill["reduced"] / nnz, parts,
                       kappa, wall if cfg.timing else None, tr.converged,
                       tr.final_relative_residual, max(tr.constraint_drift, default=0.0))


def sweep(configs) -> list:
    """One report per configuration; a failing configuration gives an error row."""
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one configuration")
    out = []
    for cfg in configs:
        try:
            out.append(run(cfg))
        except Exception as err:  # keep sweeping
            out.append(SolveReport(cfg.n_x, cfg.s_x, 0, 0, 0, 0, 0, np.nan, np.nan,
                                   error=f"{type(err).__name__}: {err}"))
    return out


def format_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def format_table(reports) -> str:
    head = ["n_x", "s_x", "N", "nnz", "N_S", "n", "iter", "fill 1", "fill 2", "kappa", "wall ms"]
    rows = [head] + [r.row() for r in reports]
    width = [max(len(row[i]) if i < len(row) else 0 for row in rows) for i in range(len(head))]
    lines = []
    for row in rows:
        if len(row) > len(head):  # error rows
            row = row[:2] + [row[-1]]
        lines.append("  ".join(c.rjust(w) for c, w in zip(row, width)))
    return "\n".join(lines) + "\n"
