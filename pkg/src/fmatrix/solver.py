"""End-to-end hybrid solve: interior elimination, transform and dropping,
then a Krylov iteration on the Schur complement."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .decomp import GridSpec, decompose
from .factor import eliminate_interiors
from .krylov import ConstraintContext, gmres, pcg, ppcg
from .precond import drop_and_factor
from .saddle import SaddleSystem
from .transform import PARTIAL_SUM

SOLVERS = ("auto", "pcg", "ppcg", "gmres")


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"{stage}: {err}")
        self.stage = stage


@dataclass
class HybridSolver:
    """Set up once per matrix, solve for any number of right-hand sides."""

    system: SaddleSystem
    s_x: int
    transform: str = PARTIAL_SUM
    block_by: str = "auto"
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.system
        lay = k.layout
        stage = "decompose"
        try:
            t0 = time.perf_counter()
            self.decomposition = decompose(GridSpec(lay.dim, lay.n_x, self.s_x), k)
            stage = "eliminate_interiors"
            self.factor_state = eliminate_interiors(k, self.decomposition)
            stage = "build_preconditioner"
            self.preconditioner = drop_and_factor(self.factor_state, k, self.transform,
                                                  self.block_by)
            self.timings["setup"] = time.perf_counter() - t0
        except Exception as err:  # label the failing stage
            raise StageError(stage, err) from err

    @property
    def schur(self):
        return self.factor_state.schur

    @property
    def n_velocity_schur(self) -> int:
        return self.factor_state.n_velocity_schur

    def default_method(self) -> str:
        if not self.system.symmetric:
            return "gmres"
        return "ppcg" if self.system.m else "pcg"

    def solve(self, b: np.ndarray, tol: float = 1e-8, method: str = "auto", maxit: int = 1000):
        """Returns ``(x, trace)`` for ``K x = b``; the tolerance applies to the
        Schur residual."""
        if method not in SOLVERS:
            raise ValueError(f"unknown solver {method!r}; choose from {SOLVERS}")
        if method == "auto":
            method = self.default_method()
        k, fs = self.system, self.factor_state
        t0 = time.perf_counter()
        g, fwd = fs.condense_rhs(np.asarray(b, dtype=float))
        S, nv, pc = fs.schur, fs.n_velocity_schur, self.preconditioner
        if method == "pcg":
            xs, tr = pcg(S, pc, g, tol, maxit)
        elif method == "ppcg":
            if k.m == 0:
                raise ValueError("ppcg needs a saddle system; use pcg")
            ctx = ConstraintContext(nv, S[:nv, nv:], g[nv:])
            xs, tr = ppcg(S, pc, ctx, g, tol, maxit)
        else:
            xs, tr = gmres(S, pc, g, tol, maxit)
        x = fs.expand_solution(xs, fwd, k.size)
        self.timings["solve"] = time.perf_counter() - t0
        return x, tr
