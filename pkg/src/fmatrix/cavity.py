"""Lid-driven cavity: steady Navier-Stokes on a stretched C-grid.

Finite volumes with a skew-symmetric (energy conserving) convection operator
and no artificial diffusion.  The grid is stretched towards the walls with a
tanh map.  Unknowns are the fluxes ``q = |face| u`` through the cell faces,
and every momentum row is divided by its face area, so that the gradient has
entries of magnitude 1:

    A_q = D^{-1} A_u D^{-1},   B_q = D^{-1} B_u,   D = diag(|face|).

Residual (velocity form):  N(u) u + (1/Re) L u + B_u p - f = 0,  B_u^T u = 0,
with ``L`` the (positive) vector Laplacian and ``f`` the lid forcing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .problems import _cgrid_blocks, _linear, cgrid_gradient, cgrid_layout, vector_laplacian
from .saddle import SaddleSystem
from .sparse import as_csr

log = logging.getLogger(__name__)

LID_SPEED = 1.0
DEFAULT_SX = 8


def stretched_widths(n_x: int, ratio: float = 5.0) -> np.ndarray:
    """Cell widths on [0, 1] from ``x = (1 + tanh(d (2 s - 1)) / tanh d) / 2``,
    with ``d`` chosen so that (largest width) / (smallest width) = ``ratio``."""
    if ratio < 1.0:
        raise ValueError("the mesh ratio must be >= 1")
    s = np.arange(n_x + 1) / n_x

    def widths(d):
        if d == 0.0:
            return np.full(n_x, 1.0 / n_x)
        x = 0.5 * (1.0 + np.tanh(d * (2 * s - 1)) / np.tanh(d))
        return np.diff(x)

    def excess(d):
        w = widths(d)
        return w.max() / w.min() - ratio

    if ratio == 1.0 or n_x < 3:
        return widths(0.0)
    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 64:
            raise ValueError(f"mesh ratio {ratio} is not reachable with n_x={n_x}")
    return widths(so.brentq(excess, 1e-8, hi, xtol=1e-14))


@dataclass
class CavityGrid:
    n_x: int
    widths: list  # one array per direction
    area: np.ndarray  # face area per velocity unknown
    L: sp.csr_matrix  # vector Laplacian, velocity form
    Bu: sp.csr_matrix  # area-weighted gradient
    lid: np.ndarray  # Laplacian coefficient of the lid value per velocity row
    links: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.area.size

    @property
    def m(self) -> int:
        return self.Bu.shape[1]


def _face_area(dim, c, d, widths):
    a = np.ones(c.shape[0])
    for g in range(dim):
        if g != d:
            a = a * widths[g][c[:, g]]
    return a


def _build_links(n_x: int):
    """Convective faces of every momentum control volume.

    For row ``i`` and each of its 2*dim faces: the neighbour unknown (or -1 at
    a wall), the lid value used there, the outward sign, and the two flux
    unknowns whose mean is the mass flux through the face (-1 = wall, zero).
    """
    dim = 2
    blocks, _, n, _ = _cgrid_blocks(dim, n_x)
    rows, nbrs, bval, sgn, fa, fb = [], [], [], [], [], []
    for d, (shape, c, off) in enumerate(blocks):
        r = off + np.arange(c.shape[0])
        for e in range(dim):
            for step in (-1, 1):
                nb = c.copy()
                nb[:, e] += step
                lo, hi = (1, n_x - 1) if e == d else (0, n_x - 1)
                inside = (nb[:, e] >= lo) & (nb[:, e] <= hi)
                j = np.full(r.size, -1)
                t = nb[inside].copy()
                t[:, d] -= 1
                j[inside] = off + _linear(t, shape)
                val = np.zeros(r.size)
                if d == 0 and e == 1 and step == 1:
                    val[~inside] = LID_SPEED
                if e == d:
                    # face at the cell centre between the two d-faces
                    a = r
                    b = j
                else:
                    # e-faces at position c_e (+1 if step > 0), over cells c_d - 1 and c_d
                    eshape, _, eoff = blocks[e]
                    f = c[:, e] + (1 if step > 0 else 0)
                    ok = (f >= 1) & (f <= n_x - 1)
                    idx = []
                    for dc in (-1, 0):
                        t = c.copy()
                        t[:, e] = f
                        t[:, d] += dc
                        tt = t[ok].copy()
                        tt[:, e] -= 1
                        col = np.full(r.size, -1)
                        col[ok] = eoff + _linear(tt, eshape)
                        idx.append(col)
                    a, b = idx
                rows.append(r)
                nbrs.append(j)
                bval.append(val)
                sgn.append(np.full(r.size, float(step)))
                fa.append(a)
                fb.append(b)
    cat = np.concatenate
    return {"row": cat(rows), "nb": cat(nbrs), "bval": cat(bval), "sign": cat(sgn),
            "fa": cat(fa), "fb": cat(fb), "n": n}


def cavity_grid(n_x: int, stretch: float = 5.0) -> CavityGrid:
    if n_x < 4:
        raise ValueError("the cavity needs n_x >= 4")
    dim = 2
    w = stretched_widths(n_x, stretch)
    widths = [w] * dim
    blocks, _, n, _ = _cgrid_blocks(dim, n_x)
    area = np.concatenate([_face_area(dim, c, d, widths) for d, (_, c, _) in enumerate(blocks)])
    L = vector_laplacian(dim, n_x, widths)
    B = cgrid_gradient(dim, n_x)
    Bu = as_csr(sp.diags(area) @ B)
    # lid: u rows in the top cell layer see the wall half a cell away
    lid = np.zeros(n)
    shape0, c0, off0 = blocks[0]
    top = c0[:, 1] == n_x - 1
    hd = 0.5 * (w[c0[top, 0] - 1] + w[c0[top, 0]])
    lid[off0 + np.flatnonzero(top)] = hd / (0.5 * w[n_x - 1])
    return CavityGrid(n_x, widths, area, L, Bu, lid, _build_links(n_x))


def _fluxes(g: CavityGrid, q: np.ndarray) -> np.ndarray:
    lk = g.links
    qa = np.where(lk["fa"] >= 0, q[np.maximum(lk["fa"], 0)], 0.0)
    qb = np.where(lk["fb"] >= 0, q[np.maximum(lk["fb"], 0)], 0.0)
    return lk["sign"] * 0.5 * (qa + qb)


def convection(g: CavityGrid, u: np.ndarray) -> tuple[np.ndarray, sp.csr_matrix]:
    """Skew-symmetric convection ``N(u) u`` (velocity form) and ``N(u)``."""
    lk = g.links
    F = _fluxes(g, g.area * u)
    nb = lk["nb"]
    unb = np.where(nb >= 0, u[np.maximum(nb, 0)], lk["bval"])
    val = np.bincount(lk["row"], 0.5 * F * unb, minlength=g.n)
    keep = nb >= 0
    N = sp.coo_matrix((0.5 * F[keep], (lk["row"][keep], nb[keep])), shape=(g.n, g.n))
    return val, as_csr(N)


def convection_jacobian(g: CavityGrid, u: np.ndarray) -> sp.csr_matrix:
    """Derivative of ``N(u) u`` with respect to ``u`` (both Newton terms)."""
    lk = g.links
    _, N = convection(g, u)
    nb = lk["nb"]
    unb = np.where(nb >= 0, u[np.maximum(nb, 0)], lk["bval"])
    rows, cols, vals = [], [], []
    for key in ("fa", "fb"):
        k = lk[key]
        ok = k >= 0
        rows.append(lk["row"][ok])
        cols.append(k[ok])
        vals.append((0.25 * lk["sign"] * unb)[ok] * g.area[k[ok]])
    D = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(g.n, g.n))
    return as_csr(N + D)


@dataclass
class CavityState:
    """Flux and pressure fields at ``Re`` with Newton metadata."""

    n_x: int
    Re: float
    q: np.ndarray
    p: np.ndarray
    stretch: float = 5.0
    newton_steps: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = True
    history: list = field(default_factory=list)  # (Re, steps, final residual) per stage

    @classmethod
    def zero(cls, n_x: int, stretch: float = 5.0) -> "CavityState":
        n = 2 * n_x * (n_x - 1)
        return cls(n_x, 0.0, np.zeros(n), np.zeros(n_x * n_x), stretch)


def _check_state(g: CavityGrid, state: CavityState):
    if state.n_x != g.n_x or state.q.size != g.n or state.p.size != g.m:
        raise ValueError(f"state of size ({state.q.size}, {state.p.size}) does not match "
                         f"the n_x={g.n_x} grid ({g.n}, {g.m})")


def cavity_residual(g: CavityGrid, Re: float, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Scaled residual (momentum rows divided by the face area)."""
    u = q / g.area
    nu, _ = convection(g, u)
    mom = nu + (g.L @ u - g.lid * LID_SPEED) / Re + g.Bu @ p
    return np.concatenate([mom / g.area, g.Bu.T @ u])


def _jacobian(g: CavityGrid, Re: float, q: np.ndarray) -> SaddleSystem:
    u = q / g.area
    Ju = convection_jacobian(g, u) + g.L / Re
    Dinv = sp.diags(1.0 / g.area)
    A = as_csr(Dinv @ Ju @ Dinv)
    B = cgrid_gradient(2, g.n_x)
    return SaddleSystem(A, B, False, cgrid_layout(2, g.n_x),
                        {"kind": "cavity", "Re": Re, "pressure_nullspace": True,
                         "positive_definite": True})


def gen_cavity_jacobian(n_x: int, Re: float, state: CavityState | None = None,
                        stretch: float | None = None) -> SaddleSystem:
    """Newton Jacobian in flux unknowns at ``state`` (zero state if omitted)."""
    if Re <= 0:
        raise ValueError("Re must be positive")
    if state is None:
        state = CavityState.zero(n_x, 5.0 if stretch is None else stretch)
    g = cavity_grid(n_x, state.stretch if stretch is None else stretch)
    _check_state(g, state)
    return _jacobian(g, Re, state.q)


class NewtonDivergence(RuntimeError):
    def __init__(self, msg, last_state: CavityState | None):
        super().__init__(msg)
        self.last_state = last_state


def _newton(g: CavityGrid, Re: float, q, p, tol: float, maxit: int, s_x: int, lin_tol: float):
    from .solver import HybridSolver

    hist = []
    res = cavity_residual(g, Re, q, p)
    rn = np.linalg.norm(res)
    hist.append(rn)
    steps = 0
    while rn > tol and steps < maxit:
        k = _jacobian(g, Re, q)
        solver = HybridSolver(k, s_x)
        dx, tr = solver.solve(-res, tol=min(lin_tol, 0.1 * tol / max(rn, tol)) if rn < 1 else lin_tol,
                              method="gmres", maxit=800)
        if not np.all(np.isfinite(dx)):
            raise ArithmeticError("inner linear solve produced non-finite values")
        dq, dp = dx[:g.n], dx[g.n:]
        lam = 1.0
        while True:  # backtracking on the residual norm
            qn, pn = q + lam * dq, p + lam * dp
            new = cavity_residual(g, Re, qn, pn)
            nn = np.linalg.norm(new)
            if nn < (1 - 1e-4 * lam) * rn or lam < 1.0 / 64:
                break
            lam *= 0.5
        q, p, res, rn = qn, pn - pn.mean(), new, nn
        steps += 1
        hist.append(rn)
        log.info("Re=%g Newton step %d: |F|=%.3e (damping %g, %d inner iterations)",
                 Re, steps, rn, lam, tr.iterations)
    return q, p, steps, hist, rn <= tol


def continue_to_re(n_x: int, schedule, stretch: float = 5.0, tol: float = 1e-8,
                   maxit: int = 30, s_x: int = DEFAULT_SX, lin_tol: float = 1e-10,
                   start: CavityState | None = None) -> CavityState:
    """Newton at each Reynolds number of ``schedule``, starting from the
    previous solution (the zero state for the first one)."""
    schedule = [float(r) for r in schedule]
    if any(r <= 0 for r in schedule):
        raise ValueError("Reynolds numbers must be positive")
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("the schedule must be increasing")
    g = cavity_grid(n_x, stretch)
    if n_x < 2 * s_x:
        s_x = n_x // 2
    state = start if start is not None else CavityState.zero(n_x, stretch)
    _check_state(g, state)
    for Re in schedule:
        q, p, steps, hist, ok = _newton(g, Re, state.q.copy(), state.p.copy(), tol, maxit,
                                        s_x, lin_tol)
        if not ok:
            raise NewtonDivergence(f"Newton did not converge at Re={Re} (|F|={hist[-1]:.3e}); "
                                   f"last converged Re={state.Re}", state)
        state = CavityState(n_x, Re, q, p, stretch, steps, hist, True,
                            state.history + [(Re, steps, hist[-1])])
    return state


DEFAULT_SCHEDULE = (500.0, 1000.0, 2000.0, 4000.0, 8000.0)


def cavity_benchmark_system(n_x: int, Re: float, stretch: float = 5.0,
                            schedule=None) -> SaddleSystem:
    """Jacobian of the first Newton step at ``Re``, starting from the
    converged solution at the previous Reynolds number of the schedule.

    Without a smaller Reynolds number in the schedule the start is the
    converged solution at ``Re`` itself.  When the start comes from a smaller
    Reynolds number ``meta['rhs']`` holds the first Newton right-hand side
    ``-F(start)`` at ``Re``.
    """
    if schedule is None:
        schedule = [r for r in DEFAULT_SCHEDULE if r < Re] or [Re]
    prev = continue_to_re(n_x, schedule, stretch)
    k = gen_cavity_jacobian(n_x, Re, prev)
    k.meta["start_Re"] = prev.Re
    if prev.Re < Re:
        k.meta["rhs"] = cavity_rhs(n_x, Re, prev)
    return k


def cavity_rhs(n_x: int, Re: float, state: CavityState | None = None,
               stretch: float = 5.0) -> np.ndarray:
    """Newton right-hand side ``-F(state)`` matching :func:`gen_cavity_jacobian`."""
    if state is None:
        state = CavityState.zero(n_x, stretch)
    g = cavity_grid(n_x, state.stretch)
    return -cavity_residual(g, Re, state.q, state.p)
