"""Structure-preserving elimination of saddle point systems.

V-nodes are ordered by minimum degree on F(A) u F(BB^T); P-nodes are inserted
on the fly: a V-node that still couples to a P-node is eliminated together
with it as a 2x2 pivot [alpha beta; beta' 0].  Eliminating such a V-node on its
own would put fill into the zero block, so plans that try it are rejected.

The numerical work is done on dense local arrays, updating only the rows and
columns in the current pivot's neighbourhood; this keeps subdomain-sized
problems fast while the pivot sequence stays exactly that of the sparse
algorithm.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .saddle import SaddleSystem
from .sparse import Pattern, Permutation, as_csr, fill_reducing_ordering

CANCEL_TOL = 1e-13
DENSE_LIMIT = 8000


class PivotBreakdown(ArithmeticError):
    def __init__(self, msg, step=None, subdomain=None):
        super().__init__(msg)
        self.step = step
        self.subdomain = subdomain


class PlanError(ValueError):
    pass


@dataclass
class EliminationPlan:
    """``pivot_log`` entries are ``("single", v)`` or ``("pair", v, p)`` with
    indices of the system the plan was made for."""

    v_order: Permutation
    pivot_log: list
    scope: np.ndarray

    @property
    def n_pairs(self) -> int:
        return sum(1 for e in self.pivot_log if e[0] == "pair")


@dataclass
class PivotStep:
    piv: np.ndarray
    D: np.ndarray
    nbr: np.ndarray
    C: np.ndarray  # K[nbr, piv] at elimination time
    R: np.ndarray  # K[piv, nbr] at elimination time


@dataclass
class LocalFactor:
    """Partial factorisation of a local index set ``index`` (global ids).

    Steps refer to positions in ``index``; the positions never pivoted on form
    the remaining Schur complement ``schur`` (dense, in ``rest`` order).
    """

    index: np.ndarray
    steps: list
    rest: np.ndarray
    schur: np.ndarray
    nnz_factor: int = 0  # pivots plus couplings among eliminated unknowns
    nnz_coupling: int = 0  # couplings from eliminated to remaining unknowns

    def forward(self, y_loc: np.ndarray) -> np.ndarray:
        y = np.array(y_loc, dtype=float)
        for st in self.steps:
            if st.nbr.size:
                y[st.nbr] -= st.C @ np.linalg.solve(st.D, y[st.piv])
        return y

    def backward(self, y_loc: np.ndarray, x_loc: np.ndarray) -> np.ndarray:
        """``y_loc`` from :meth:`forward`; ``x_loc`` holds the remaining unknowns."""
        x = np.array(x_loc, dtype=float)
        for st in reversed(self.steps):
            rhs = y_loc[st.piv] - (st.R @ x[st.nbr] if st.nbr.size else 0.0)
            x[st.piv] = np.linalg.solve(st.D, rhs)
        return x

    def solve(self, b_loc: np.ndarray) -> np.ndarray:
        """Full solve; only valid when nothing remains."""
        if self.rest.size:
            y = self.forward(b_loc)
            x = np.zeros_like(y)
            x[self.rest] = np.linalg.solve(self.schur, y[self.rest])
            return self.backward(y, x)
        return self.backward(self.forward(b_loc), np.zeros(len(b_loc)))


@dataclass
class FactorState:
    subdomain_factors: list
    schur: sp.csr_matrix
    schur_vars: np.ndarray
    n_velocity_schur: int
    fill_counters: dict = field(default_factory=dict)
    decomposition: object = None
    interior_factor_map: dict = field(default_factory=dict)

    def condense_rhs(self, b: np.ndarray) -> tuple[np.ndarray, list]:
        """Forward-eliminate the interiors: returns the Schur right-hand side
        and the per-subdomain forward vectors needed for back substitution."""
        g = np.array(b, dtype=float)
        fwd = []
        for f in self.subdomain_factors:
            y0 = b[f.index]
            y = f.forward(y0)
            fwd.append(y)
            g[f.index[f.rest]] += y[f.rest] - y0[f.rest]
        return g[self.schur_vars], fwd

    def expand_solution(self, x_schur: np.ndarray, fwd: list, size: int) -> np.ndarray:
        x = np.zeros(size)
        x[self.schur_vars] = x_schur
        for f, y in zip(self.subdomain_factors, fwd):
            xl = np.zeros(f.index.size)
            xl[f.rest] = x[f.index[f.rest]]
            xl = f.backward(y, xl)
            x[f.index] = np.where(np.isin(np.arange(f.index.size), f.rest), x[f.index], xl)
        return x


def _plan_local(M: np.ndarray, is_p: np.ndarray, elim_mask: np.ndarray):
    """Rule-1 pivot list on a dense local array (local positions).

    Returns ``(v_order, log)`` where ``v_order`` lists the eliminated V
    positions in minimum-degree order.  The B-part of every Schur complement
    does not depend on A, so the dynamic pairing (including couplings that
    cancel) is decided by tracking B alone.
    """
    elim = np.flatnonzero(elim_mask)
    ev = elim[~is_p[elim]]
    ep = elim[is_p[elim]]
    Aev = (M[np.ix_(ev, ev)] != 0)
    graph = Aev | Aev.T
    if ep.size:
        Bf = (M[np.ix_(ev, ep)] != 0).astype(np.int64)
        graph = graph | ((Bf @ Bf.T) > 0)
    r, c = np.nonzero(graph)
    order = fill_reducing_ordering(Pattern.from_arrays(ev.size, ev.size, r, c))
    vpos = np.flatnonzero(~is_p)
    ppos = np.flatnonzero(is_p)
    rows, cols = {}, {}
    if ppos.size:
        blk = M[np.ix_(vpos, ppos)]
        for a, b in zip(*np.nonzero(blk)):
            v, p = int(vpos[a]), int(ppos[b])
            rows.setdefault(v, {})[p] = float(blk[a, b])
            cols.setdefault(p, {})[v] = float(blk[a, b])
    open_p = set(int(p) for p in ep)
    log = []
    v_order = []
    for pos in order.forward:
        v = int(ev[pos])
        v_order.append(v)
        coupled = rows.get(v, {})
        cand = sorted(p for p in coupled if p in open_p)
        if not cand:
            if coupled:
                raise PlanError(f"V-node {v} couples only to P-nodes outside the scope; "
                                "eliminating it alone would fill the zero block")
            log.append(("single", v))
            rows.pop(v, None)
            continue
        p = cand[0]
        log.append(("pair", v, p))
        beta = coupled[p]
        b = {q: x for q, x in coupled.items() if q != p}
        bhat = {w: x for w, x in cols.get(p, {}).items() if w != v}
        for w, bw in bhat.items():
            rw = rows[w]
            rw.pop(p, None)
            for q, bq in b.items():
                val = rw.get(q, 0.0) - bw * bq / beta
                if abs(val) <= CANCEL_TOL:
                    rw.pop(q, None)
                    cols[q].pop(w, None)
                else:
                    rw[q] = val
                    cols.setdefault(q, {})[w] = val
        for q in b:
            cols[q].pop(v, None)
        rows.pop(v, None)
        cols.pop(p, None)
        open_p.discard(p)
    if open_p:
        raise PlanError(f"P-nodes {sorted(open_p)[:5]} (local) have no V-node left to pair with "
                        "(structurally singular)")
    return v_order, log


def _local_index(k: SaddleSystem, scope: np.ndarray) -> np.ndarray:
    """Scope followed by its neighbours outside the scope."""
    if scope.size == k.size:
        return np.arange(k.size)
    K = k.K
    nbrs = np.unique(np.concatenate([K[scope].indices, K.tocsc()[:, scope].indices]))
    return np.concatenate([scope, np.setdiff1d(nbrs, scope)])


def plan_elimination(k: SaddleSystem, scope=None) -> EliminationPlan:
    """Order the scope's V-nodes on F(A) u F(BB^T) and insert its P-nodes by Rule 1."""
    scope = np.arange(k.size) if scope is None else np.sort(np.asarray(scope, dtype=int))
    index = _local_index(k, scope)
    if index.size > DENSE_LIMIT:
        raise MemoryError(f"{index.size} unknowns exceeds the dense elimination limit")
    M = k.K[index][:, index].toarray()
    is_p = index >= k.n
    elim = np.zeros(index.size, dtype=bool)
    elim[:scope.size] = True
    v_order, log = _plan_local(M, is_p, elim)
    glog = [(e[0],) + tuple(int(index[i]) for i in e[1:]) for e in log]
    vs = scope[scope < k.n]
    pos = {int(g): i for i, g in enumerate(vs)}
    perm = Permutation.from_order([pos[int(index[v])] for v in v_order])
    return EliminationPlan(perm, glog, scope)


def _eliminate_dense(M: np.ndarray, is_p: np.ndarray, steps_plan, symmetric: bool,
                     subdomain=None):
    """Execute a pivot list on the dense array ``M`` (modified in place).

    ``steps_plan`` holds tuples of local positions.  Returns the recorded steps
    and nnz counts (factor part, coupling-to-remaining part).
    """
    L = M.shape[0]
    active = np.ones(L, dtype=bool)
    struct = M != 0
    elim_mask = np.zeros(L, dtype=bool)
    for entry in steps_plan:
        elim_mask[list(entry[1:])] = True
    steps = []
    nnz_factor = nnz_coupling = 0
    for si, entry in enumerate(steps_plan):
        piv = np.array(entry[1:], dtype=int)
        active[piv] = False
        if entry[0] == "single":
            v = piv[0]
            pc = np.flatnonzero(is_p & active & (struct[v] | struct[:, v]))
            if pc.size and np.max(np.abs(M[v, pc])) > CANCEL_TOL:
                raise PlanError(f"step {si}: V-node pivot alone while still coupled to a P-node "
                                "would fill the zero block")
        nb = np.flatnonzero(active & (struct[piv].any(axis=0) | struct[:, piv].any(axis=1)))
        D = M[np.ix_(piv, piv)].copy()
        if piv.size == 1:
            if abs(D[0, 0]) == 0.0:
                raise PivotBreakdown(f"zero pivot at step {si}", si, subdomain)
        elif abs(D[0, 1] * D[1, 0]) == 0.0:
            raise PivotBreakdown(f"zero 2x2 pivot determinant at step {si}", si, subdomain)
        C = M[np.ix_(nb, piv)].copy()
        R = M[np.ix_(piv, nb)].copy()
        if nb.size:
            upd = C @ np.linalg.solve(D, R)
            M[np.ix_(nb, nb)] -= upd
            struct[np.ix_(nb, nb)] |= (C != 0).any(axis=1)[:, None] & (R != 0).any(axis=0)[None, :]
            pn = nb[is_p[nb]]
            if pn.size:
                # the zero block stays exactly zero; tiny V-P couplings have cancelled
                M[np.ix_(pn, pn)] = 0.0
                struct[np.ix_(pn, pn)] = False
                vn = nb[~is_p[nb]]
                blk = M[np.ix_(vn, pn)]
                small = np.abs(blk) <= CANCEL_TOL
                if small.any():
                    blk[small] = 0.0
                    M[np.ix_(vn, pn)] = blk
                    s = struct[np.ix_(vn, pn)]
                    s[small] = False
                    struct[np.ix_(vn, pn)] = s
                    blkT = M[np.ix_(pn, vn)]
                    smallT = np.abs(blkT) <= CANCEL_TOL
                    blkT[smallT] = 0.0
                    M[np.ix_(pn, vn)] = blkT
                    s = struct[np.ix_(pn, vn)]
                    s[smallT] = False
                    struct[np.ix_(pn, vn)] = s
        # full (L and U) counts with the pivot block once; symmetric storage is
        # not exploited so that the figures match unsymmetric runs
        in_elim = elim_mask[nb]
        cnz = (C != 0)
        rnz = (R != 0)
        nnz_factor += int(np.count_nonzero(D)) + int(cnz[in_elim].sum() + rnz[:, in_elim].sum())
        nnz_coupling += int(cnz[~in_elim].sum() + rnz[:, ~in_elim].sum())
        steps.append(PivotStep(piv, D, nb, C, R))
    return steps, nnz_factor, nnz_coupling


def _local_plan(plan: EliminationPlan, index: np.ndarray) -> list:
    pos = {int(g): i for i, g in enumerate(index)}
    return [(e[0],) + tuple(pos[g] for g in e[1:]) for e in plan.pivot_log]


def eliminate(k: SaddleSystem, plan: EliminationPlan) -> LocalFactor:
    """Exact Gaussian elimination of the planned unknowns of ``k``.

    Operates on the scope plus its neighbours; the Schur complement on the
    neighbours (minus their original block) is returned in ``schur`` when the
    scope is not everything.
    """
    K = k.K
    scope = np.asarray(plan.scope, dtype=int)
    index = _local_index(k, scope)
    if index.size > DENSE_LIMIT:
        raise MemoryError(f"{index.size} unknowns exceeds the dense elimination limit")
    M = K[index][:, index].toarray()
    is_p = index >= k.n
    steps, nf, nc = _eliminate_dense(M, is_p, _local_plan(plan, index), k.symmetric)
    rest = np.arange(scope.size, index.size) if scope.size != k.size else np.zeros(0, int)
    return LocalFactor(index, steps, rest, M[np.ix_(rest, rest)], nf, nc)


def ldl_matrices(f: LocalFactor, n: int):
    """Dense (L, D, U) with K = L D U for a full factorisation (tests, small n)."""
    L = np.eye(n)
    U = np.eye(n)
    D = np.zeros((n, n))
    for st in f.steps:
        D[np.ix_(st.piv, st.piv)] = st.D
        Dinv = np.linalg.inv(st.D)
        L[np.ix_(st.nbr, st.piv)] = st.C @ Dinv
        U[np.ix_(st.piv, st.nbr)] = Dinv @ st.R
    return L, D, U


def schur_sequence(k: SaddleSystem, plan: EliminationPlan | None = None):
    """All intermediate Schur complements (dense) of a full elimination,
    as ``(remaining global indices, matrix)`` after every pivot step."""
    plan = plan or plan_elimination(k)
    M = k.K.toarray()
    is_p = np.arange(k.size) >= k.n
    out = []
    remaining = np.ones(k.size, dtype=bool)
    for entry in plan.pivot_log:
        _eliminate_dense(M, is_p, [entry], k.symmetric)
        piv = list(entry[1:])
        M[piv, :] = 0.0  # eliminated unknowns drop out of later steps
        M[:, piv] = 0.0
        remaining[piv] = False
        idx = np.flatnonzero(remaining)
        out.append((idx, M[np.ix_(idx, idx)].copy()))
    return out


def _ground_pressure(k: SaddleSystem):
    """Index of one pressure to pin when B annihilates the constant pressure."""
    if k.m == 0:
        return None
    if np.max(np.abs(k.B @ np.ones(k.m)), initial=0.0) > 1e-12:
        return None
    return k.n + k.m - 1


def grounded(k: SaddleSystem, pg: int) -> SaddleSystem:
    """Replace pressure ``pg``'s row and column by the identity (zero B column)."""
    B = k.B.tolil(copy=True)
    B[:, pg - k.n] = 0
    return k.with_values(B=as_csr(B))


def factorize(k: SaddleSystem, ground: bool = True):
    """Full Rule-1 factorisation; returns ``(factor, grounded pressure or None)``."""
    pg = _ground_pressure(k) if ground else None
    kk = k
    if pg is not None:
        kk = grounded(k, pg)
        # the grounded pressure is now isolated: eliminate it as an identity pivot
        scope = np.setdiff1d(np.arange(k.size), [pg])
        plan = plan_elimination(kk, scope)
        plan.pivot_log.append(("single", pg))
        plan = EliminationPlan(plan.v_order, plan.pivot_log, np.arange(k.size))
        K = kk.K.tolil()
        K[pg, pg] = 1.0
        M = K.toarray()
        is_p = np.arange(k.size) >= k.n
        log = list(plan.pivot_log)
        steps, nf, nc = _eliminate_dense(M, is_p & (np.arange(k.size) != pg), log, k.symmetric)
        return LocalFactor(np.arange(k.size), steps, np.zeros(0, int), np.zeros((0, 0)), nf, nc), pg
    plan = plan_elimination(kk)
    return eliminate(kk, plan), None


def direct_solve(k: SaddleSystem, b: np.ndarray, compat_tol: float = 1e-10) -> np.ndarray:
    """Solve K x = b by the structure-preserving direct method.

    With a constant-pressure null space the right-hand side must be compatible
    and the returned pressure has zero mean.
    """
    b = np.asarray(b, dtype=float)
    f, pg = factorize(k)
    if pg is not None:
        bp = b[k.n:]
        if abs(bp.sum()) > compat_tol * max(np.linalg.norm(b), 1.0) * np.sqrt(k.m):
            raise ValueError("right-hand side is incompatible with the pressure null space")
        b = b.copy()
        b[pg] = 0.0
    x = f.solve(b)
    if pg is not None:
        x[k.n:] -= x[k.n:].mean()
    return x


def _signature(M: np.ndarray, is_p: np.ndarray, n_elim: int) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(M).tobytes())
    h.update(is_p.tobytes())
    h.update(str(n_elim).encode())
    return h.hexdigest()


def eliminate_interiors(k: SaddleSystem, d, cache: bool = True) -> FactorState:
    """Eliminate every subdomain's interior and assemble the Schur complement
    on separator velocities, corner velocities and retained pressures."""
    K = k.K
    Kc = K.tocsc()
    schur_vars = d.schur_variables
    spos = np.full(k.size, -1, dtype=int)
    spos[schur_vars] = np.arange(schur_vars.size)
    memo = {}
    factors = []
    rows, cols, vals = [], [], []
    nnz_a = nnz_b = 0
    for sd in range(d.n_subdomains):
        inner = d.interiors(sd)
        if inner.size == 0:
            continue
        nbrs = np.unique(np.concatenate([K[inner].indices, Kc[:, inner].indices]))
        outer = np.setdiff1d(nbrs, inner)
        if np.any(spos[outer] < 0):
            raise ValueError(f"subdomain {sd} interior touches another subdomain's interior")
        index = np.concatenate([inner, outer])
        M = K[index][:, index].toarray()
        M[inner.size:, inner.size:] = 0.0
        is_p = index >= k.n
        sig = _signature(M, is_p, inner.size) if cache else None
        if sig is not None and sig in memo:
            steps, nf, nc, contrib = memo[sig]
        else:
            elim = np.zeros(index.size, dtype=bool)
            elim[:inner.size] = True
            try:
                _, local = _plan_local(M, is_p, elim)
            except PlanError as err:
                raise PlanError(f"subdomain {sd}: {err}") from err
            try:
                steps, nf, nc = _eliminate_dense(M, is_p, local, k.symmetric, subdomain=sd)
            except PivotBreakdown as err:
                err.subdomain = sd
                raise
            contrib = M[inner.size:, inner.size:].copy()
            if sig is not None:
                memo[sig] = (steps, nf, nc, contrib)
        rest = np.arange(inner.size, index.size)
        factors.append(LocalFactor(index, steps, rest, contrib, nf, nc))
        nnz_a += nf
        nnz_b += nc
        r, c = np.nonzero(contrib)
        rows.append(spos[outer[r]])
        cols.append(spos[outer[c]])
        vals.append(contrib[r, c])
    base = K[schur_vars][:, schur_vars].tocoo()
    rows.append(base.row)
    cols.append(base.col)
    vals.append(base.data)
    S = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(schur_vars.size, schur_vars.size))
    S = as_csr(S)
    # exact zeros in the pressure block and cancelled B entries
    nv = int(np.sum(schur_vars < k.n))
    S = _clean_schur(S, nv)
    nnz_S = S.nnz
    counters = {"a": nnz_a, "b": nnz_b, "schur": nnz_S, "nnz_K": k.nnz, "unique_subdomains": len(memo)}
    return FactorState(factors, S, schur_vars, nv, counters, d)


def _clean_schur(S: sp.csr_matrix, nv: int) -> sp.csr_matrix:
    S = S.tocoo()
    pp = (S.row >= nv) & (S.col >= nv)
    vp = ((S.row >= nv) ^ (S.col >= nv)) & (np.abs(S.data) <= CANCEL_TOL)
    keep = ~(pp | vp) & (S.data != 0)
    return as_csr(sp.coo_matrix((S.data[keep], (S.row[keep], S.col[keep])), shape=S.shape))
