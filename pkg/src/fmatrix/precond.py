"""Structural dropping preconditioner on the transformed Schur complement.

After the separator transform every group holds one summed unknown (V_Sigma)
carrying all pressure couplings.  The preconditioner keeps

* the diagonal block of each group's remaining (non-Sigma) unknowns, and
* the reduced system on V_Sigma nodes, corner velocities and retained
  pressures, which is again an F-matrix and is factored by Rule 1,

and drops every other coupling.  Nothing is dropped by value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .factor import factorize
from .saddle import SaddleSystem
from .sparse import as_csr
from .transform import PARTIAL_SUM, SchurTransform, make_schur_transform, transform_schur

REDUCED_DENSE_MAX = 4000


@dataclass
class _Block:
    pos: np.ndarray
    lu: tuple
    chol: bool
    nnz: int

    def solve(self, r):
        if self.chol:
            return sla.cho_solve(self.lu, r, check_finite=False)
        return sla.lu_solve(self.lu, r, check_finite=False)


def _factor_block(blk: np.ndarray, symmetric: bool, gi: int) -> _Block:
    k = blk.shape[0]
    try:
        if symmetric:
            c = sla.cho_factor(blk, lower=True, check_finite=False)
            nnz = 2 * int(np.count_nonzero(np.tril(c[0]))) - k  # L and L^T, diagonal once
            return _Block(None, c, True, nnz)
        lu = sla.lu_factor(blk, check_finite=False)
        if np.min(np.abs(np.diag(lu[0])), initial=np.inf) == 0.0:
            raise sla.LinAlgError("singular")
        nnz = int(np.count_nonzero(lu[0]))  # strict L and U share one array
        return _Block(None, lu, False, nnz)
    except sla.LinAlgError as err:
        raise ValueError(f"non-Sigma block of group {gi} is singular; the transform or "
                         "decomposition is inconsistent") from err


@dataclass
class ReducedFactor:
    """Direct factor of the reduced system with an optional grounded pressure."""

    system: SaddleSystem
    ground: int | None
    nnz: int
    _rule1: object = None
    _lu: object = None

    def solve(self, r: np.ndarray) -> np.ndarray:
        r = np.array(r, dtype=float)
        if self.ground is not None:
            r[self.ground] = 0.0
        x = self._rule1.solve(r) if self._rule1 is not None else self._lu.solve(r)
        return x


def factor_reduced(k: SaddleSystem) -> ReducedFactor:
    """Rule-1 elimination for moderate sizes; above ``REDUCED_DENSE_MAX``
    unknowns SuperLU with a symmetric minimum-degree ordering and diagonal
    pivoting (pairs each V with its P by ordering)."""
    if k.size <= REDUCED_DENSE_MAX:
        f, pg = factorize(k)
        return ReducedFactor(k, pg, f.nnz_factor + f.nnz_coupling, _rule1=f)
    from .factor import _ground_pressure, grounded
    pg = _ground_pressure(k)
    kk = grounded(k, pg) if pg is not None else k
    K = kk.K.tolil()
    if pg is not None:
        K[pg, pg] = 1.0
    lu = spla.splu(as_csr(K).tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    nnz = lu.L.nnz + lu.U.nnz - k.size
    return ReducedFactor(k, pg, int(nnz), _lu=lu)


@dataclass
class Preconditioner:
    transform: SchurTransform
    st: sp.csr_matrix
    vsigma: np.ndarray  # transformed positions kept in the reduced system (velocities)
    pressures: np.ndarray
    blocks: list
    reduced: SaddleSystem
    reduced_factor: ReducedFactor
    dropped_nnz: int
    symmetric: bool
    fill: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.st.shape[0]

    @property
    def reduced_index(self) -> np.ndarray:
        return np.concatenate([self.vsigma, self.pressures])

    def apply_transformed(self, r_t: np.ndarray) -> np.ndarray:
        z = np.zeros_like(r_t)
        for b in self.blocks:
            z[b.pos] = b.solve(r_t[b.pos])
        red = self.reduced_index
        z[red] = self.reduced_factor.solve(r_t[red])
        return z

    def apply(self, r: np.ndarray) -> np.ndarray:
        """``z = M^{-1} r`` in the untransformed Schur basis."""
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.n:
            raise ValueError(f"vector of length {r.shape[0]} for a preconditioner of size {self.n}")
        return self.transform.apply(self.apply_transformed(self.transform.apply_T(r)))

    def __call__(self, r):
        return self.apply(r)

    def matrix_transformed(self) -> sp.csr_matrix:
        """The kept part of ``S_t`` (structural dropping applied)."""
        keep = self.keep_mask()
        St = self.st.tocoo()
        sel = keep[St.row, St.col]
        return as_csr(sp.coo_matrix((St.data[sel], (St.row[sel], St.col[sel])), shape=St.shape))

    def keep_mask(self):
        return _KeepMask(self)

    def matrix(self) -> sp.csr_matrix:
        """``M = T^{-T} M_t T^{-1}`` assembled (tests and dense checks)."""
        Ti = self._inverse_transform()
        return as_csr(Ti.T @ self.matrix_transformed() @ Ti)

    def _inverse_transform(self) -> sp.csr_matrix:
        cols = [self.transform.apply_inv(e) for e in np.eye(self.n)] if self.n <= 3000 else None
        if cols is None:
            raise MemoryError("inverse transform assembly is for desk-scale checks only")
        return as_csr(sp.csr_matrix(np.array(cols).T))


class _KeepMask:
    """Vectorised lookup ``mask[row, col]`` for the structural dropping rule."""

    def __init__(self, p: Preconditioner):
        label = np.full(p.n, -1, dtype=int)
        for bi, b in enumerate(p.blocks):
            label[b.pos] = bi
        label[p.reduced_index] = len(p.blocks)
        self.label = label

    def __getitem__(self, idx):
        r, c = idx
        return (self.label[r] == self.label[c]) & (self.label[r] >= 0)


def identify_vsigma(st: sp.csr_matrix, tr: SchurTransform, d, nv: int,
                    corner_positions: np.ndarray) -> np.ndarray:
    """Summed unknown of every group plus the corner velocities.

    Raises when a non-summed unknown still couples to a pressure, i.e. when a
    group would contribute more than one V_Sigma node.
    """
    sig = tr.sigma_positions()
    vs = np.sort(np.concatenate([sig, np.asarray(corner_positions, dtype=int)]))
    if nv < st.shape[0]:
        Bt = as_csr(st[:nv, nv:])
        coupled = np.flatnonzero(np.diff(Bt.indptr) > 0)
        extra = np.setdiff1d(coupled, vs)
        if extra.size:
            owner = {int(p): gi for gi, (pos, _, _, _) in enumerate(tr.groups) for p in pos}
            bad = sorted({owner.get(int(e), -1) for e in extra})
            raise ValueError(f"groups {bad[:10]} keep more than one pressure-coupled velocity "
                             "after the transform")
    return vs


def build_preconditioner(st: sp.csr_matrix, vsigma: np.ndarray, tr: SchurTransform, nv: int,
                         symmetric: bool = True, block_of=None) -> Preconditioner:
    """``block_of[g]`` names the dropping block of transform group ``g``;
    groups sharing a name keep their mutual non-Sigma couplings.  By default
    every transform group is its own block."""
    st = as_csr(st)
    n = st.shape[0]
    in_sigma = np.zeros(n, dtype=bool)
    in_sigma[vsigma] = True
    if block_of is None:
        block_of = list(range(len(tr.groups)))
    members = {}
    for gi, (pos, _, _, _) in enumerate(tr.groups):
        members.setdefault(block_of[gi], []).append(pos[~in_sigma[pos]])
    blocks = []
    nnz_c = 0
    for bi, (name, parts) in enumerate(members.items()):
        rest = np.concatenate(parts)
        if rest.size == 0:
            continue
        blk = st[rest][:, rest].toarray()
        b = _factor_block(blk, symmetric, name)
        b.pos = rest
        blocks.append(b)
        nnz_c += b.nnz
    pressures = np.arange(nv, n)
    red = np.concatenate([vsigma, pressures])
    Sr = st[red][:, red]
    nvs = vsigma.size
    reduced = SaddleSystem(as_csr(Sr[:nvs, :nvs]), as_csr(Sr[:nvs, nvs:]), symmetric)
    rf = factor_reduced(reduced)
    pre = Preconditioner(tr, st, vsigma, pressures, blocks, reduced, rf, 0, symmetric)
    kept = pre.matrix_transformed().nnz
    pre.dropped_nnz = st.nnz - kept
    pre.fill = {"c": nnz_c, "reduced": rf.nnz}
    return pre


def drop_and_factor(fs, k: SaddleSystem, kind: str = PARTIAL_SUM,
                    block_by: str = "auto") -> Preconditioner:
    """Steps after interior elimination: transform, identify V_Sigma, drop, factor.

    Transforms act per velocity component.  ``block_by="separator"`` keeps the
    non-Sigma unknowns of all components on one separator in one block;
    ``"component"`` splits them per component; ``"auto"`` uses separator
    blocks in 2D and component blocks in 3D.
    """
    if block_by not in ("auto", "separator", "component"):
        raise ValueError(f"unknown block_by {block_by!r}")
    S, nv, d = fs.schur, fs.n_velocity_schur, fs.decomposition
    if block_by == "auto":
        block_by = "separator" if d.grid.dim == 2 else "component"
    tr = make_schur_transform(S, d, fs.schur_vars, nv, kind)
    st = transform_schur(S, tr)
    pos_of = np.full(k.size, -1, dtype=int)
    pos_of[fs.schur_vars] = np.arange(fs.schur_vars.size)
    corners = pos_of[d.corner_velocities]
    vs = identify_vsigma(st, tr, d, nv, corners)
    if block_by == "separator":
        block_of = [g.key[1] if g.key else gi for gi, g in enumerate(d.groups)]
    else:
        block_of = None
    return build_preconditioner(st, vs, tr, nv, k.symmetric, block_of)


def _split_blocks(st, vsigma, nv):
    st = as_csr(st)
    n = st.shape[0]
    v = np.arange(nv)
    two = np.intersect1d(np.asarray(vsigma, dtype=int), v)
    one = np.setdiff1d(v, two)
    A = st[:nv][:, :nv].toarray()
    return A[np.ix_(one, one)], A[np.ix_(one, two)], A[np.ix_(two, two)]


def estimate_gamma(st, vsigma, nv: int | None = None) -> float:
    """Strengthened Cauchy-Schwarz constant between the non-Sigma and Sigma
    velocity spaces: ``gamma^2 = lambda_max(A21 A11^{-1} A12, A22)``.

    Dense; the null space of ``A22`` (if any) is projected out.
    """
    st = as_csr(st)
    nv = st.shape[0] if nv is None else nv
    A11, A12, A22 = _split_blocks(st, vsigma, nv)
    if A12.size == 0 or not np.any(A12):
        return 0.0
    w, V = np.linalg.eigh(0.5 * (A22 + A22.T))
    if w.min() < -1e-10 * max(abs(w).max(), 1.0):
        raise ValueError("A22 is indefinite")
    Q = V[:, w > 1e-12 * w.max()]
    C = A12.T @ np.linalg.solve(A11, A12)
    C = 0.5 * (C + C.T)
    lam = sla.eigh(Q.T @ C @ Q, Q.T @ A22 @ Q, eigvals_only=True)
    return float(np.sqrt(max(lam.max(), 0.0)))


def _symbol(stencil: dict, theta: np.ndarray) -> np.ndarray:
    """``sum_j s_j e^{i j theta}`` with the constant part removed analytically
    near ``theta = 0`` so that small symbols keep full relative accuracy."""
    out = np.zeros(theta.shape, dtype=complex)
    for j, s in stencil.items():
        # e^{i j t} = 1 + (e^{i j t} - 1); the second term via expm1
        out += s * np.expm1(1j * j * theta)
    out += sum(stencil.values())
    return out


def estimate_gamma_symbol(a11: dict, a12: dict, a22: dict, samples: int = 20001) -> float:
    """Strengthened Cauchy-Schwarz constant of translation-invariant blocks.

    Each argument maps an offset to a stencil coefficient.  ``gamma^2`` is the
    supremum over ``theta in (0, pi]`` of ``|a12|^2 / (a11 a22)``; the sample
    maximum is refined with a bounded scalar search, and the ``theta -> 0``
    limit is included through a Taylor expansion when ``a22(0) = 0``.
    """
    from scipy.optimize import minimize_scalar

    def ratio(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        num = np.abs(_symbol(a12, t)) ** 2
        den = (_symbol(a11, t) * _symbol(a22, t)).real
        return num / den

    th = np.linspace(0.0, np.pi, samples)[1:]
    r = ratio(th)
    i = int(np.argmax(r))
    best = float(r[i])
    lo, hi = th[max(i - 1, 0)], th[min(i + 1, th.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -ratio(t)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        best = max(best, -float(res.fun))
    # limit at theta -> 0 (first nonvanishing Taylor terms)
    if abs(sum(a22.values())) < 1e-14:
        d1 = sum(j * s for j, s in a12.items())  # a12 ~ i d1 theta
        d2 = -0.5 * sum(j * j * s for j, s in a22.items())  # a22 ~ d2 theta^2
        a0 = sum(a11.values())
        if d2 > 0 and a0 > 0:
            best = max(best, d1 * d1 / (a0 * d2))
    return float(np.sqrt(best))


def two_block_preconditioner(st, vsigma, nv: int | None = None) -> sp.csr_matrix:
    """``diag(A11, A22)`` form of the dropping (only the A12 coupling removed),
    the setting of the two-level condition bound."""
    st = as_csr(st)
    nv = st.shape[0] if nv is None else nv
    lab = np.zeros(st.shape[0], dtype=int)
    lab[np.asarray(vsigma, dtype=int)] = 1
    lab[nv:] = 1
    S = st.tocoo()
    keep = lab[S.row] == lab[S.col]
    return as_csr(sp.coo_matrix((S.data[keep], (S.row[keep], S.col[keep])), shape=st.shape))


def laplace_1d_pair_blocks(m: int):
    """Periodic 1D Laplacian on ``2 m`` nodes, transformed pairwise by
    ``H = [[-1, 1], [1, 1]]`` (difference and sum of each node pair) and
    split odd/even: returns ``(A11, A12, A22)`` with the sums in ``A22``."""
    n = 2 * m
    A = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    A[0, -1] = A[-1, 0] = -1.0
    H = np.kron(np.eye(m), np.array([[-1.0, 1.0], [1.0, 1.0]]))
    T = H.T @ A @ H
    i1, i2 = np.arange(0, n, 2), np.arange(1, n, 2)
    return T[np.ix_(i1, i1)], T[np.ix_(i1, i2)], T[np.ix_(i2, i2)]
