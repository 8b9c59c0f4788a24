"""Orthogonal (up to scale) separator transforms.

Each group transform ``H`` has mutually orthogonal columns of length
``sqrt(k)`` so that ``H^T H = k I`` and ``H^{-1} = H^T / k``; one column is the
all-ones vector, which turns the group into one summed unknown (the V_Sigma
node) plus ``k-1`` zero-mean combinations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr

PARTIAL_SUM, HOUSEHOLDER = "partial_sum", "householder"
DENSE_MAX = 64


@dataclass(frozen=True)
class GroupTransform:
    k: int
    kind: str = PARTIAL_SUM

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("a group transform needs k >= 1")
        if self.kind not in (PARTIAL_SUM, HOUSEHOLDER):
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.k))

    @property
    def sigma_index(self) -> int:
        return self.k - 1 if self.kind == PARTIAL_SUM else 0

    def _ps_weights(self):
        j = np.arange(1, self.k)
        return np.sqrt(self.k / (j * (j + 1.0)))

    def _hh_vector(self):
        w = -np.full(self.k, 1.0 / self.scale)
        w[0] += 1.0
        return w

    def apply_T(self, x: np.ndarray) -> np.ndarray:
        """``H^T x`` along axis 0 (x may be a matrix)."""
        x = np.asarray(x, dtype=float)
        if self.k == 1:
            return x.copy()
        if self.kind == PARTIAL_SUM:
            cs = np.cumsum(x, axis=0)
            j = np.arange(1, self.k).reshape((-1,) + (1,) * (x.ndim - 1))
            w = self._ps_weights().reshape(j.shape)
            out = np.empty_like(x)
            out[:-1] = w * (cs[:-1] - j * x[1:])
            out[-1] = cs[-1]
            return out
        w = self._hh_vector()
        wn = w @ w
        if wn == 0.0:
            return self.scale * x
        proj = np.tensordot(w, x, axes=(0, 0))
        return self.scale * (x - 2.0 * np.multiply.outer(w, proj) / wn)

    def apply(self, y: np.ndarray) -> np.ndarray:
        """``H y`` along axis 0."""
        y = np.asarray(y, dtype=float)
        if self.k == 1:
            return y.copy()
        if self.kind == PARTIAL_SUM:
            shape = (-1,) + (1,) * (y.ndim - 1)
            w = self._ps_weights().reshape(shape)
            yc = w * y[:-1]  # coefficient of column j (1-based) is y[j-1]
            # x_i = y_sigma + sum_{j > i} w_j y_j (ones part) - i w_i y_i (i >= 1)
            suffix = np.cumsum(yc[::-1], axis=0)[::-1]
            out = np.empty_like(y)
            out[:] = y[-1]
            out[:-1] += suffix
            i = np.arange(1, self.k).reshape(shape)
            out[1:] -= i * yc
            return out
        return self.apply_T(y)  # the scaled reflector is symmetric

    def matrix(self) -> np.ndarray:
        if self.k > DENSE_MAX:
            raise ValueError("dense materialisation is limited to small groups")
        return self.apply(np.eye(self.k))


def build_transform(k: int, kind: str = PARTIAL_SUM) -> GroupTransform:
    return GroupTransform(k, kind)


@dataclass
class SchurTransform:
    """Basis change ``T`` with ``S_t = T^T S T`` on the Schur unknowns.

    ``T`` is block diagonal: per group ``diag(sign) H`` with the summed column
    divided by ``sigma_scale`` so that its B-row has unit entries; identity on
    corner velocities and pressures.
    """

    groups: list  # (positions in Schur numbering, GroupTransform, signs, sigma_scale)
    n: int

    def _blocks(self):
        for pos, gt, sgn, ss in self.groups:
            yield pos, gt, sgn, ss

    def apply(self, y: np.ndarray) -> np.ndarray:
        x = np.array(y, dtype=float)
        for pos, gt, sgn, ss in self._blocks():
            yy = x[pos].copy()
            yy[gt.sigma_index] /= ss
            x[pos] = sgn * gt.apply(yy)
        return x

    def apply_T(self, x: np.ndarray) -> np.ndarray:
        y = np.array(x, dtype=float)
        for pos, gt, sgn, ss in self._blocks():
            yy = gt.apply_T(sgn * y[pos])
            yy[gt.sigma_index] /= ss
            y[pos] = yy
        return y

    def apply_inv(self, x: np.ndarray) -> np.ndarray:
        """``T^{-1} x`` using ``H^{-1} = H^T / k``."""
        y = np.array(x, dtype=float)
        for pos, gt, sgn, ss in self._blocks():
            yy = gt.apply_T(sgn * y[pos]) / gt.k
            yy[gt.sigma_index] *= ss
            y[pos] = yy
        return y

    def sigma_positions(self) -> np.ndarray:
        return np.array([pos[gt.sigma_index] for pos, gt, _, _ in self.groups], dtype=int)

    def matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        covered = np.zeros(self.n, dtype=bool)
        for pos, gt, sgn, ss in self._blocks():
            eye = np.eye(gt.k)
            eye[gt.sigma_index, gt.sigma_index] /= ss
            blk = sgn[:, None] * gt.apply(eye)
            r, c = np.nonzero(blk)
            rows.append(pos[r])
            cols.append(pos[c])
            vals.append(blk[r, c])
            covered[pos] = True
        rest = np.flatnonzero(~covered)
        rows.append(rest)
        cols.append(rest)
        vals.append(np.ones(rest.size))
        return as_csr(sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                    shape=(self.n, self.n)))


def _transform_columns(X: sp.csc_matrix, tr: SchurTransform) -> sp.csr_matrix:
    """``X T`` computed group by group with the operator form of ``H``."""
    X = X.tocsc()
    covered = np.zeros(tr.n, dtype=bool)
    rows, cols, vals = [], [], []
    for pos, gt, sgn, ss in tr.groups:
        covered[pos] = True
        sub = X[:, pos]
        nzr = np.unique(sub.indices)
        if nzr.size == 0:
            continue
        D = sub[nzr].toarray() * sgn[None, :]
        Dt = gt.apply_T(D.T).T  # (D H) rows
        Dt[:, gt.sigma_index] /= ss
        r, c = np.nonzero(Dt)
        rows.append(nzr[r])
        cols.append(pos[c])
        vals.append(Dt[r, c])
    rest = np.flatnonzero(~covered)
    sub = X[:, rest].tocoo()
    rows.append(sub.row)
    cols.append(rest[sub.col])
    vals.append(sub.data)
    return as_csr(sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=X.shape))


def make_schur_transform(S: sp.csr_matrix, d, schur_vars: np.ndarray, nv: int,
                         kind: str = PARTIAL_SUM) -> SchurTransform:
    """Build per-group transforms, sign-normalising pressure couplings."""
    pos_of = {int(g): i for i, g in enumerate(schur_vars)}
    B = as_csr(S[:nv, nv:])
    groups = []
    for gi, g in enumerate(d.groups):
        pos = np.array([pos_of[int(v)] for v in g.members], dtype=int)
        sgn = np.ones(pos.size)
        ref = None
        nz = 0
        for a, p in enumerate(pos):
            row = B[p].toarray().ravel()
            if not np.any(row):
                continue
            nz += 1
            if ref is None:
                ref = row
            elif np.allclose(row, ref, rtol=0, atol=1e-12):
                pass
            elif np.allclose(row, -ref, rtol=0, atol=1e-12):
                sgn[a] = -1.0
            else:
                raise ValueError(f"group {gi} ({g.key}) mixes pressure couplings of different shape")
        gt = GroupTransform(pos.size, kind)
        if ref is not None:
            ss = float(np.max(np.abs(ref))) * pos.size if nz == pos.size else 1.0
        else:
            ss = 1.0
        groups.append((pos, gt, sgn, ss))
    return SchurTransform(groups, S.shape[0])


def transform_schur(S: sp.csr_matrix, tr: SchurTransform) -> sp.csr_matrix:
    """Congruence ``T^T S T`` applied group-blockwise."""
    W = _transform_columns(as_csr(S).tocsc(), tr)
    St = _transform_columns(as_csr(W.T).tocsc(), tr).T
    St = as_csr(St)
    St.data[np.abs(St.data) <= 1e-13 * max(np.abs(St.data).max(initial=0.0), 1.0)] = 0.0
    St.eliminate_zeros()
    return St
