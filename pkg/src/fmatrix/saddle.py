"""Saddle point systems K = [A B; B^T 0] and F-matrix checks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .sparse import as_csr, read_matrix_market, write_matrix_market

GRADIENT_TOL = 1e-12
PD_CHECK_CAP = 5000


@dataclass(frozen=True)
class SaddleSystem:
    """Velocity unknowns come first (``0..n-1``), pressures after (``n..n+m-1``).

    A scalar problem is a system with ``m == 0``.  ``layout`` carries the grid
    geometry of generated problems and ``meta`` free-form generator metadata
    (``meta['positive_definite']`` is trusted above the PD check cap).
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    symmetric: bool = True
    layout: Any = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A, B = as_csr(self.A), as_csr(self.B)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if B.shape[1] > B.shape[0]:
            raise ValueError("saddle system needs n >= m")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def size(self) -> int:
        return self.n + self.m

    @property
    def v_nodes(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def p_nodes(self) -> np.ndarray:
        return np.arange(self.n, self.n + self.m)

    @property
    def K(self) -> sp.csr_matrix:
        return as_csr(sp.bmat([[self.A, self.B], [self.B.T, None]], format="csr")
                      if self.m else self.A)

    @property
    def nnz(self) -> int:
        return self.A.nnz + 2 * self.B.nnz

    def with_values(self, A=None, B=None) -> "SaddleSystem":
        return replace(self, A=self.A if A is None else A, B=self.B if B is None else B)


@dataclass
class GradientReport:
    is_gradient: bool
    offending_rows: list
    max_row_nnz: int
    row_sum_max_abs: float


def validate_gradient_matrix(b, tol: float = GRADIENT_TOL) -> GradientReport:
    """A row passes when it has at most two nonzeros and sums to zero
    relative to its largest entry."""
    b = as_csr(b)
    offending = []
    max_nnz = 0
    worst = 0.0
    for i in range(b.shape[0]):
        vals = b.data[b.indptr[i]:b.indptr[i + 1]]
        vals = vals[vals != 0]
        max_nnz = max(max_nnz, vals.size)
        if vals.size == 0:
            continue
        s = abs(vals.sum())
        worst = max(worst, s)
        if vals.size > 2 or s > tol * np.abs(vals).max():
            offending.append(i)
    return GradientReport(not offending, offending, max_nnz, worst)


def symmetric_part_is_pd(a) -> bool:
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    if a.size == 0:
        return True
    try:
        sla.cholesky(0.5 * (a + a.T), lower=True)
    except sla.LinAlgError:
        return False
    return True


def is_f_matrix(k: SaddleSystem, tol: float = GRADIENT_TOL, pd_cap: int = PD_CHECK_CAP) -> bool:
    if not validate_gradient_matrix(k.B, tol).is_gradient:
        return False
    if k.n > pd_cap:
        return bool(k.meta.get("positive_definite", False))
    return symmetric_part_is_pd(k.A)


def scale_unit_gradient(k: SaddleSystem) -> tuple[SaddleSystem, np.ndarray]:
    """Row-scale B to unit magnitude entries: returns ``([DAD DB; B^T D 0], d)``.

    Unknowns change accordingly: the scaled system solves for ``D^{-1} x``.
    """
    B = k.B
    d = np.ones(k.n)
    bad = []
    for i in range(k.n):
        vals = np.abs(B.data[B.indptr[i]:B.indptr[i + 1]])
        vals = vals[vals != 0]
        if vals.size == 0:
            continue
        if vals.size > 2 or vals.max() - vals.min() > GRADIENT_TOL * vals.max():
            bad.append(i)
            continue
        d[i] = 1.0 / vals[0]
    if bad:
        raise ValueError(f"rows {bad[:10]} are not zero-sum gradient rows; row scaling cannot unify them")
    D = sp.diags(d)
    scaled = k.with_values(A=D @ k.A @ D, B=D @ B)
    return scaled, d


def load_saddle(header_path, a_path=None, b_path=None) -> SaddleSystem:
    """Load a system from a header file (``n m symmetric``) plus two Matrix Market files.

    Missing paths default to ``<stem>_A.mtx`` / ``<stem>_B.mtx`` next to the header.
    """
    header_path = Path(header_path)
    tokens = header_path.read_text().split()
    n, m = int(tokens[0]), int(tokens[1])
    symmetric = tokens[2].lower() in ("1", "true", "symmetric", "yes")
    stem = header_path.with_suffix("")
    A = read_matrix_market(a_path or f"{stem}_A.mtx")
    B = read_matrix_market(b_path or f"{stem}_B.mtx") if m else sp.csr_matrix((n, 0))
    if A.shape != (n, n) or B.shape != (n, m):
        raise ValueError(f"header says n={n}, m={m}; files give A{A.shape}, B{B.shape}")
    return SaddleSystem(A, B, symmetric)


def save_saddle(k: SaddleSystem, header_path) -> None:
    header_path = Path(header_path)
    stem = header_path.with_suffix("")
    header_path.write_text(f"{k.n} {k.m} {'symmetric' if k.symmetric else 'general'}\n")
    write_matrix_market(f"{stem}_A.mtx", k.A)
    if k.m:
        write_matrix_market(f"{stem}_B.mtx", k.B)
