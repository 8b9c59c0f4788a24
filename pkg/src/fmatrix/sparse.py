"""Sparse storage helpers, pattern algebra and orderings.

Matrices are carried as canonical ``scipy.sparse.csr_matrix`` objects
(duplicates summed, column indices sorted).  Patterns are kept separately as
sets of positions so that structural questions never depend on values.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "Pattern",
    "Permutation",
    "as_csr",
    "from_entries",
    "pattern_of",
    "pattern_union",
    "normal_product_pattern",
    "fill_reducing_ordering",
    "symbolic_fill",
    "permute_symmetric",
    "matvec",
    "read_matrix_market",
    "write_matrix_market",
]


def as_csr(m) -> sp.csr_matrix:
    """Return a canonical CSR copy of ``m`` (duplicates summed, sorted indices)."""
    out = sp.csr_matrix(m, dtype=float, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    return out


def from_entries(nrows: int, ncols: int, entries) -> sp.csr_matrix:
    """Assemble from ``(row, col, value)`` triples; duplicates are summed.

    Triples are sorted before summation so the stored values do not depend on
    the order in which the caller produced them.
    """
    entries = sorted(entries)
    if entries:
        r, c, v = (np.asarray(t) for t in zip(*entries))
    else:
        r = c = np.zeros(0, dtype=int)
        v = np.zeros(0)
    if r.size and (r.min() < 0 or r.max() >= nrows or c.min() < 0 or c.max() >= ncols):
        raise IndexError("entry index out of range")
    return as_csr(sp.coo_matrix((v, (r, c)), shape=(nrows, ncols)))


@dataclass(frozen=True)
class Pattern:
    nrows: int
    ncols: int
    positions: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for i, j in self.positions:
            if not (0 <= i < self.nrows and 0 <= j < self.ncols):
                raise IndexError(f"position {(i, j)} outside {self.nrows}x{self.ncols}")

    @classmethod
    def from_arrays(cls, nrows, ncols, rows, cols) -> "Pattern":
        return cls(nrows, ncols, frozenset(zip(map(int, rows), map(int, cols))))

    def to_csr(self) -> sp.csr_matrix:
        if not self.positions:
            return sp.csr_matrix((self.nrows, self.ncols))
        r, c = zip(*self.positions)
        m = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(self.nrows, self.ncols))
        return as_csr(m)

    def __len__(self):
        return len(self.positions)


def pattern_of(m, keep_explicit_zeros: bool = True) -> Pattern:
    """Structural pattern of a sparse matrix."""
    coo = sp.coo_matrix(m)
    if not keep_explicit_zeros:
        mask = coo.data != 0
        coo = sp.coo_matrix((coo.data[mask], (coo.row[mask], coo.col[mask])), shape=coo.shape)
    return Pattern.from_arrays(coo.shape[0], coo.shape[1], coo.row, coo.col)


def pattern_union(p: Pattern, q: Pattern) -> Pattern:
    if (p.nrows, p.ncols) != (q.nrows, q.ncols):
        raise ValueError(f"dimension mismatch: {p.nrows}x{p.ncols} vs {q.nrows}x{q.ncols}")
    return Pattern(p.nrows, p.ncols, p.positions | q.positions)


def normal_product_pattern(b: Pattern) -> Pattern:
    """Pattern of F(B) F(B)^T, computed on booleans so no cancellation can occur."""
    f = b.to_csr()
    f.data[:] = 1.0
    prod = (f @ f.T).tocoo()
    return Pattern.from_arrays(b.nrows, b.nrows, prod.row, prod.col)


@dataclass(frozen=True)
class Permutation:
    """``forward[k]`` is the original index placed at position ``k``."""

    forward: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.forward)
        inv = np.asarray(self.inverse)
        n = f.size
        if inv.size != n or not np.array_equal(np.sort(f), np.arange(n)):
            raise ValueError("forward is not a bijection on [0, n)")
        if not np.array_equal(inv[f], np.arange(n)):
            raise ValueError("inverse does not invert forward")

    @classmethod
    def from_order(cls, order) -> "Permutation":
        f = np.asarray(order, dtype=int)
        inv = np.empty_like(f)
        inv[f] = np.arange(f.size)
        return cls(f, inv)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls.from_order(np.arange(n))

    def __len__(self):
        return int(np.asarray(self.forward).size)


def _adjacency(p: Pattern) -> list[set]:
    if p.nrows != p.ncols:
        raise ValueError("ordering needs a square pattern")
    adj = [set() for _ in range(p.nrows)]
    for i, j in p.positions:
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    return adj


def _minimum_degree(adj: list[set]) -> list[int]:
    """Minimum degree on the elimination graph; ties go to the lowest index.

    Indistinguishable nodes are not merged and degrees are exact, which keeps
    the result deterministic and is fast enough for subdomain-sized graphs.
    """
    adj = [set(a) for a in adj]
    n = len(adj)
    heap = [(len(a), i) for i, a in enumerate(adj)]
    heapq.heapify(heap)
    done = np.zeros(n, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = adj[v]
        for w in nbrs:
            aw = adj[w]
            aw.discard(v)
            aw.update(nbrs)
            aw.discard(w)
            heapq.heappush(heap, (len(aw), w))
        adj[v] = set()
    return order


def fill_reducing_ordering(p: Pattern) -> Permutation:
    """Deterministic minimum-degree ordering of a (symmetrised) pattern."""
    return Permutation.from_order(_minimum_degree(_adjacency(p)))


def symbolic_fill(p: Pattern, perm: Permutation | None = None) -> int:
    """Number of fill entries (strictly lower, beyond the pattern) of a
    symbolic Cholesky factorisation in the given order."""
    adj = _adjacency(p)
    n = len(adj)
    order = np.arange(n) if perm is None else np.asarray(perm.forward)
    pos = np.empty(n, dtype=int)
    pos[order] = np.arange(n)
    original = sum(len(a) for a in adj) // 2
    created = 0
    for v in order:
        later = {w for w in adj[v] if pos[w] > pos[v]}
        created += len(later)
        for w in later:
            adj[w] |= later - {w}
    return created - original


def permute_symmetric(m, perm: Permutation) -> sp.csr_matrix:
    """Return P^T M P, i.e. ``out[i, j] = m[forward[i], forward[j]]``."""
    m = as_csr(m)
    if m.shape[0] != m.shape[1] or m.shape[0] != len(perm):
        raise ValueError(f"cannot permute {m.shape} by a permutation of length {len(perm)}")
    f = np.asarray(perm.forward)
    return as_csr(m[f][:, f])


def matvec(m, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if m.shape[1] != x.shape[0]:
        raise ValueError(f"matrix has {m.shape[1]} columns, vector has {x.shape[0]} entries")
    return np.asarray(m @ x)


def write_matrix_market(path, m, comment: str = "", symmetry: str = "general") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(m), comment=comment, field="real",
                     precision=17, symmetry=symmetry)


def read_matrix_market(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))
