"""Test problem generators: periodic Poisson, and Darcy / Stokes on a C-grid.

Unknown numbering on the C-grid: all u-faces, then v-faces (then w-faces),
then cell pressures; within a block the x index runs fastest.  A velocity of
component ``d`` at face index ``f`` sits between cells ``f-1`` and ``f`` in
direction ``d``; only interior faces are unknowns (normal velocity is zero on
the walls).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .saddle import SaddleSystem
from .sparse import as_csr


@dataclass(frozen=True)
class Layout:
    """Geometry of every unknown of a generated problem.

    ``comp`` is the velocity component (0..dim-1), ``-1`` for a pressure, and
    ``0`` for the nodes of a scalar problem.  ``coord`` holds face/cell indices
    per direction.
    """

    kind: str  # "cell" (scalar, periodic) or "cgrid"
    dim: int
    n_x: int
    comp: np.ndarray
    coord: np.ndarray

    @property
    def periodic(self) -> bool:
        return self.kind == "cell"


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    dim: int = 2
    n_x: int = 16
    Re: float = 500.0
    stretch: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("poisson", "darcy", "stokes", "cavity"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.kind == "cavity" and self.dim != 2:
            raise ValueError("the driven cavity is two-dimensional only")
        if self.Re <= 0:
            raise ValueError("Re must be positive")


def grid_coords(shape) -> np.ndarray:
    """All index tuples of ``shape`` with the first coordinate varying fastest."""
    grids = np.indices(tuple(shape)[::-1]).reshape(len(shape), -1)[::-1]
    return np.ascontiguousarray(grids.T)


def _linear(coords, shape) -> np.ndarray:
    idx = np.zeros(coords.shape[0], dtype=np.int64)
    stride = 1
    for d, s in enumerate(shape):
        idx += coords[:, d] * stride
        stride *= s
    return idx


def gen_poisson(dim: int, n_x: int) -> SaddleSystem:
    """Periodic 5/7-point Laplacian made nonsingular by cutting the couplings
    of node 0 (a point Dirichlet condition).  nnz = (2 dim + 1) N - 4 dim."""
    shape = (n_x,) * dim
    coords = grid_coords(shape)
    N = coords.shape[0]
    idx = np.arange(N)
    rows, cols = [idx], [idx]
    vals = [np.full(N, 2.0 * dim)]
    for d in range(dim):
        for step in (-1, 1):
            nb = coords.copy()
            nb[:, d] = (nb[:, d] + step) % n_x
            j = _linear(nb, shape)
            keep = (j != idx) & (idx != 0) & (j != 0)
            rows.append(idx[keep])
            cols.append(j[keep])
            vals.append(np.full(keep.sum(), -1.0))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    layout = Layout("cell", dim, n_x, np.zeros(N, dtype=int), coords)
    return SaddleSystem(as_csr(A), sp.csr_matrix((N, 0)), True, layout,
                        {"kind": "poisson", "positive_definite": True})


def _cgrid_blocks(dim: int, n_x: int):
    """Coordinates and global offsets of each velocity component and the pressure."""
    blocks = []
    offset = 0
    for d in range(dim):
        shape = [n_x] * dim
        shape[d] = n_x - 1
        c = grid_coords(shape)
        c[:, d] += 1
        blocks.append((shape, c, offset))
        offset += c.shape[0]
    n = offset
    pshape = [n_x] * dim
    pc = grid_coords(pshape)
    return blocks, (pshape, pc, n), n, pc.shape[0]


def velocity_index(dim: int, n_x: int, d: int, coords) -> np.ndarray:
    """Global index of velocity component ``d`` at the given face coordinates."""
    shape = [n_x] * dim
    shape[d] = n_x - 1
    c = np.array(coords, dtype=np.int64, ndmin=2).copy()
    c[:, d] -= 1
    off = sum(n_x ** (dim - 1) * (n_x - 1) for _ in range(d))
    return off + _linear(c, shape)


def cgrid_gradient(dim: int, n_x: int) -> sp.csr_matrix:
    """Discrete gradient: row of velocity (d, f) has +1 at cell f and -1 at cell f-1."""
    blocks, (pshape, _, _), n, m = _cgrid_blocks(dim, n_x)
    rows, cols, vals = [], [], []
    for d, (shape, c, off) in enumerate(blocks):
        r = off + np.arange(c.shape[0])
        hi = c.copy()
        lo = c.copy()
        lo[:, d] -= 1
        rows += [r, r]
        cols += [_linear(hi, pshape), _linear(lo, pshape)]
        vals += [np.ones(r.size), -np.ones(r.size)]
    B = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, m))
    return as_csr(B)


def cgrid_layout(dim: int, n_x: int) -> Layout:
    blocks, (_, pc, _), n, m = _cgrid_blocks(dim, n_x)
    comp = np.concatenate([np.full(c.shape[0], d) for d, (_, c, _) in enumerate(blocks)]
                          + [np.full(m, -1)])
    coord = np.concatenate([c for _, c, _ in blocks] + [pc])
    return Layout("cgrid", dim, n_x, comp, coord)


def vector_laplacian(dim: int, n_x: int, widths=None) -> sp.csr_matrix:
    """Finite-volume vector Laplacian for the face velocities with no-slip walls.

    ``widths`` (one array of cell widths per direction) defaults to a uniform
    grid and returns the integer stencil; on a stretched grid the operator acts
    on face velocities and is scaled by the control volume, so it is
    symmetric.  A tangential wall sits half a cell away.
    """
    blocks, _, n, _ = _cgrid_blocks(dim, n_x)
    uniform = widths is None
    if uniform:
        widths = [np.ones(n_x)] * dim
    widths = [np.asarray(w, dtype=float) for w in widths]
    rows, cols, vals = [], [], []
    for d, (shape, c, off) in enumerate(blocks):
        cnt = c.shape[0]
        r = off + np.arange(cnt)
        # control volume of face (d, f): from centre of cell f-1 to centre of cell f
        hd = 0.5 * (widths[d][c[:, d] - 1] + widths[d][c[:, d]])
        diag = np.zeros(cnt)
        for e in range(dim):
            for step in (-1, 1):
                nb = c.copy()
                nb[:, e] += step
                if e == d:
                    dist = (widths[d][c[:, d] - 1] if step < 0 else widths[d][c[:, d]])
                    inside = (nb[:, e] >= 1) & (nb[:, e] <= n_x - 1)
                else:
                    ce = c[:, e]
                    nbc = np.clip(nb[:, e], 0, n_x - 1)
                    inside = (nb[:, e] >= 0) & (nb[:, e] <= n_x - 1)
                    dist = np.where(inside, 0.5 * (widths[e][ce] + widths[e][nbc]), 0.5 * widths[e][ce])
                # face area across which this flux passes, divided by distance
                area = np.ones(cnt)
                for g in range(dim):
                    if g == e:
                        continue
                    if g == d:
                        area = area * hd
                    else:
                        area = area * widths[g][c[:, g]]
                coef = area / dist
                diag += coef
                nb_in = nb[inside].copy()
                nb_in[:, d] -= 1
                rows.append(r[inside])
                cols.append(off + _linear(nb_in, shape))
                vals.append(-coef[inside])
        rows.append(r)
        cols.append(r)
        vals.append(diag)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    A = as_csr(A)
    if uniform:
        A.data = np.rint(A.data)
    return A


def gen_darcy(dim: int, n_x: int) -> SaddleSystem:
    """Unit permeability: A = I, B the C-grid gradient."""
    B = cgrid_gradient(dim, n_x)
    A = sp.identity(B.shape[0], format="csr")
    return SaddleSystem(A, B, True, cgrid_layout(dim, n_x),
                        {"kind": "darcy", "positive_definite": True, "pressure_nullspace": True})


def gen_stokes(dim: int, n_x: int) -> SaddleSystem:
    """Stokes with nu = 1 on the uniform C-grid; singular by the constant pressure."""
    B = cgrid_gradient(dim, n_x)
    A = vector_laplacian(dim, n_x)
    return SaddleSystem(A, B, True, cgrid_layout(dim, n_x),
                        {"kind": "stokes", "positive_definite": True, "pressure_nullspace": True})


def generate(spec: ProblemSpec) -> SaddleSystem:
    if spec.kind == "poisson":
        return gen_poisson(spec.dim, spec.n_x)
    if spec.kind == "darcy":
        return gen_darcy(spec.dim, spec.n_x)
    if spec.kind == "stokes":
        return gen_stokes(spec.dim, spec.n_x)
    from .cavity import cavity_benchmark_system
    return cavity_benchmark_system(spec.n_x, spec.Re, stretch=spec.stretch)


def project_divergence_free(B, r) -> np.ndarray:
    """Orthogonal projection of ``r`` onto ker(B^T)."""
    B = as_csr(B)
    m = B.shape[1]
    if m == 0:
        return np.array(r, dtype=float)
    L = as_csr(B.T @ B)
    g = B.T @ r
    # ground the first pressure of every connected component of the pressure graph
    ncomp, labels = sp.csgraph.connected_components(L, directed=False)
    ground = np.array([np.flatnonzero(labels == c)[0] for c in range(ncomp)])
    keep = np.setdiff1d(np.arange(m), ground)
    y = np.zeros(m)
    if keep.size:
        y[keep] = spla.splu(L[keep][:, keep].tocsc()).solve(g[keep])
    return r - B @ y


def random_divergence_free_system(k: SaddleSystem, seed: int = 0):
    """Random exact solution with divergence-free velocity and zero-mean
    pressure, and the matching right-hand side ``b = K x``."""
    rng = np.random.default_rng(seed)
    v = project_divergence_free(k.B, rng.standard_normal(k.n))
    p = rng.standard_normal(k.m)
    if k.m:
        p -= p.mean()
    x = np.concatenate([v, p])
    return x, k.K @ x
