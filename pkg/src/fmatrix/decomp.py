"""Cartesian domain decomposition with one shared layer of velocities.

Subdomains are blocks of ``s_x`` cells per direction.  On the C-grid a
boundary between block ``k-1`` and ``k`` (at face index ``k s_x``) is formed
by the normal velocities on that face plane together with the tangential
velocities in the last cell layer of block ``k-1``; that layer is what cuts
the velocity-velocity couplings across the boundary.  Pressures are never
shared.  For the periodic scalar problem the last node layer of every block
is the separator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .saddle import SaddleSystem
from .sparse import as_csr

INTERIOR, SEPARATOR, CORNER_V, RETAINED_P = "interior", "separator", "v_sigma_corner", "retained_p"


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n_x: int
    s_x: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.s_x < 1 or self.n_x % self.s_x:
            raise ValueError(f"s_x={self.s_x} must divide n_x={self.n_x}")
        if self.n_x // self.s_x < 2:
            raise ValueError("the decomposition needs at least two subdomains per direction")

    @property
    def blocks_per_side(self) -> int:
        return self.n_x // self.s_x

    @property
    def n_subdomains(self) -> int:
        return self.blocks_per_side ** self.dim


@dataclass(frozen=True)
class SeparatorGroup:
    variable_type: int
    adjacent_subdomains: tuple
    members: tuple
    key: tuple = ()
    rank: int = 1  # 1 face, 2 edge, 3 corner (number of separator directions)


@dataclass
class Decomposition:
    grid: GridSpec
    kind: np.ndarray  # one of the four kind labels per unknown
    subdomain_of: np.ndarray  # subdomain id of interior unknowns, -1 otherwise
    groups: list
    retained_pressures: np.ndarray  # one per subdomain, subdomain order
    corner_pressures: np.ndarray
    corner_velocities: np.ndarray
    n_velocity: int
    meta: dict = field(default_factory=dict)

    @property
    def n_subdomains(self) -> int:
        return self.grid.n_subdomains

    def interiors(self, s: int) -> np.ndarray:
        return np.flatnonzero(self.subdomain_of == s)

    @property
    def schur_variables(self) -> np.ndarray:
        """Separator velocities in group order, then corner velocities, then
        retained and corner pressures."""
        grouped = [np.asarray(g.members, dtype=int) for g in self.groups]
        parts = grouped + [self.corner_velocities, self.schur_pressures]
        return np.concatenate(parts).astype(int) if parts else np.zeros(0, int)

    @property
    def schur_pressures(self) -> np.ndarray:
        return np.sort(np.concatenate([self.retained_pressures, self.corner_pressures])).astype(int)

    @property
    def n_schur(self) -> int:
        return int(np.sum(self.kind != INTERIOR))

    def dump(self) -> str:
        """JSON text: unknown -> kind and group index (for fixtures and debugging)."""
        group_of = {int(v): gi for gi, g in enumerate(self.groups) for v in g.members}
        rows = [{"var": i, "kind": str(self.kind[i]), "subdomain": int(self.subdomain_of[i]),
                 "group": group_of.get(i)} for i in range(self.kind.size)]
        return json.dumps({"grid": [self.grid.dim, self.grid.n_x, self.grid.s_x],
                           "variables": rows}, indent=None)


def _block_key(coord, comp, grid: GridSpec, periodic: bool):
    """Per direction: ('S', k) on the separator layer of boundary k, else ('B', block)."""
    s, nb = grid.s_x, grid.blocks_per_side
    key = []
    for e in range(grid.dim):
        c = int(coord[e])
        if periodic:
            on = nb > 1 and c % s == s - 1
            key.append(("S", c // s) if on else ("B", c // s))
        elif comp == e:
            on = c % s == 0
            key.append(("S", c // s) if on else ("B", c // s))
        else:
            on = c % s == s - 1 and c < grid.n_x - 1
            key.append(("S", (c + 1) // s) if on else ("B", c // s))
    return tuple(key)


def _subdomain_id(blocks, nb: int) -> int:
    sid, stride = 0, 1
    for b in blocks:
        sid += b * stride
        stride *= nb
    return sid


def _adjacent(key, grid: GridSpec, periodic: bool) -> tuple:
    """Subdomains touched by a separator with the given per-direction key."""
    nb = grid.blocks_per_side
    choices = []
    for tag, k in key:
        if tag == "B":
            choices.append([k])
        elif periodic:
            choices.append(sorted({k, (k + 1) % nb}))
        else:
            choices.append([k - 1, k])
    out = [[]]
    for ch in choices:
        out = [o + [c] for o in out for c in ch]
    return tuple(sorted({_subdomain_id(o, nb) for o in out}))


def decompose(grid: GridSpec, k: SaddleSystem) -> Decomposition:
    lay = k.layout
    if lay is None:
        raise ValueError("decompose needs a generated system with grid layout")
    if lay.n_x != grid.n_x or lay.dim != grid.dim:
        raise ValueError(f"grid {grid} does not match the system layout ({lay.dim}D, n_x={lay.n_x})")
    N = k.size
    if lay.comp.size != N:
        raise ValueError(f"layout describes {lay.comp.size} unknowns, system has {N}")
    periodic = lay.periodic
    s, nb, dim = grid.s_x, grid.blocks_per_side, grid.dim
    kind = np.full(N, INTERIOR, dtype=object)
    sub = np.full(N, -1, dtype=int)
    keys = {}

    for i in range(k.n):
        key = _block_key(lay.coord[i], lay.comp[i], grid, periodic)
        if any(t == "S" for t, _ in key):
            kind[i] = SEPARATOR
            keys[i] = key
        else:
            sub[i] = _subdomain_id([b for _, b in key], nb)

    # pressures: interior of the block holding their cell
    pcells = lay.coord[k.n:]
    psub = np.zeros(k.m, dtype=int)
    stride = 1
    for e in range(dim):
        psub += (pcells[:, e] // s) * stride
        stride *= nb
    sub[k.n:] = psub

    # complete conservation cells whose velocities are all separators
    corner_p, corner_v = [], []
    if k.m:
        B = k.B.tocsc()
        for j in range(k.m):
            faces = B.indices[B.indptr[j]:B.indptr[j + 1]]
            if faces.size and np.all(kind[faces] != INTERIOR):
                corner_p.append(k.n + j)
                corner_v.extend(int(f) for f in faces)
    corner_v = np.array(sorted(set(corner_v)), dtype=int)
    corner_p = np.array(corner_p, dtype=int)
    kind[corner_v] = CORNER_V
    kind[corner_p] = RETAINED_P
    sub[corner_p] = -1

    retained = []
    if k.m:
        for sd in range(grid.n_subdomains):
            cand = np.flatnonzero(sub[k.n:] == sd)
            if cand.size:
                retained.append(k.n + int(cand[0]))
        retained = np.array(retained, dtype=int)
        kind[retained] = RETAINED_P
        sub[retained] = -1
    else:
        retained = np.zeros(0, dtype=int)

    by_key = {}
    for i, key in keys.items():
        if kind[i] != SEPARATOR:
            continue
        by_key.setdefault((int(lay.comp[i]), key), []).append(i)
    groups = []
    for (comp, key), members in by_key.items():
        rank = sum(t == "S" for t, _ in key)
        groups.append(SeparatorGroup(comp, _adjacent(key, grid, periodic), tuple(sorted(members)),
                                     (comp, key), rank))
    dec = Decomposition(grid, kind, sub, separator_groups_order(groups), retained, corner_p,
                        corner_v, k.n, {"periodic": periodic})
    return dec


def separator_groups_order(groups):
    """Faces first, then edges, then corners; inside a class by component and
    then by the lowest member index."""
    return sorted(groups, key=lambda g: (g.rank, g.variable_type, g.members[0]))


def separator_groups(d: Decomposition) -> list:
    return list(d.groups)


def adjacency_pattern(k: SaddleSystem) -> sp.csr_matrix:
    """Boolean graph F(A) u F(B)F(B)^T on the velocities plus the velocity-pressure couplings."""
    A = k.A.copy()
    A.data[:] = 1.0
    graph = A + A.T
    if k.m:
        Bf = k.B.copy()
        Bf.data[:] = 1.0
        graph = graph + Bf @ Bf.T
        graph = sp.bmat([[graph, Bf], [Bf.T, None]])
    g = as_csr(graph)
    g.data[:] = 1.0
    return g


def brute_force_groups(k: SaddleSystem, d: Decomposition) -> dict:
    """Reference grouping: separator velocities keyed by (component, set of
    subdomains whose interiors they touch in the coupling graph)."""
    g = adjacency_pattern(k)
    comp = k.layout.comp
    out = {}
    for i in np.flatnonzero(d.kind == SEPARATOR):
        nbrs = g.indices[g.indptr[i]:g.indptr[i + 1]]
        subs = tuple(sorted({int(d.subdomain_of[j]) for j in nbrs if d.subdomain_of[j] >= 0}))
        out.setdefault((int(comp[i]), subs), []).append(int(i))
    return out
