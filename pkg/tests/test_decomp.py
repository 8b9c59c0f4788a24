import numpy as np
import pytest

from fmatrix.decomp import (CORNER_V, INTERIOR, RETAINED_P, SEPARATOR, GridSpec, brute_force_groups,
                            decompose)
from fmatrix.problems import gen_darcy, gen_poisson, gen_stokes


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(2, 30, 8)
    with pytest.raises(ValueError):
        GridSpec(4, 8, 4)
    with pytest.raises(ValueError):
        GridSpec(2, 8, 8)
    assert GridSpec(3, 16, 4).n_subdomains == 64


def test_mismatched_grid():
    with pytest.raises(ValueError):
        decompose(GridSpec(2, 32, 8), gen_stokes(2, 16))


@pytest.mark.parametrize("gen,dim,n_x,s_x", [(gen_stokes, 2, 32, 8), (gen_darcy, 2, 16, 4),
                                             (gen_stokes, 3, 8, 4)])
def test_groups_match_connectivity_reference(gen, dim, n_x, s_x):
    k = gen(dim, n_x)
    d = decompose(GridSpec(dim, n_x, s_x), k)
    ours = sorted(tuple(g.members) for g in d.groups)
    ref = sorted(tuple(v) for v in brute_force_groups(k, d).values())
    assert ours == ref


def test_poisson_groups_are_geometric():
    # the point condition at node 0 cuts couplings, so connectivity would split
    # groups near node 0; geometric groups keep every edge of a block whole
    k = gen_poisson(2, 32)
    d = decompose(GridSpec(2, 32, 8), k)
    sizes = sorted(len(g.members) for g in d.groups)
    assert sizes == [1] * 16 + [7] * 32
    assert d.n_schur == 240


def test_interiors_are_separated():
    k = gen_stokes(2, 32)
    d = decompose(GridSpec(2, 32, 8), k)
    K = k.K.tocoo()
    si, sj = d.subdomain_of[K.row], d.subdomain_of[K.col]
    both = (si >= 0) & (sj >= 0)
    assert np.all(si[both] == sj[both])
    # pressures are never separators and every subdomain keeps one
    assert not np.any(d.kind[k.n:] == SEPARATOR)
    assert d.retained_pressures.size == d.n_subdomains
    assert set(np.unique(d.kind)) <= {INTERIOR, SEPARATOR, CORNER_V, RETAINED_P}


def test_schur_sizes_and_order():
    k = gen_stokes(2, 64)
    d = decompose(GridSpec(2, 64, 8), k)
    assert d.n_schur == 1793
    sv = d.schur_variables
    assert sv.size == d.n_schur and np.unique(sv).size == sv.size
    nv = int(np.sum(sv < k.n))
    assert np.all(sv[:nv] < k.n) and np.all(sv[nv:] >= k.n)
    ranks = [g.rank for g in d.groups]
    assert ranks == sorted(ranks)


def test_dump_is_json():
    import json
    k = gen_stokes(2, 8)
    d = decompose(GridSpec(2, 8, 4), k)
    data = json.loads(d.dump())
    assert len(data["variables"]) == k.size
