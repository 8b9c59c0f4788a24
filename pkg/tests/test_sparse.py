import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from fmatrix.sparse import (Pattern, Permutation, as_csr, fill_reducing_ordering, from_entries,
                            matvec, normal_product_pattern, pattern_of, pattern_union,
                            permute_symmetric, read_matrix_market, symbolic_fill,
                            write_matrix_market)


def test_from_entries_sums_duplicates_order_independent():
    e = [(0, 1, 2.0), (1, 0, 1.0), (0, 1, 3.0)]
    a = from_entries(2, 2, e)
    b = from_entries(2, 2, list(reversed(e)))
    assert a[0, 1] == 5.0 and a.nnz == 2
    assert np.array_equal(a.toarray(), b.toarray())
    with pytest.raises(IndexError):
        from_entries(2, 2, [(2, 0, 1.0)])


def test_pattern_union_and_normal_product():
    B = sp.csr_matrix(np.array([[1.0, -1.0], [0.0, 1.0], [1.0, 0.0]]))
    p = normal_product_pattern(pattern_of(B))
    dense = (np.abs(B.toarray()) @ np.abs(B.toarray()).T) != 0
    assert set(p.positions) == set(zip(*np.nonzero(dense)))
    u = pattern_union(pattern_of(sp.identity(3)), p)
    assert len(u) == len(set(p.positions) | {(i, i) for i in range(3)})


def test_permutation_roundtrip():
    perm = Permutation.from_order([2, 0, 1])
    m = as_csr(np.arange(9.0).reshape(3, 3))
    out = permute_symmetric(m, perm)
    assert out[0, 0] == m[2, 2] and out[0, 1] == m[2, 0]
    with pytest.raises(ValueError):
        Permutation.from_order([0, 0, 1])


def _grid_pattern(k):
    n = k * k
    rows, cols = [], []
    for i in range(k):
        for j in range(k):
            a = i * k + j
            for b in ([a + 1] if j + 1 < k else []) + ([a + k] if i + 1 < k else []):
                rows += [a, b]
                cols += [b, a]
    return Pattern.from_arrays(n, n, rows, cols)


def test_minimum_degree_beats_natural_order_on_grid():
    p = _grid_pattern(12)
    md = fill_reducing_ordering(p)
    assert sorted(md.forward) == list(range(144))
    assert symbolic_fill(p, md) < symbolic_fill(p)
    # deterministic
    assert list(fill_reducing_ordering(p).forward) == list(md.forward)


def test_symbolic_fill_tridiagonal_is_zero():
    n = 20
    r = list(range(n - 1)) + list(range(1, n))
    c = list(range(1, n)) + list(range(n - 1))
    assert symbolic_fill(Pattern.from_arrays(n, n, r, c)) == 0


@given(st.integers(1, 30), st.integers(0, 2 ** 31 - 1))
def test_matvec_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    m = sp.random(n, n, density=0.3, random_state=rng)
    x = rng.standard_normal(n)
    assert np.allclose(matvec(m, x), m.toarray() @ x)


def test_matvec_shape_error():
    with pytest.raises(ValueError):
        matvec(sp.identity(3), np.ones(4))


def test_matrix_market_roundtrip(tmp_path):
    m = sp.random(7, 5, density=0.4, random_state=0)
    write_matrix_market(tmp_path / "m.mtx", m)
    back = read_matrix_market(tmp_path / "m.mtx")
    assert np.array_equal(back.toarray(), as_csr(m).toarray())
