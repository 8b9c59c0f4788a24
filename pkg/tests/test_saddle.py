import numpy as np
import pytest
import scipy.sparse as sp

from fmatrix.problems import gen_stokes
from fmatrix.saddle import (SaddleSystem, is_f_matrix, load_saddle, save_saddle,
                            scale_unit_gradient, symmetric_part_is_pd, validate_gradient_matrix)


def test_gradient_validation_flags_rows():
    B = sp.csr_matrix(np.array([[1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 1.0], [0.0, 0.0, 2.0]]))
    rep = validate_gradient_matrix(B)
    # a single entry cannot sum to zero
    assert rep.offending_rows == [1, 2, 3]
    assert rep.max_row_nnz == 3
    assert not rep.is_gradient


def test_shape_checks():
    with pytest.raises(ValueError):
        SaddleSystem(sp.identity(3), sp.csr_matrix((2, 1)))
    with pytest.raises(ValueError):
        SaddleSystem(sp.identity(2), sp.csr_matrix((2, 3)))


def test_stokes_is_f_matrix_and_pd_check():
    k = gen_stokes(2, 8)
    assert is_f_matrix(k)
    assert symmetric_part_is_pd(k.A)
    assert not symmetric_part_is_pd(-k.A.toarray())


def test_scale_unit_gradient():
    B = sp.csr_matrix(np.array([[2.0, -2.0], [0.0, 0.5], [3.0, -3.0]]))
    A = sp.identity(3, format="csr")
    k = SaddleSystem(A, B)
    s, d = scale_unit_gradient(k)
    assert np.allclose(np.abs(s.B.data), 1.0)
    assert np.allclose(d, [0.5, 2.0, 1.0 / 3.0])
    assert np.allclose(s.A.toarray(), np.diag(d ** 2))
    bad = SaddleSystem(A, sp.csr_matrix(np.array([[2.0, -1.0], [0.0, 1.0], [1.0, 0.0]])))
    with pytest.raises(ValueError):
        scale_unit_gradient(bad)


def test_save_load_roundtrip(tmp_path):
    k = gen_stokes(2, 6)
    save_saddle(k, tmp_path / "k.txt")
    back = load_saddle(tmp_path / "k.txt")
    assert back.n == k.n and back.m == k.m and back.symmetric
    assert abs(back.K - k.K).max() == 0
