import numpy as np
import pytest
from hypothesis import given, strategies as st

from fmatrix.decomp import GridSpec, decompose
from fmatrix.factor import eliminate_interiors
from fmatrix.problems import gen_stokes
from fmatrix.transform import (DENSE_MAX, HOUSEHOLDER, PARTIAL_SUM, GroupTransform, make_schur_transform,
                               transform_schur)


@pytest.mark.parametrize("kind", [PARTIAL_SUM, HOUSEHOLDER])
@pytest.mark.parametrize("k", [1, 2, 3, 7, 16])
def test_group_transform_orthogonal_up_to_k(kind, k):
    H = GroupTransform(k, kind).matrix()
    assert np.allclose(H.T @ H, k * np.eye(k))
    sig = GroupTransform(k, kind).sigma_index
    assert np.allclose(H[:, sig], 1.0)
    # the other columns have zero mean (zero net flux)
    others = np.delete(H, sig, axis=1)
    assert np.allclose(others.sum(axis=0), 0.0)


@given(st.integers(1, 40), st.sampled_from([PARTIAL_SUM, HOUSEHOLDER]), st.integers(0, 1000))
def test_operator_form_matches_matrix(k, kind, seed):
    gt = GroupTransform(k, kind)
    H = gt.matrix()
    x = np.random.default_rng(seed).standard_normal((k, 3))
    assert np.allclose(gt.apply(x), H @ x)
    assert np.allclose(gt.apply_T(x), H.T @ x)


def test_group_transform_validation():
    with pytest.raises(ValueError):
        GroupTransform(0)
    with pytest.raises(ValueError):
        GroupTransform(3, "rotation")
    with pytest.raises(ValueError):
        GroupTransform(DENSE_MAX + 1).matrix()


@pytest.fixture(scope="module")
def stokes_schur():
    k = gen_stokes(2, 32)
    d = decompose(GridSpec(2, 32, 8), k)
    return k, d, eliminate_interiors(k, d)


@pytest.mark.parametrize("kind", [PARTIAL_SUM, HOUSEHOLDER])
def test_schur_transform_congruence(stokes_schur, kind):
    k, d, fs = stokes_schur
    nv = fs.n_velocity_schur
    tr = make_schur_transform(fs.schur, d, fs.schur_vars, nv, kind)
    T = tr.matrix().toarray()
    St = transform_schur(fs.schur, tr).toarray()
    S = fs.schur.toarray()
    assert np.allclose(St, T.T @ S @ T, atol=1e-10 * np.abs(S).max())
    x = np.random.default_rng(0).standard_normal(S.shape[0])
    assert np.allclose(tr.apply(x), T @ x)
    assert np.allclose(tr.apply_T(x), T.T @ x)
    assert np.allclose(tr.apply_inv(tr.apply(x)), x)
    # one pressure-coupled velocity per group, with unit couplings
    Bt = St[:nv, nv:]
    coupled = np.flatnonzero(np.abs(Bt).sum(axis=1) > 1e-12)
    sig = tr.sigma_positions()
    corners = np.setdiff1d(coupled, sig)
    assert np.all(np.isin(corners, np.flatnonzero(np.isin(fs.schur_vars, d.corner_velocities))))
    nz = Bt[np.abs(Bt) > 1e-12]
    assert np.allclose(np.abs(nz), 1.0)


def test_mixed_couplings_are_rejected(stokes_schur):
    k, d, fs = stokes_schur
    S = fs.schur.tolil(copy=True)
    nv = fs.n_velocity_schur
    g = d.groups[0]
    p0 = int(np.flatnonzero(np.isin(fs.schur_vars, g.members))[0])
    S[p0, nv] = 0.5
    with pytest.raises(ValueError, match="mixes pressure couplings"):
        make_schur_transform(S.tocsr(), d, fs.schur_vars, nv)
