import numpy as np
import pytest
import scipy.sparse as sp

from fmatrix.decomp import GridSpec, decompose
from fmatrix.factor import eliminate_interiors
from fmatrix.krylov import (ConstraintContext, IterationTrace, KrylovBreakdown, condition_estimate,
                            gmres, lanczos_condition, pcg, ppcg)
from fmatrix.precond import drop_and_factor
from fmatrix.problems import gen_poisson, gen_stokes, random_divergence_free_system


def spd(n, seed=0):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    return Q @ np.diag(np.linspace(1, 50, n)) @ Q.T


def test_pcg_solves_spd():
    A = spd(40)
    b = np.ones(40)
    x, tr = pcg(A, None, b, tol=1e-10)
    assert tr.converged and np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert tr.iterations <= 40
    x2, tr2 = pcg(A, np.diag(1 / np.diag(A)), b, tol=1e-10)
    assert np.allclose(x, x2, atol=1e-8)


def test_pcg_zero_rhs_and_breakdown():
    x, tr = pcg(np.eye(3), None, np.zeros(3))
    assert tr.converged and not x.any()
    with pytest.raises(KrylovBreakdown):
        pcg(-np.eye(3), None, np.ones(3))


def test_gmres_nonsymmetric_and_restart():
    rng = np.random.default_rng(1)
    A = np.eye(50) * 4 + rng.standard_normal((50, 50)) * 0.3
    b = rng.standard_normal(50)
    x, tr = gmres(A, None, b, tol=1e-10)
    assert tr.converged and np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    x2, tr2 = gmres(A, None, b, tol=1e-10, restart=5, maxit=400)
    assert tr2.converged and tr2.iterations >= tr.iterations
    # right preconditioning with the exact inverse converges in one step
    Ainv = np.linalg.inv(A)
    _, tr3 = gmres(A, lambda r: Ainv @ r, b, tol=1e-10)
    assert tr3.iterations == 1


def test_gmres_reports_stagnation():
    # a rotation: unpreconditioned restarted GMRES(1) makes no progress
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x, tr = gmres(A, None, np.array([1.0, 0.0]), tol=1e-10, restart=1, maxit=200,
                  stagnation_window=20)
    assert not tr.converged
    assert "stagnat" in tr.message


@pytest.fixture(scope="module")
def stokes():
    k = gen_stokes(2, 16)
    fs = eliminate_interiors(k, decompose(GridSpec(2, 16, 8), k))
    return k, fs, drop_and_factor(fs, k)


def test_ppcg_keeps_constraint(stokes):
    k, fs, pc = stokes
    x, b = random_divergence_free_system(k, 0)
    g, fwd = fs.condense_rhs(b)
    nv = fs.n_velocity_schur
    ctx = ConstraintContext(nv, fs.schur[:nv, nv:], g[nv:])
    xs, tr = ppcg(fs.schur, pc, ctx, g, tol=1e-8)
    assert tr.converged
    assert max(tr.constraint_drift) <= 1e-10
    xf = fs.expand_solution(xs, fwd, k.size)
    assert np.linalg.norm(xf[:k.n] - x[:k.n]) <= 1e-6 * np.linalg.norm(x[:k.n])


def test_ppcg_nonzero_constraint_rhs(stokes):
    k, fs, pc = stokes
    nv = fs.n_velocity_schur
    rng = np.random.default_rng(4)
    xs_true = rng.standard_normal(fs.schur.shape[0])
    g = fs.schur @ xs_true
    ctx = ConstraintContext(nv, fs.schur[:nv, nv:], g[nv:])
    xs, tr = ppcg(fs.schur, pc, ctx, g, tol=1e-10)
    assert tr.converged
    assert np.allclose(xs[:nv], xs_true[:nv], atol=1e-7)


def test_condition_estimate_routes_agree(stokes):
    k, fs, pc = stokes
    nv = fs.n_velocity_schur
    dense = condition_estimate(fs.schur, pc.matrix(), nv)
    lz = lanczos_condition(fs.schur, pc, nv, steps=60)
    assert abs(lz - dense) <= 1e-3 * dense
    kp = gen_poisson(2, 32)
    fsp = eliminate_interiors(kp, decompose(GridSpec(2, 32, 8), kp))
    pcp = drop_and_factor(fsp, kp)
    d2 = condition_estimate(fsp.schur, pcp.matrix())
    l2 = condition_estimate(fsp.schur, pcp, steps=60)
    assert abs(l2 - d2) <= 1e-3 * d2


def test_trace_csv(tmp_path):
    tr = IterationTrace(2, [1.0, 0.1, 0.01], True, 0.01)
    tr.dump_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,relative_residual" and len(lines) == 4
