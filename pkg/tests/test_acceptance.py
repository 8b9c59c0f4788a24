"""Acceptance criteria 1-11.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured values
and then asserts.  Tolerances are the published ones; criteria that the
implementation does not meet fail here on purpose.

Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""
import functools
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.linalg as sla

from fmatrix.bench import RunConfig, build_system, run
from fmatrix.krylov import condition_estimate
from fmatrix.precond import (estimate_gamma, estimate_gamma_symbol, laplace_1d_pair_blocks,
                             two_block_preconditioner)
from fmatrix.solver import HybridSolver

pytestmark = pytest.mark.slow


def emit(capsys, n, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


@functools.lru_cache(maxsize=None)
def solver(problem, dim, n_x, s_x) -> HybridSolver:
    return HybridSolver(build_system(RunConfig(problem, dim, n_x, s_x)), s_x)


def bench(problem, dim, n_x, s_x, kappa=False):
    return run(RunConfig(problem, dim, n_x, s_x, kappa=kappa),
               solver=solver(problem, dim, n_x, s_x))


def within(x, ref, rel):
    return x is not None and abs(x - ref) <= rel * ref


def test_criterion_01_poisson_grid_refinement(capsys):
    t0 = time.perf_counter()
    reps = [bench("poisson", 2, nx, 8, kappa=True) for nx in (32, 64, 128, 256)]
    wall = time.perf_counter() - t0
    its = [r.iter for r in reps]
    kap = [r.kappa for r in reps]
    fill1 = [r.fill1 for r in reps]
    ok_it = all(abs(i - 21) <= 2 for i in its) and len(set(its)) == 1
    ok_kap = all(within(k, 7.04, 0.05) for k in kap)
    ok_fill = all(5.3 <= f <= 5.8 for f in fill1)
    ok = ok_it and ok_kap and ok_fill and wall < 60 and all(r.converged for r in reps)
    emit(capsys, 1, ok, f"iter {its} (21+-2, equal) {'ok' if ok_it else 'bad'}; "
         f"kappa {[round(k, 2) for k in kap]} (7.04+-5%) {'ok' if ok_kap else 'bad'}; "
         f"fill1 {[round(f, 2) for f in fill1]} ([5.3, 5.8]) {'ok' if ok_fill else 'bad'}; "
         f"{wall:.0f} s (<60)")
    assert ok


def test_criterion_02_poisson_subdomain_size(capsys):
    ref = {4: 16, 8: 21, 16: 27, 32: 32}
    its = {sx: bench("poisson", 2, 256, sx).iter for sx in ref}
    inc = all(its[a] < its[b] for a, b in zip([4, 8, 16], [8, 16, 32]))
    ok = inc and all(abs(its[s] - ref[s]) <= 3 for s in ref)
    emit(capsys, 2, ok, f"iter {list(its.values())} vs {list(ref.values())} +-3, "
         f"increasing {inc}")
    assert ok


def _saddle_table(capsys, n, problem, ref_iter, ref_kappa):
    reps = {nx: bench(problem, 2, nx, 8, kappa=nx == 64) for nx in ref_iter}
    its = [reps[nx].iter for nx in ref_iter]
    ok_it = all(abs(reps[nx].iter - ref_iter[nx]) <= 3 for nx in ref_iter)
    kap = reps[64].kappa
    ok_kap = within(kap, ref_kappa, 0.10)
    drift = max(r.constraint_drift for r in reps.values())
    return reps, its, ok_it, kap, ok_kap, drift


def test_criterion_03_darcy(capsys):
    ref = {16: 16, 32: 25, 64: 26, 128: 26}
    reps, its, ok_it, kap, ok_kap, _ = _saddle_table(capsys, 3, "darcy", ref, 12.2)
    ok = ok_it and ok_kap and all(r.converged for r in reps.values())
    emit(capsys, 3, ok, f"iter {its} vs {list(ref.values())} +-3 {'ok' if ok_it else 'bad'}; "
         f"kappa(64) {kap:.2f} vs 12.2+-10% {'ok' if ok_kap else 'bad'}")
    assert ok


def test_criterion_04_stokes(capsys):
    ref = {16: 18, 32: 27, 64: 31, 128: 31}
    reps, its, ok_it, kap, ok_kap, drift = _saddle_table(capsys, 4, "stokes", ref, 13.8)
    ok_drift = drift <= 1e-10
    ok = ok_it and ok_kap and ok_drift and all(r.converged for r in reps.values())
    emit(capsys, 4, ok, f"iter {its} vs {list(ref.values())} +-3 {'ok' if ok_it else 'bad'}; "
         f"kappa(64) {kap:.2f} vs 13.8+-10% {'ok' if ok_kap else 'bad'}; "
         f"drift {drift:.1e} (<=1e-10)")
    assert ok


def test_criterion_05_3d_smoke(capsys):
    t0 = time.perf_counter()
    p = bench("poisson", 3, 16, 8, kappa=True)
    s = bench("stokes", 3, 8, 4)
    wall = time.perf_counter() - t0
    ok = (abs(p.iter - 24) <= 2 and within(p.kappa, 10.1, 0.10) and abs(s.iter - 34) <= 3
          and wall < 120 and p.converged and s.converged)
    emit(capsys, 5, ok, f"3D Poisson iter {p.iter} (24+-2), kappa {p.kappa:.2f} (10.1+-10%); "
         f"3D Stokes iter {s.iter} (34+-3); {wall:.0f} s (<120)")
    assert ok


TABLES = {
    "poisson": {32: (1024, 5112, 240, 48), 64: (4096, 20472, 960, 192),
                128: (16384, 81912, 3840, 768), 256: (65536, 327672, 15360, 3072)},
    "darcy": {16: (736, 2400, 65, 17), 32: (3008, 9920, 385, 109),
              64: (12160, 40320, 1793, 533), 128: (48896, 162560, 7681, 2341),
              256: (196096, 652800, 31745, 9797)},
    "stokes": {16: (736, 4196, 65, 17), 32: (3008, 17604, 385, 109),
               64: (12160, 72068, 1793, 533), 128: (48896, 291588, 7681, 2341),
               256: (196096, 1172996, 31745, 9797)},
}


def test_criterion_06_structural_counts(capsys):
    bad = []
    for problem, rows in TABLES.items():
        for nx, ref in rows.items():
            hs = solver(problem, 2, nx, 8)
            got = (hs.system.size, hs.system.nnz, hs.schur.shape[0], hs.preconditioner.reduced.size)
            if got != ref:
                bad.append(f"{problem} {nx}: {got} != {ref}")
    n_rows = sum(len(r) for r in TABLES.values())
    emit(capsys, 6, not bad, f"{n_rows - len(bad)}/{n_rows} table rows exact" +
         (f"; {bad}" if bad else ""))
    assert not bad


def test_criterion_07_one_dimensional_dropping(capsys):
    A11, A12, A22 = laplace_1d_pair_blocks(32)
    m = A11.shape[0]
    ok_blocks = True
    for i in range(m):
        nb = [(i - 1) % m, i, (i + 1) % m]
        ok_blocks &= np.array_equal(A11[i, nb], [1.0, 6.0, 1.0])
        ok_blocks &= np.array_equal(A22[i, nb], [-1.0, 2.0, -1.0])
        ok_blocks &= np.count_nonzero(A11[i]) == 3 and np.count_nonzero(A22[i]) == 3
    g = estimate_gamma_symbol({-1: 1.0, 0: 6.0, 1: 1.0}, {-1: 1.0, 1: -1.0},
                              {-1: -1.0, 0: 2.0, 1: -1.0})
    ok_gamma = abs(g * g - 0.5) < 1e-10
    # measured condition of diag(A11, A22)^{-1} A off the common null vector
    st = np.block([[A11, A12], [A12.T, A22]])
    vs = np.arange(m, 2 * m)
    M = two_block_preconditioner(st, vs).toarray()
    null = np.concatenate([np.zeros(m), np.ones(m)])
    Q = sla.null_space(null[None, :])
    lam = sla.eigh(Q.T @ st @ Q, Q.T @ M @ Q, eigvals_only=True)
    kap1 = lam.max() / lam.min()
    gf = estimate_gamma(st, vs)
    bound = (1 + g) / (1 - g)
    # the same bound for the Poisson Schur complement with its own gamma
    pc = solver("poisson", 2, 32, 8).preconditioner
    gp = estimate_gamma(pc.st, pc.vsigma)
    kap2 = condition_estimate(pc.st, two_block_preconditioner(pc.st, pc.vsigma))
    ok_bound = (kap1 <= (1 + gf) / (1 - gf) * (1 + 1e-10) and kap1 <= bound * (1 + 1e-10)
                and kap2 <= (1 + gp) / (1 - gp) * (1 + 1e-10))
    ok = ok_blocks and ok_gamma and ok_bound
    emit(capsys, 7, ok, f"blocks exact {ok_blocks}; gamma^2 {g * g:.12f} (0.5+-1e-10); "
         f"1D kappa {kap1:.4f} <= {bound:.4f}; Poisson kappa {kap2:.3f} <= "
         f"{(1 + gp) / (1 - gp):.3f}")
    assert ok


def test_criterion_08_theorem_suite(capsys):
    import test_theorems as th
    failures = []
    for prop in (th.test_schur_steps_stay_f_matrices, th.test_b_sequence_is_independent_of_a_values):
        try:
            prop()  # 200 hypothesis examples each
        except Exception as err:  # report, then fail below
            failures.append(f"{prop.__name__}: {type(err).__name__}")
    emit(capsys, 8, not failures, "2 properties x 200 random F-matrices (n<=60, m<=20) against "
         "dense elimination" + (f"; {failures}" if failures else ""))
    assert not failures


DESK = [("poisson", 2, 32, 8), ("poisson", 2, 64, 8), ("darcy", 2, 16, 8), ("darcy", 2, 32, 8),
        ("darcy", 2, 64, 8), ("stokes", 2, 16, 8), ("stokes", 2, 32, 8), ("stokes", 2, 64, 8),
        ("poisson", 3, 16, 8), ("darcy", 3, 8, 4), ("stokes", 3, 8, 4)]


def _ritz(hs: HybridSolver):
    """Eigenvalues of M^{-1} S (on the constraint kernel for saddle systems)."""
    S = hs.schur.toarray()
    M = hs.preconditioner.matrix().toarray()
    nv = hs.n_velocity_schur
    if nv < S.shape[0]:
        Q = sla.null_space(S[nv:, :nv])
        S, M = Q.T @ S[:nv, :nv] @ Q, Q.T @ M[:nv, :nv] @ Q
    return sla.eigvals(S, M)


def test_criterion_09_spd_preservation(capsys):
    bad = []
    worst_imag = 0.0
    min_real = np.inf
    for case in DESK:
        hs = solver(*case)
        Mt = hs.preconditioner.matrix_transformed().toarray()
        nv = hs.n_velocity_schur
        try:
            sla.cholesky(0.5 * (Mt[:nv, :nv] + Mt[:nv, :nv].T))
        except sla.LinAlgError:
            bad.append(f"{case} cholesky")
        lam = _ritz(hs)
        imag = float(np.max(np.abs(lam.imag)))
        worst_imag = max(worst_imag, imag)
        min_real = min(min_real, float(lam.real.min()))
        if imag > 1e-8 or lam.real.min() <= 0:
            bad.append(f"{case} ritz")
    emit(capsys, 9, not bad, f"{len(DESK)} Schur complements: dropped M Cholesky ok, "
         f"max |Im| {worst_imag:.1e} (<=1e-8), min Re {min_real:.3g} (>0)" +
         (f"; {bad}" if bad else ""))
    assert not bad


def test_criterion_10_cavity(capsys):
    r = run(RunConfig("cavity", 2, 64, 8, Re=500.0, solver="gmres"))
    ok = r.converged and r.iter <= 120
    emit(capsys, 10, ok, f"cavity Re=500 n_x=64 GMRES {r.iter} iterations (<=120), "
         f"residual {r.final_relative_residual:.1e} (tol 1e-6)")
    assert ok


@pytest.mark.skipif(os.environ.get("FMATRIX_STRETCH") != "1",
                    reason="Re=8000 continuation takes several minutes; set FMATRIX_STRETCH=1")
def test_criterion_10_stretch_re8000(capsys):
    r = run(RunConfig("cavity", 2, 64, 8, Re=8000.0, solver="gmres"))
    ok = r.converged and abs(r.iter - 185) <= 0.15 * 185
    emit(capsys, "10 (stretch)", ok, f"cavity Re=8000 n_x=64 GMRES {r.iter} iterations "
         f"(185+-15%)")
    assert ok


def test_criterion_11_determinism(capsys):
    cmd = [sys.executable, "-m", "fmatrix", "--problem", "stokes", "--nx", "16", "32",
           "--kappa", "--format", "csv", "--seed", "3"]
    outs = [subprocess.run(cmd, capture_output=True, check=True).stdout for _ in range(2)]
    ok = outs[0] == outs[1] and len(outs[0].splitlines()) == 3
    emit(capsys, 11, ok, f"two CLI runs, {len(outs[0])} bytes each, identical {outs[0] == outs[1]}")
    assert ok
