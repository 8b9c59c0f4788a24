"""Krylov solvers on the Schur complement and condition estimates.

All solvers stop on the true relative residual ``||b - op x|| / ||b||``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class KrylovBreakdown(ArithmeticError):
    def __init__(self, msg, iteration):
        super().__init__(f"{msg} (iteration {iteration})")
        self.iteration = iteration


@dataclass
class IterationTrace:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    final_relative_residual: float = np.inf
    constraint_drift: list = field(default_factory=list)
    message: str = ""

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "relative_residual"])
            for i, r in enumerate(self.residual_history):
                w.writerow([i, f"{r:.17g}"])


def as_operator(op):
    if callable(op) and not sp.issparse(op) and not isinstance(op, np.ndarray):
        return op
    return lambda x: op @ x


@dataclass
class ConstraintContext:
    """Constraint ``B^T v = b2`` on the leading ``nv`` unknowns of the Schur vector."""

    nv: int
    B: sp.csr_matrix
    b2: np.ndarray
    tolerance: float = 1e-10

    def drift(self, v: np.ndarray) -> float:
        nrm = np.linalg.norm(v)
        res = np.linalg.norm(self.B.T @ v - self.b2)
        return float(res / nrm) if nrm > 0 else float(res)


def pcg(op, m, b, tol: float = 1e-8, maxit: int = 1000, x0=None):
    A = as_operator(op)
    M = as_operator(m) if m is not None else (lambda r: r.copy())
    b = np.asarray(b, dtype=float)
    bn = np.linalg.norm(b)
    tr = IterationTrace()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bn == 0.0:
        tr.converged, tr.final_relative_residual = True, 0.0
        tr.residual_history.append(0.0)
        return np.zeros_like(b), tr
    r = b - A(x)
    res = np.linalg.norm(r) / bn
    tr.residual_history.append(res)
    z = M(r)
    d = z.copy()
    rz = r @ z
    it = 0
    while res > tol and it < maxit:
        q = A(d)
        dq = d @ q
        if dq <= 0.0:
            raise KrylovBreakdown("non-positive curvature", it + 1)
        alpha = rz / dq
        x += alpha * d
        r -= alpha * q
        it += 1
        res = np.linalg.norm(r) / bn
        if res <= tol:
            # confirm on the true residual
            r = b - A(x)
            res = np.linalg.norm(r) / bn
            tr.residual_history.append(res)
            if res <= tol:
                break
        else:
            tr.residual_history.append(res)
        z = M(r)
        rz_new = r @ z
        if rz_new <= 0.0 and res > tol:
            raise KrylovBreakdown("preconditioner is not positive definite", it)
        d = z + (rz_new / rz) * d
        rz = rz_new
    tr.iterations = it
    tr.final_relative_residual = float(np.linalg.norm(b - A(x)) / bn)
    tr.converged = tr.final_relative_residual <= tol
    return x, tr


def ppcg(op, m, ctx: ConstraintContext, b, tol: float = 1e-8, maxit: int = 1000):
    """Projected preconditioned CG for ``[A B; B^T 0] [v; p] = [b1; b2]``.

    ``m`` must be a constraint preconditioner (exact ``B`` part), so that
    ``m([r; 0])`` returns a velocity in the kernel of ``B^T`` together with a
    multiplier update.  The residual is updated with that multiplier every
    iteration, which keeps it consistent with the pressure iterate.
    """
    K = as_operator(op)
    M = as_operator(m)
    b = np.asarray(b, dtype=float)
    nv = ctx.nv
    ntot = b.size
    bn = np.linalg.norm(b)
    tr = IterationTrace()
    if bn == 0.0:
        tr.converged, tr.final_relative_residual = True, 0.0
        return np.zeros_like(b), tr

    def Av(v):
        return K(np.concatenate([v, np.zeros(ntot - nv)]))[:nv]

    def By(y):
        return K(np.concatenate([np.zeros(nv), y]))[:nv]

    if np.linalg.norm(ctx.b2) == 0.0:
        x = np.zeros_like(b)
    else:
        x = M(b)
        if np.linalg.norm(ctx.B.T @ x[:nv] - ctx.b2) > max(ctx.tolerance, 1e-12) * bn * 1e3:
            raise KrylovBreakdown("particular solution violates the constraint", 0)
    rr = b - K(x)
    rho = rr[:nv].copy()

    def project(rho):
        z = M(np.concatenate([rho, np.zeros(ntot - nv)]))
        return z[:nv], z[nv:]

    def resnorm(rho, v):
        rp = ctx.b2 - ctx.B.T @ v
        return np.sqrt(rho @ rho + rp @ rp) / bn

    g, y = project(rho)
    x[nv:] += y
    rho -= By(y)
    res = resnorm(rho, x[:nv])
    tr.residual_history.append(res)
    tr.constraint_drift.append(ctx.drift(x[:nv]))
    d = g.copy()
    rg = rho @ g
    it = 0
    while res > tol and it < maxit:
        q = Av(d)
        dq = d @ q
        if dq <= 0.0:
            raise KrylovBreakdown("non-positive curvature on the constraint kernel", it + 1)
        alpha = rg / dq
        x[:nv] += alpha * d
        rho -= alpha * q
        g, y = project(rho)
        x[nv:] += y
        rho -= By(y)
        it += 1
        res = resnorm(rho, x[:nv])
        if res <= tol:
            rr = b - K(x)
            res = np.linalg.norm(rr) / bn
            rho = rr[:nv].copy()
            if res > tol:
                g, y = project(rho)
                x[nv:] += y
                rho -= By(y)
        tr.residual_history.append(res)
        tr.constraint_drift.append(ctx.drift(x[:nv]))
        rg_new = rho @ g
        d = g + (rg_new / rg) * d if rg != 0 else g.copy()
        rg = rg_new
    tr.iterations = it
    tr.final_relative_residual = float(np.linalg.norm(b - K(x)) / bn)
    tr.converged = tr.final_relative_residual <= tol
    return x, tr


def gmres(op, m, b, tol: float = 1e-8, maxit: int = 500, restart: int | None = None,
          x0=None, stagnation_window: int = 50, stagnation_factor: float = 1e-3):
    """Right-preconditioned GMRES (modified Gram-Schmidt, Givens rotations).

    The monitored residual is the true residual of the unpreconditioned
    system.  Unrestarted unless ``restart`` is given.
    """
    A = as_operator(op)
    M = as_operator(m) if m is not None else (lambda r: np.array(r, dtype=float))
    b = np.asarray(b, dtype=float)
    bn = np.linalg.norm(b)
    tr = IterationTrace()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bn == 0.0:
        tr.converged, tr.final_relative_residual = True, 0.0
        return np.zeros_like(b), tr
    cycle = maxit if restart is None else min(restart, maxit)
    total = 0
    r = b - A(x)
    beta = np.linalg.norm(r)
    tr.residual_history.append(beta / bn)
    while total < maxit and beta / bn > tol:
        V = np.zeros((b.size, cycle + 1))
        Z = np.zeros((b.size, cycle))
        H = np.zeros((cycle + 1, cycle))
        cs = np.zeros(cycle)
        sn = np.zeros(cycle)
        s = np.zeros(cycle + 1)
        s[0] = beta
        V[:, 0] = r / beta
        j_done = 0
        for j in range(cycle):
            Z[:, j] = M(V[:, j])
            w = A(Z[:, j])
            for i in range(j + 1):
                H[i, j] = w @ V[:, i]
                w -= H[i, j] * V[:, i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0:
                V[:, j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if den == 0 else (H[j, j] / den, H[j + 1, j] / den)
            H[j, j] = den
            H[j + 1, j] = 0.0
            s[j + 1] = -sn[j] * s[j]
            s[j] = cs[j] * s[j]
            total += 1
            j_done = j + 1
            rel = abs(s[j + 1]) / bn
            tr.residual_history.append(rel)
            h = tr.residual_history
            if len(h) > stagnation_window and h[-1] > stagnation_factor * h[-1 - stagnation_window] \
                    and h[-1] > 0.999 * h[-1 - stagnation_window]:
                tr.message = f"stagnation: residual decreased by less than {stagnation_factor:g} " \
                             f"over {stagnation_window} iterations"
            if rel <= tol or total >= maxit or H[j, j] == 0.0 or tr.message:
                break
        y = sla.solve_triangular(H[:j_done, :j_done], s[:j_done])
        x += Z[:, :j_done] @ y
        r = b - A(x)
        beta = np.linalg.norm(r)
        if tr.message:
            break
        if beta / bn <= tol or restart is None:
            if beta / bn > tol and total < maxit:
                continue
            break
    tr.iterations = total
    tr.final_relative_residual = float(np.linalg.norm(b - A(x)) / bn)
    tr.converged = tr.final_relative_residual <= tol
    if tr.residual_history:
        tr.residual_history[-1] = tr.final_relative_residual
    return x, tr


def _dense(op, n):
    if sp.issparse(op):
        return op.toarray()
    if isinstance(op, np.ndarray):
        return op
    return np.column_stack([op(e) for e in np.eye(n)])


def condition_estimate(S, M, nv: int | None = None, dense_max: int = 2000, steps: int = 40,
                       seed: int = 0) -> float:
    """``|lambda|_max / |lambda|_min`` of the pencil ``(S, M)``.

    ``M`` may be a matrix or (for the Lanczos route) a callable applying
    ``M^{-1}``.  With ``nv`` given the problem is a saddle system with
    constraint preconditioner: the spectrum is the A-pencil on the kernel of
    ``B^T`` together with the unit eigenvalues of the constraint part; the
    constant-pressure null space is excluded.
    """
    n = S.shape[0]
    saddle = nv is not None and nv < n
    if n <= dense_max and not callable(M):
        Sd = _dense(S, n)
        Md = _dense(M, n)
        if saddle:
            Q = sla.null_space(Sd[nv:, :nv])
            As = Q.T @ Sd[:nv, :nv] @ Q
            Ms = Q.T @ Md[:nv, :nv] @ Q
            lam = _pencil_eigs(As, Ms)
            lam = np.abs(np.concatenate([lam, [1.0]]))
        else:
            lam = np.abs(_pencil_eigs(Sd, Md))
        return float(lam.max() / lam.min())
    return lanczos_condition(S, M, nv, steps=steps, seed=seed)


def _pencil_eigs(A, B):
    if np.allclose(A, A.T, atol=1e-12 * max(np.abs(A).max(), 1.0)) and \
            np.allclose(B, B.T, atol=1e-12 * max(np.abs(B).max(), 1.0)):
        return sla.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), eigvals_only=True)
    return sla.eigvals(A, B).real


def lanczos_condition(S, Minv, nv: int | None = None, steps: int = 40, seed: int = 0) -> float:
    """Extreme Ritz values of the preconditioned operator from preconditioned
    Lanczos with full reorthogonalisation in the ``M`` inner product.

    ``Minv`` applies the preconditioner inverse.  For saddle systems the
    Lanczos vectors live in the constraint kernel; the residual vectors are
    corrected with the multiplier returned by the constraint preconditioner
    (as in PPCG) so their range(B) part stays bounded.
    """
    A = as_operator(S)
    Mi = as_operator(Minv)
    n = S.shape[0]
    rng = np.random.default_rng(seed)
    saddle = nv is not None and nv < n
    m = nv if saddle else n

    def pad(v, tail=None):
        if not saddle:
            return v
        return np.concatenate([v, np.zeros(n - nv) if tail is None else tail])

    def prec(r):
        z = Mi(pad(r))
        if not saddle:
            return z, r
        By = A(pad(np.zeros(nv), z[nv:]))[:nv]
        return z[:nv], r - By

    def op(v):
        return A(pad(v))[:m]

    r = rng.standard_normal(m)
    z, r = prec(r)
    Rs, Zs = [], []
    alphas, betas = [], []
    beta = np.sqrt(max(r @ z, 0.0))
    beta0 = beta
    for _ in range(min(steps, m)):
        if beta <= 1e-10 * beta0:
            break
        v = z / beta
        u = r / beta
        Zs.append(v)
        Rs.append(u)
        w = op(v)
        alpha = v @ w
        alphas.append(alpha)
        r = w - alpha * u - (betas[-1] * Rs[-2] if betas else 0.0)
        for _ in range(2):
            for uu, vv in zip(Rs, Zs):
                r = r - (vv @ r) * uu
        z, r = prec(r)
        beta = np.sqrt(max(r @ z, 0.0))
        betas.append(beta)
    j = len(alphas)
    T = np.diag(alphas) + np.diag(betas[:j - 1], 1) + np.diag(betas[:j - 1], -1)
    theta = np.abs(sla.eigvalsh(T))
    if saddle:
        theta = np.concatenate([theta, [1.0]])
    return float(theta.max() / theta.min())
