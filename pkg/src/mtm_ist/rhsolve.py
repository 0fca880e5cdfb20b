"""Beals-Coifman solution of the two matrix Riemann-Hilbert problems.

The unknown mu = M_- solves mu = I + P^-[mu R] on the contour. The Cauchy
projector is discretized by Nystrom quadrature that is uniform in the grid
parameter t. The principal value uses the alternating-point rule: on the
singular node's own branch only nodes at odd index distance contribute, with
doubled weight, which cancels the 1/(s - s_k) singularity by symmetry. The
other branch is integrated by the plain trapezoid rule.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .errors import NonconvergedError, SingularSystemError
from .lattice import SpectralGrid
from .spectra import ReflectionSet, evolve_reflections
from .tables import complex_columns, write_table

MOMENT_HEADER = ["x"] + [f"{p}_{part}{i}{j}" for p in ("m1", "m0")
                         for i in (1, 2) for j in (1, 2) for part in ("re", "im")]


class RHPChart(str, Enum):
    RHP_I = "I"     # omega-contour, reconstructs u
    RHP_II = "II"   # z-contour, reconstructs v


def cauchy_matrix(grid: SpectralGrid) -> np.ndarray:
    """Matrix of P^- at the nodes: (P^- f)_k = -f_k/2 + (1/2 pi i) PV sum_j w_jk f_j / (s_j - s_k)."""
    s = grid.nodes
    N = s.size
    half = N // 2
    idx = np.arange(N)
    branch = idx >= half
    jac = grid.step * grid.jacobian()
    same = branch[:, None] == branch[None, :]
    odd = ((idx[:, None] - idx[None, :]) % 2) == 1
    w = np.where(same, np.where(odd, 2.0, 0.0), 1.0) * jac[None, :]
    diff = s[None, :] - s[:, None]
    np.fill_diagonal(diff, 1.0)
    W = w / diff
    np.fill_diagonal(W, 0.0)
    return W / (2j * np.pi) - 0.5 * np.eye(N)


def cauchy_projector(f, grid: SpectralGrid, sign: int = -1, matrix=None):
    """Discrete P^+ (sign=+1) or P^- (sign=-1) applied along the first axis of f."""
    f = np.asarray(f, dtype=complex)
    if f.shape[0] != grid.size:
        raise ValueError(f"{f.shape[0]} samples for a contour of {grid.size} nodes")
    C = cauchy_matrix(grid) if matrix is None else matrix
    out = np.tensordot(C, f, axes=(1, 0))
    return out + f if sign > 0 else out


@dataclass(frozen=True, eq=False)
class JumpData:
    contour: SpectralGrid
    R: np.ndarray       # (N, 2, 2)
    x: float
    t: float
    chart: RHPChart


def _jump_matrices(rs: ReflectionSet, xs, chart: RHPChart):
    """R for every x in xs; shape (X, N, 2, 2)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if chart is RHPChart.RHP_I:
        s, a, b = rs.omega_grid.nodes, rs.rp, rs.rm
    else:
        s, a, b = rs.z_grid.nodes, rs.rhp, rs.rhm
    # s - 1/s is formed once; the phase is then linear in x
    ph = np.exp(0.5j * np.multiply.outer(xs, s - 1.0 / s))
    R = np.zeros((xs.size, s.size, 2, 2), complex)
    bc = np.conj(b)
    if chart is RHPChart.RHP_I:
        R[..., 0, 0] = (a * bc)[None]
        R[..., 0, 1] = bc[None] * np.conj(ph)
        R[..., 1, 0] = a[None] * ph
    else:
        R[..., 0, 1] = -bc[None] * ph
        R[..., 1, 0] = -a[None] * np.conj(ph)
        R[..., 1, 1] = (a * bc)[None]
    return R


def contour_of(rs: ReflectionSet, chart) -> SpectralGrid:
    return rs.omega_grid if RHPChart(chart) is RHPChart.RHP_I else rs.z_grid


def assemble_jump(rs: ReflectionSet, x: float, t: float, chart) -> JumpData:
    """Jump matrix at (x, t); reflections are evolved from rs.t to t first."""
    chart = RHPChart(chart)
    rs_t = evolve_reflections(rs, t - rs.t)
    return JumpData(contour_of(rs, chart), _jump_matrices(rs_t, [x], chart)[0], float(x), float(t), chart)


@dataclass(frozen=True, eq=False)
class RHSolution:
    mu: np.ndarray | None   # (N, 2, 2) rows of M_- at the nodes
    moment1: np.ndarray     # lim s (M - I)
    value0: np.ndarray      # M(x; 0)
    residual: float
    iterations: int = 0


def _operator_blocks(C, R):
    """Dense I - K for the row unknown (f, g): K(f, g) = (C(f R11 + g R21), C(f R12 + g R22))."""
    N = C.shape[0]
    A = np.eye(2 * N, dtype=complex)
    A[:N, :N] -= C * R[:, 0, 0][None]
    A[:N, N:] -= C * R[:, 1, 0][None]
    A[N:, :N] -= C * R[:, 0, 1][None]
    A[N:, N:] -= C * R[:, 1, 1][None]
    return A


def _moments(mu, R, grid: SpectralGrid):
    w = grid.weights()
    muR = np.einsum("...nij,...njk->...nik", mu, R)
    m1 = -np.einsum("n,...nij->...ij", w, muR) / (2j * np.pi)
    v0 = np.eye(2) + np.einsum("n,...nij->...ij", w / grid.nodes, muR) / (2j * np.pi)
    return m1, v0


def _rows_to_mu(sol, N):
    """sol (..., 2 rows, 2N) -> mu (..., N, 2, 2)."""
    f, g = sol[..., :N], sol[..., N:]
    return np.stack([f, g], axis=-1).swapaxes(-3, -2)


def identity_solution(N):
    mu = np.broadcast_to(np.eye(2, dtype=complex), (N, 2, 2)).copy()
    return RHSolution(mu, np.zeros((2, 2), complex), np.eye(2, dtype=complex), 0.0, 0)


def solve_rhp(jd: JumpData, method: str = "dense", tol: float = 1e-10, matrix=None,
              pivot_floor: float = 1e-12) -> RHSolution:
    """Solve (Id - P^-[. R]) mu = I for one x."""
    grid = jd.contour
    N = grid.size
    if not np.any(jd.R):
        return identity_solution(N)
    C = cauchy_matrix(grid) if matrix is None else matrix
    if method == "dense":
        A = _operator_blocks(C, jd.R)
        lu, piv = sla.lu_factor(A, check_finite=True)
        d = np.abs(np.diag(lu))
        if d.min() < pivot_floor * d.max():
            raise SingularSystemError(f"pivot ratio {d.min() / d.max():.3g} at x={jd.x}")
        rhs = np.zeros((2 * N, 2), complex)
        rhs[:N, 0] = 1
        rhs[N:, 1] = 1
        sol = sla.lu_solve((lu, piv), rhs).T   # rows of mu
        res = float(np.max(np.abs(A @ sol.T - rhs)))
        its = 0
    else:
        table = _solve_batch(C, jd.R[None], grid, tol)
        sol, res, its = table[3][0], float(table[2][0]), table[4]
    mu = _rows_to_mu(sol, N)
    m1, v0 = _moments(mu, jd.R, grid)
    if not np.isfinite(res) or res > max(tol, 1e3 * np.finfo(float).eps * N):
        raise NonconvergedError(f"residual {res:.3g} above tolerance {tol:.3g} at x={jd.x}")
    return RHSolution(mu, m1, v0, res, its)


# -- batched restarted GMRES ---------------------------------------------------

def batched_gmres(apply_A, b, tol=1e-10, restart=40, maxiter=300):
    """GMRES on a stack of independent systems sharing one operator structure.

    ``apply_A`` maps (B, n) -> (B, n). Orthogonalization is classical
    Gram-Schmidt applied twice. Returns (x, relative residual estimate, iterations).
    """
    B, n = b.shape
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b, axis=1)
    bnorm[bnorm == 0] = 1.0
    total = 0
    while True:
        r = b - apply_A(x) if total else b.copy()
        beta = np.linalg.norm(r, axis=1)
        rel = beta / bnorm
        if rel.max() < tol or total >= maxiter:
            return x, rel, total
        m = restart
        V = np.zeros((B, m + 1, n), complex)
        H = np.zeros((B, m + 1, m), complex)
        cs = np.zeros((B, m), complex)
        sn = np.zeros((B, m), complex)
        g = np.zeros((B, m + 1), complex)
        g[:, 0] = beta
        V[:, 0] = r / np.where(beta == 0, 1.0, beta)[:, None]
        k = 0
        for j in range(m):
            total += 1
            w = apply_A(V[:, j])
            Vj = V[:, :j + 1]
            h = np.einsum("bkn,bn->bk", Vj.conj(), w)
            w = w - np.einsum("bk,bkn->bn", h, Vj)
            h2 = np.einsum("bkn,bn->bk", Vj.conj(), w)
            w = w - np.einsum("bk,bkn->bn", h2, Vj)
            h = h + h2
            hn = np.linalg.norm(w, axis=1)
            H[:, :j + 1, j] = h
            H[:, j + 1, j] = hn
            V[:, j + 1] = w / np.where(hn == 0, 1.0, hn)[:, None]
            for i in range(j):
                t1 = cs[:, i] * H[:, i, j] + sn[:, i] * H[:, i + 1, j]
                H[:, i + 1, j] = -np.conj(sn[:, i]) * H[:, i, j] + np.conj(cs[:, i]) * H[:, i + 1, j]
                H[:, i, j] = t1
            a_, b_ = H[:, j, j], H[:, j + 1, j]
            den = np.sqrt(np.abs(a_) ** 2 + np.abs(b_) ** 2)
            den = np.where(den == 0, 1.0, den)
            cs[:, j] = np.conj(a_) / den
            sn[:, j] = np.conj(b_) / den
            H[:, j, j] = cs[:, j] * a_ + sn[:, j] * b_
            H[:, j + 1, j] = 0
            g[:, j + 1] = -np.conj(sn[:, j]) * g[:, j]
            g[:, j] = cs[:, j] * g[:, j]
            k = j + 1
            if (np.abs(g[:, j + 1]) / bnorm).max() < tol or total >= maxiter:
                break
        y = np.zeros((B, k), complex)
        for i in range(k - 1, -1, -1):
            diag = H[:, i, i]
            num = g[:, i] - np.einsum("bk,bk->b", H[:, i, i + 1:k], y[:, i + 1:k])
            y[:, i] = np.where(diag == 0, 0.0, num / np.where(diag == 0, 1.0, diag))
        x = x + np.einsum("bk,bkn->bn", y, V[:, :k])


def _solve_batch(C, R, grid, tol, restart=40, maxiter=300):
    """Solve for a stack of jumps R (X, N, 2, 2). Returns (moment1, value0, residual, rows, iterations)."""
    X, N = R.shape[:2]
    Ct = np.ascontiguousarray(C.T)

    def apply_A(vec):
        v = vec.reshape(X, 2, 2 * N)
        f, g = v[..., :N], v[..., N:]
        p = f * R[:, None, :, 0, 0] + g * R[:, None, :, 1, 0]
        q = f * R[:, None, :, 0, 1] + g * R[:, None, :, 1, 1]
        cp = (np.concatenate([p, q], axis=1).reshape(-1, N) @ Ct).reshape(X, 2, 2, N)
        return np.concatenate([f - cp[:, 0], g - cp[:, 1]], axis=2).reshape(X * 2, 2 * N)

    rhs = np.zeros((X, 2, 2 * N), complex)
    rhs[:, 0, :N] = 1
    rhs[:, 1, N:] = 1
    rhs = rhs.reshape(X * 2, 2 * N)
    sol, _, its = batched_gmres(apply_A, rhs, tol=tol, restart=restart, maxiter=maxiter)
    true_res = np.max(np.abs(apply_A(sol) - rhs).reshape(X, -1), axis=1)
    sol = sol.reshape(X, 2, 2 * N)
    mu = _rows_to_mu(sol, N)
    m1, v0 = _moments(mu, R, grid)
    return m1, v0, true_res, sol, its


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Per-x moments of one Riemann-Hilbert problem."""

    x: np.ndarray
    moment1: np.ndarray   # (X, 2, 2)
    value0: np.ndarray    # (X, 2, 2)
    residual: np.ndarray  # (X,)
    iterations: int
    chart: RHPChart
    t: float


def _batch_job(args):
    C, rs, xs, chart, grid, tol = args
    R = _jump_matrices(rs, xs, chart)
    zero = ~np.any(R.reshape(R.shape[0], -1), axis=1)
    m1 = np.zeros((xs.size, 2, 2), complex)
    v0 = np.broadcast_to(np.eye(2, dtype=complex), (xs.size, 2, 2)).copy()
    res = np.zeros(xs.size)
    its = 0
    if np.any(~zero):
        a, b, c, _, its = _solve_batch(C, R[~zero], grid, tol)
        m1[~zero], v0[~zero], res[~zero] = a, b, c
    return m1, v0, res, its


def solve_on_grid(rs: ReflectionSet, xs, t: float, chart, tol: float = 1e-10, workers: int = 1,
                  chunk: int = 100) -> MomentTable:
    """Moments of the chosen problem at every x in xs, at time t."""
    chart = RHPChart(chart)
    xs = np.asarray(xs, dtype=float)
    rs_t = evolve_reflections(rs, t - rs.t)
    grid = contour_of(rs, chart)
    if rs_t.is_zero():
        X = xs.size
        return MomentTable(xs, np.zeros((X, 2, 2), complex),
                           np.broadcast_to(np.eye(2, dtype=complex), (X, 2, 2)).copy(),
                           np.zeros(X), 0, chart, float(t))
    C = cauchy_matrix(grid)
    jobs = [(C, rs_t, xs[i:i + chunk], chart, grid, tol) for i in range(0, xs.size, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_batch_job, jobs))
    else:
        out = [_batch_job(j) for j in jobs]
    m1 = np.concatenate([o[0] for o in out])
    v0 = np.concatenate([o[1] for o in out])
    res = np.concatenate([o[2] for o in out])
    its = max(o[3] for o in out)
    if not np.all(np.isfinite(res)) or res.max() > tol * 10:
        bad = int(np.argmax(res))
        raise NonconvergedError(f"residual {res[bad]:.3g} at x={xs[bad]} above tolerance {tol:.3g}")
    return MomentTable(xs, m1, v0, res, its, chart, float(t))


def write_moment_table(path, table: MomentTable, fmt=None):
    cols = [table.x]
    for arr in (table.moment1, table.value0):
        for i in range(2):
            for j in range(2):
                cols += [arr[:, i, j].real, arr[:, i, j].imag]
    write_table(path, MOMENT_HEADER, np.column_stack(cols), fmt)


def write_contour_dump(path, jd: JumpData, sol: RHSolution):
    header = ["s"] + [f"{part}_mu{i}{j}" for i in (1, 2) for j in (1, 2) for part in ("re", "im")]
    mu = sol.mu
    write_table(path, header, complex_columns(jd.contour.nodes, mu[:, 0, 0], mu[:, 0, 1],
                                              mu[:, 1, 0], mu[:, 1, 1]))


def default_workers(requested=None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("MTM_IST_WORKERS")
    return max(1, int(env)) if env else 1
