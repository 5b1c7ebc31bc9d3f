"""Linear solvers: CG, restarted GMRES, geometric multigrid, and oracles.

All iterative solvers are matrix-free (they accept a callable, a
LinearOperator, or an ndarray) and operate on arrays of any shape. The
multigrid hierarchy targets the implicit time-stepping operator
A = I - (dt^2/2) c^2 Lap_2h on nested Dirichlet grids: red-black
Gauss-Seidel smoothing (symmetrized order so V-cycles can precondition CG),
full-weighting restriction, (bi)linear prolongation, and a dense direct
solve on the coarsest level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid import BC, CartesianGrid, DiscreteOperator, interior_matrix, interior_values, scatter_interior

__all__ = [
    "LinearOperator",
    "SolveReport",
    "cg_solve",
    "gmres_solve",
    "MultigridHierarchy",
    "mg_vcycle",
    "dense_symmetric_eig",
    "thomas_solve",
    "TridiagFactorization",
]


@dataclass
class LinearOperator:
    matvec: callable
    size: int
    symmetric: bool = False

    def __call__(self, x):
        return self.matvec(x)


def _as_operator(A):
    if isinstance(A, LinearOperator):
        return A
    if isinstance(A, np.ndarray):
        return LinearOperator(lambda x: A @ x, A.shape[0], symmetric=bool(np.allclose(A, A.T)))
    if callable(A):
        return LinearOperator(A, -1)
    raise TypeError(f"cannot interpret {type(A)} as a linear operator")


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    work_units: int
    message: str = ""
    residual_history: list = field(default_factory=list)


def cg_solve(A, b, tol=1e-12, maxit=1000, preconditioner=None, x0=None):
    """Preconditioned conjugate gradient; stops at ||r|| <= tol*||b||."""
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, 0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    work = 0
    if x0 is None:
        r = b.copy()
    else:
        r = b - A(x)
        work += 1
    z = r if preconditioner is None else preconditioner(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    rnorm = np.linalg.norm(r)
    for k in range(maxit):
        if rnorm <= tol * bnorm:
            return x, SolveReport(k, rnorm / bnorm, True, work)
        Ap = A(p)
        work += 1
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0.0 or not np.isfinite(pAp):
            return x, SolveReport(k, rnorm / bnorm, False, work, message="breakdown: p^T A p <= 0")
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rnorm = np.linalg.norm(r)
        z = r if preconditioner is None else preconditioner(r)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    converged = rnorm <= tol * bnorm
    return x, SolveReport(maxit, rnorm / bnorm, converged, work)


def gmres_solve(A, b, tol=1e-10, restart=30, maxit=500, x0=None, atol=0.0, callback=None):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    Stops when ||b - A x||_2 <= max(tol*||b||_2, atol). The residual history
    holds the absolute 2-norm after every inner iteration.
    """
    A = _as_operator(A)
    b = np.asarray(b, dtype=float)
    shape = b.shape
    bvec = b.ravel()
    n = bvec.size
    bnorm = np.linalg.norm(bvec)
    target = max(tol * bnorm, atol)
    report = SolveReport(0, 0.0, True, 0)
    if bnorm == 0.0 and x0 is None:
        return np.zeros(shape), report

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel()

    def matvec(v):
        report.work_units += 1
        return np.asarray(A(v.reshape(shape)), dtype=float).ravel()

    total_iters = 0
    while True:
        r = bvec - matvec(x) if (x0 is not None or total_iters > 0) else bvec.copy()
        rnorm = np.linalg.norm(r)
        if total_iters == 0:
            report.residual_history.append(rnorm)
        if rnorm <= target or total_iters >= maxit:
            break
        m = min(restart, maxit - total_iters)
        Q = np.empty((n, m + 1))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        Q[:, 0] = r / rnorm
        k_used = 0
        for k in range(m):
            w = matvec(Q[:, k])
            for j in range(k + 1):
                H[j, k] = np.vdot(Q[:, j], w)
                w -= H[j, k] * Q[:, j]
            h_next = np.linalg.norm(w)
            H[k + 1, k] = h_next
            if h_next > 0:
                Q[:, k + 1] = w / h_next
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                k_used = k
                break
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            total_iters += 1
            report.residual_history.append(abs(g[k + 1]))
            if callback is not None:
                callback(abs(g[k + 1]))
            if abs(g[k + 1]) <= target or h_next == 0.0:
                break
        if k_used > 0:
            y = scipy.linalg.solve_triangular(H[:k_used, :k_used], g[:k_used])
            x = x + Q[:, :k_used] @ y
        else:
            break

    report.iterations = total_iters
    report.relative_residual = rnorm / bnorm if bnorm > 0 else rnorm
    report.converged = rnorm <= target
    if not report.converged:
        report.message = f"stagnated after {total_iters} iterations"
    return x.reshape(shape), report


# --- geometric multigrid -----------------------------------------------------


def _shift(sl: slice, d: int) -> slice:
    return slice(sl.start + d, sl.stop + d, sl.step)


class _Level:
    """One grid level of the implicit operator I - (dt^2/2) c^2 Lap_2h."""

    def __init__(self, cells, spacing, coef):
        self.cells = tuple(cells)
        self.spacing = tuple(spacing)
        self.gamma = tuple(coef / dx**2 for dx in spacing)
        self.diag = 1.0 + 2.0 * sum(self.gamma)
        self.shape = tuple(n + 1 for n in cells)
        self.dim = len(cells)

    def apply(self, u):
        out = np.zeros_like(u)
        if self.dim == 1:
            gx = self.gamma[0]
            out[1:-1] = self.diag * u[1:-1] - gx * (u[:-2] + u[2:])
        else:
            gx, gy = self.gamma
            out[1:-1, 1:-1] = (
                self.diag * u[1:-1, 1:-1]
                - gx * (u[:-2, 1:-1] + u[2:, 1:-1])
                - gy * (u[1:-1, :-2] + u[1:-1, 2:])
            )
        return out

    def gs_color(self, u, b, color: int):
        if self.dim == 1:
            n = self.cells[0]
            gx = self.gamma[0]
            si = slice(1 + color, n, 2)
            u[si] = (b[si] + gx * (u[_shift(si, -1)] + u[_shift(si, 1)])) / self.diag
        else:
            nx, ny = self.cells
            gx, gy = self.gamma
            for pi in (0, 1):
                pj = (color + pi) % 2
                si = slice(1 + pi, nx, 2)
                sj = slice(1 + pj, ny, 2)
                u[si, sj] = (
                    b[si, sj]
                    + gx * (u[_shift(si, -1), sj] + u[_shift(si, 1), sj])
                    + gy * (u[si, _shift(sj, -1)] + u[si, _shift(sj, 1)])
                ) / self.diag

    def smooth(self, u, b, sweeps: int, reverse: bool = False):
        order = (1, 0) if reverse else (0, 1)
        for _ in range(sweeps):
            for color in order:
                self.gs_color(u, b, color)

    def restrict(self, r):
        if self.dim == 1:
            m = self.cells[0] // 2
            rc = np.zeros(m + 1)
            rc[1:-1] = 0.5 * r[2:-1:2] + 0.25 * (r[1:-2:2] + r[3::2])
            return rc
        mx, my = self.cells[0] // 2, self.cells[1] // 2
        rc = np.zeros((mx + 1, my + 1))
        rc[1:-1, 1:-1] = (
            4.0 * r[2:-1:2, 2:-1:2]
            + 2.0 * (r[1:-2:2, 2:-1:2] + r[3::2, 2:-1:2] + r[2:-1:2, 1:-2:2] + r[2:-1:2, 3::2])
            + (r[1:-2:2, 1:-2:2] + r[1:-2:2, 3::2] + r[3::2, 1:-2:2] + r[3::2, 3::2])
        ) / 16.0
        return rc

    def prolong(self, ec):
        if self.dim == 1:
            n = self.cells[0]
            e = np.zeros(n + 1)
            e[0::2] = ec
            e[1::2] = 0.5 * (ec[:-1] + ec[1:])
            return e
        nx, ny = self.cells
        e = np.zeros((nx + 1, ny + 1))
        e[0::2, 0::2] = ec
        e[1::2, 0::2] = 0.5 * (ec[:-1, :] + ec[1:, :])
        e[0::2, 1::2] = 0.5 * (ec[:, :-1] + ec[:, 1:])
        e[1::2, 1::2] = 0.25 * (ec[:-1, :-1] + ec[1:, :-1] + ec[:-1, 1:] + ec[1:, 1:])
        return e


class MultigridHierarchy:
    """V-cycle hierarchy for A = I - (dt^2/2) c^2 Lap_2h with Dirichlet walls.

    Cell counts must halve evenly down to at most 8 cells per axis; grids
    that get stuck on an odd count above 8 are rejected. Usable standalone
    (iterate to tolerance) or as a symmetric preconditioner for CG.
    """

    def __init__(self, grid: CartesianGrid, c: float, dt: float, nu1: int = 2, nu2: int = 2):
        if not grid.all_dirichlet:
            raise ValueError("multigrid hierarchy requires all-Dirichlet boundaries")
        coef = 0.5 * dt**2 * c**2
        self.nu1, self.nu2 = nu1, nu2
        self.levels: list[_Level] = []
        cells = list(grid.cells)
        spacing = list(grid.spacing)
        while True:
            self.levels.append(_Level(cells, spacing, coef))
            if any(n <= 8 for n in cells):
                break
            if any(n % 2 for n in cells):
                raise ValueError(
                    f"grid cells {tuple(cells)} cannot be coarsened evenly to <= 8 per axis"
                )
            cells = [n // 2 for n in cells]
            spacing = [2.0 * dx for dx in spacing]
        coarse_grid = CartesianGrid(
            dim=grid.dim,
            bounds=grid.bounds,
            cells=tuple(cells),
            bcs=tuple([BC.DIRICHLET] * grid.dim),
        )
        lap = interior_matrix(DiscreteOperator(coarse_grid, order=2, c=c)).toarray()
        a_coarse = np.eye(lap.shape[0]) - 0.5 * dt**2 * lap
        self._coarse_grid = coarse_grid
        self._coarse_lu = scipy.linalg.lu_factor(a_coarse)

    @property
    def grid_shape(self):
        return self.levels[0].shape

    def apply_fine(self, u):
        return self.levels[0].apply(u)

    def _coarse_solve(self, b):
        flat = interior_values(self._coarse_grid, b)
        sol = scipy.linalg.lu_solve(self._coarse_lu, flat)
        return scatter_interior(self._coarse_grid, sol)

    def _vcycle(self, lvl: int, b, u):
        level = self.levels[lvl]
        if lvl == len(self.levels) - 1:
            return self._coarse_solve(b)
        level.smooth(u, b, self.nu1, reverse=False)
        r = b - level.apply(u)
        ec = self._vcycle(lvl + 1, level.restrict(r), np.zeros(self.levels[lvl + 1].shape))
        u += level.prolong(ec)
        level.smooth(u, b, self.nu2, reverse=True)
        return u

    def vcycle(self, b, x0=None):
        u = np.zeros(self.levels[0].shape) if x0 is None else np.array(x0, dtype=float)
        return self._vcycle(0, np.asarray(b, dtype=float), u)

    def solve(self, b, tol=1e-12, maxit=100, x0=None):
        b = np.asarray(b, dtype=float)
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0 and x0 is None:
            return np.zeros_like(b), SolveReport(0, 0.0, True, 0)
        u = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        history = []
        for k in range(maxit):
            r = b - self.apply_fine(u)
            rnorm = np.linalg.norm(r)
            history.append(rnorm)
            if rnorm <= tol * bnorm:
                return u, SolveReport(k, rnorm / bnorm, True, k, residual_history=history)
            u = self._vcycle(0, b, u)
        r = b - self.apply_fine(u)
        rnorm = np.linalg.norm(r)
        history.append(rnorm)
        return u, SolveReport(
            maxit, rnorm / bnorm, rnorm <= tol * bnorm, maxit, residual_history=history
        )

    def preconditioner(self):
        """One V-cycle from a zero initial guess, as a callable for PCG."""
        return lambda r: self.vcycle(r)


def mg_vcycle(hierarchy: MultigridHierarchy, b, x0=None, nu1=None, nu2=None):
    """One V-cycle of the hierarchy (spec surface; sweep counts optional)."""
    if nu1 is not None:
        hierarchy.nu1 = nu1
    if nu2 is not None:
        hierarchy.nu2 = nu2
    return hierarchy.vcycle(b, x0=x0)


# --- dense eigensolver oracle and tridiagonal solves -------------------------


def dense_symmetric_eig(matrix, cap: int = 4096):
    """Eigendecomposition of a symmetric matrix (ascending eigenvalues).

    Oracle-scale only: dimension capped, symmetry required.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if a.shape[0] > cap:
        raise ValueError(f"dimension {a.shape[0]} exceeds the oracle cap {cap}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("matrix is not symmetric")
    w, q = np.linalg.eigh(a)
    return w, q


class TridiagFactorization:
    """Prefactored Thomas elimination for repeated solves with one matrix."""

    def __init__(self, sub, diag, sup):
        sub = np.asarray(sub, dtype=float)
        diag = np.asarray(diag, dtype=float)
        sup = np.asarray(sup, dtype=float)
        n = diag.size
        if sub.size != n - 1 or sup.size != n - 1:
            raise ValueError("off-diagonals must have length n-1")
        self.n = n
        self.sub = sub
        self.cp = np.empty(n - 1)
        self.dp = np.empty(n)
        dp = diag[0]
        if dp == 0.0:
            raise ZeroDivisionError("zero pivot in tridiagonal factorization")
        self.dp[0] = dp
        for i in range(1, n):
            self.cp[i - 1] = sup[i - 1] / self.dp[i - 1]
            piv = diag[i] - sub[i - 1] * self.cp[i - 1]
            if piv == 0.0:
                raise ZeroDivisionError(f"zero pivot at row {i}")
            self.dp[i] = piv

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        n = self.n
        y = np.empty(n)
        y[0] = b[0]
        for i in range(1, n):
            y[i] = b[i] - self.sub[i - 1] / self.dp[i - 1] * y[i - 1]
        x = np.empty(n)
        x[-1] = y[-1] / self.dp[-1]
        for i in range(n - 2, -1, -1):
            x[i] = y[i] / self.dp[i] - self.cp[i] * x[i + 1]
        return x


def thomas_solve(tridiagonal, b):
    """Direct solve of a tridiagonal system given as (sub, diag, sup) arrays."""
    sub, diag, sup = tridiagonal
    return TridiagFactorization(sub, diag, sup).solve(b)
