"""Fixed-point, deflated, and Krylov-accelerated Helmholtz drivers.

The basic iteration is v <- W(v, f), one filtered wave solve per pass; the
iterate converges to the solution of the discrete Helmholtz system
L_ph u + omega^2 u = f at the original omega thanks to the time-frequency
corrections. W is affine, W(v, f) = S v + b with b = W(0, f), so the fixed
point also solves (I - S) v = b; the Krylov driver feeds the matrix-free
operator A v = v - W(v, 0) to GMRES. Deflation projects a set of precomputed
eigenmodes out of the iterate after every pass and reinstates their
contribution (f, phi)/(omega^2 - lambda^2) once converged.

Residuals are reported in the scaled norm ||r||_2 / sqrt(N) with N the total
number of grid points; for the fixed point the residual is the successive
difference v^(k) - v^(k-1).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .filters import FilterConfig, ResonanceError, TimeMode
from .grid import (
    CartesianGrid,
    DiscreteOperator,
    GridField,
    discrete_eigenvalues_symbolic,
    interior_matrix,
    interior_values,
    scatter_interior,
)
from .linalg import dense_symmetric_eig, gmres_solve
from .timestep import correct_explicit, correct_implicit, make_implicit_solver, wave_solve_filtered

__all__ = [
    "HelmholtzProblem",
    "DeflationSet",
    "WaveHoltzRun",
    "NearSingularError",
    "gaussian_source",
    "fpi_solve",
    "deflated_solve",
    "apply_A",
    "waveholtz_operator",
    "krylov_solve",
    "direct_solve",
    "measure_rate",
    "compute_deflation_set",
    "resolve_time_discretization",
]


class NearSingularError(ValueError):
    """The discrete Helmholtz system is singular or nearly so."""


@dataclass(frozen=True)
class HelmholtzProblem:
    """L u + omega^2 u = f with homogeneous boundary data."""

    grid: CartesianGrid
    order: int
    c: float
    omega: float
    forcing: GridField

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.grid.all_dirichlet or self.grid.all_periodic:
            lam = discrete_eigenvalues_symbolic(self.grid, self.order, self.c)
            gap = np.min(np.abs(self.omega - lam)) / self.omega
            if gap < 1e-10:
                raise ResonanceError(
                    f"omega = {self.omega:.12g} is within {gap:.1e} of a discrete eigenvalue"
                )

    @property
    def operator(self) -> DiscreteOperator:
        return DiscreteOperator(self.grid, self.order, self.c)


class DeflationSet:
    """Discrete eigenpairs, orthonormal in the volume-weighted inner product."""

    def __init__(self, grid: CartesianGrid, lambdas, modes):
        self.grid = grid
        self.lambdas = np.asarray(lambdas, dtype=float)
        self._basis = np.stack([np.asarray(m.values if isinstance(m, GridField) else m) for m in modes]) \
            if len(lambdas) else np.zeros((0,) + grid.shape)
        self.vol = grid.cell_volume

    def __len__(self) -> int:
        return self.lambdas.size

    def gram(self) -> np.ndarray:
        flat = self._basis.reshape(len(self), -1)
        return self.vol * flat @ flat.T

    def project_out(self, values: np.ndarray) -> np.ndarray:
        if len(self) == 0:
            return values
        flat = self._basis.reshape(len(self), -1)
        coeffs = self.vol * flat @ values.ravel()
        return values - (coeffs @ flat).reshape(values.shape)

    def helmholtz_correction(self, forcing: np.ndarray, omega: float) -> np.ndarray:
        """sum (f, phi_m)/(omega^2 - lambda_m^2) phi_m over the deflated modes."""
        out = np.zeros_like(forcing)
        if len(self) == 0:
            return out
        flat = self._basis.reshape(len(self), -1)
        coeffs = self.vol * flat @ forcing.ravel()
        denom = omega**2 - self.lambdas**2
        bad = np.abs(denom) < 1e-14 * omega**2
        if np.any(bad):
            idx = int(np.nonzero(bad)[0][0])
            raise ZeroDivisionError(
                f"deflated mode {idx} has lambda = {self.lambdas[idx]:.12g} resonant with omega"
            )
        return (coeffs / denom @ flat).reshape(forcing.shape)


@dataclass
class WaveHoltzRun:
    """Iteration diagnostics: residual history in the scaled 2h norm."""

    method: str
    periods: int
    residuals: list
    iterations: int
    converged: bool
    wall_time: float = 0.0
    inner_iterations: int = 0

    @property
    def wall_time_per_iteration(self) -> float:
        return self.wall_time / max(1, self.iterations)

    @property
    def cr(self) -> float:
        return measure_rate(self)[0]

    @property
    def ecr(self) -> float:
        return measure_rate(self)[1]


def measure_rate(run: WaveHoltzRun) -> tuple[float, float]:
    """(CR, ECR): geometric mean of the last five residual ratios, and CR^(1/N_p)."""
    r = [x for x in run.residuals if x > 0]
    if len(r) < 6:
        raise ValueError(f"need at least 6 positive residuals, have {len(r)}")
    cr = (r[-1] / r[-6]) ** 0.2
    return cr, cr ** (1.0 / run.periods)


def gaussian_source(grid: CartesianGrid, omega: float, a_g: float, b_g: float, x0) -> GridField:
    """Spatial Gaussian a_g exp(-b_g |x - x0|^2) sampled at grid points.

    The cos(omega t) factor lives in the steppers; omega is accepted here so
    experiment configs stay self-describing.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != grid.dim:
        raise ValueError(f"source center has {x0.size} coordinates for a {grid.dim}D grid")
    for (lo, hi), xc in zip(grid.bounds, x0):
        if not lo <= xc <= hi:
            raise ValueError(f"source center {xc} outside [{lo}, {hi}]")
    coords = grid.coords()
    r2 = np.zeros(grid.shape)
    for ax in range(grid.dim):
        r2 = r2 + (coords[ax] - x0[ax]) ** 2
    return GridField.from_values(grid, a_g * np.exp(-b_g * r2))


def resolve_time_discretization(problem: HelmholtzProblem, config: FilterConfig):
    """Correction + effective config (explicit mode derives N_t from stability)."""
    if config.mode is TimeMode.EXPLICIT:
        corr = correct_explicit(problem.omega, problem.grid, problem.order, problem.c)
        cfg = config
        if corr.steps_per_period != config.steps_per_period:
            cfg = replace(config, steps_per_period=corr.steps_per_period)
        return corr, cfg
    if config.mode is TimeMode.IMPLICIT:
        return correct_implicit(problem.omega, config.steps_per_period), config
    raise ValueError("the continuous filter cannot be time-stepped; pick explicit or implicit")


def _solver_for(problem: HelmholtzProblem, config: FilterConfig, corr, inner_tol: float):
    if config.mode is TimeMode.IMPLICIT:
        return make_implicit_solver(problem.operator, corr.dt, tol=inner_tol)
    return None


def fpi_solve(problem, config, tol=1e-10, maxit=500, inner_tol=1e-12):
    """Basic fixed-point iteration from v = 0; stops on the successive difference."""
    return _iterate(problem, config, None, tol, maxit, inner_tol)


def deflated_solve(problem, config, deflation: DeflationSet, tol=1e-10, maxit=500, inner_tol=1e-12):
    """Fixed-point iteration with per-pass eigenmode removal and final correction."""
    return _iterate(problem, config, deflation, tol, maxit, inner_tol)


def _iterate(problem, config, deflation, tol, maxit, inner_tol):
    corr, cfg = resolve_time_discretization(problem, config)
    op = problem.operator
    solver = _solver_for(problem, cfg, corr, inner_tol)
    v = GridField.zeros(problem.grid, ghost=max(2, op.ghost_width))
    residuals = []
    converged = False
    t0 = time.perf_counter()
    k = 0
    deflate = deflation is not None and len(deflation) > 0
    for k in range(1, maxit + 1):
        v_new = wave_solve_filtered(v, problem.forcing, cfg, corr, op, linear_solver=solver)
        if deflate:
            v_new.set_values(deflation.project_out(np.array(v_new.values)))
        diff = np.linalg.norm(v_new.values - v.values) / math.sqrt(problem.grid.size)
        residuals.append(diff)
        v = v_new
        if diff <= tol:
            converged = True
            break
    wall = time.perf_counter() - t0
    if deflate:
        corrected = v.values + deflation.helmholtz_correction(problem.forcing.values, problem.omega)
        v = GridField.from_values(problem.grid, corrected, ghost=v.ghost)
    run = WaveHoltzRun(
        method="deflated-fpi" if deflate else "fpi",
        periods=cfg.periods,
        residuals=residuals,
        iterations=k,
        converged=converged,
        wall_time=wall,
        inner_iterations=getattr(solver, "inner", 0),
    )
    return v, run


def waveholtz_operator(problem, config, corr=None, linear_solver=None, deflation=None):
    """Matrix-free A v = v - W(v, 0) on stored-point arrays (optionally deflated)."""
    if corr is None:
        corr, config = resolve_time_discretization(problem, config)
    op = problem.operator
    if linear_solver is None:
        linear_solver = _solver_for(problem, config, corr, 1e-12)
    zero_f = GridField.zeros(problem.grid)

    def matvec(values: np.ndarray) -> np.ndarray:
        v = GridField.from_values(problem.grid, values, ghost=max(2, op.ghost_width))
        w = wave_solve_filtered(v, zero_f, config, corr, op, linear_solver=linear_solver)
        av = values - w.values
        if deflation is not None and len(deflation) > 0:
            av = deflation.project_out(av)
        return av

    return matvec


def apply_A(v: GridField, problem, config, corr=None, linear_solver=None) -> GridField:
    """One zero-forcing filtered solve: A v = v - W(v, 0)."""
    matvec = waveholtz_operator(problem, config, corr=corr, linear_solver=linear_solver)
    return GridField.from_values(problem.grid, matvec(np.array(v.values)))


def krylov_solve(problem, config, tol=1e-10, restart=50, maxit=500, deflation=None, inner_tol=1e-12):
    """GMRES on (I - S) v = b with b = W(0, f); residuals in the scaled norm."""
    corr, cfg = resolve_time_discretization(problem, config)
    op = problem.operator
    solver = _solver_for(problem, cfg, corr, inner_tol)
    t0 = time.perf_counter()
    zero = GridField.zeros(problem.grid, ghost=max(2, op.ghost_width))
    b_field = wave_solve_filtered(zero, problem.forcing, cfg, corr, op, linear_solver=solver)
    b = np.array(b_field.values)
    deflate = deflation is not None and len(deflation) > 0
    if deflate:
        b = deflation.project_out(b)
    scale = math.sqrt(problem.grid.size)
    matvec = waveholtz_operator(problem, cfg, corr=corr, linear_solver=solver, deflation=deflation)
    x, rep = gmres_solve(matvec, b, tol=0.0, atol=tol * scale, restart=restart, maxit=maxit)
    if deflate:
        x = x + deflation.helmholtz_correction(problem.forcing.values, problem.omega)
    wall = time.perf_counter() - t0
    run = WaveHoltzRun(
        method="gmres",
        periods=cfg.periods,
        residuals=[r / scale for r in rep.residual_history],
        iterations=rep.iterations,
        converged=rep.converged,
        wall_time=wall,
        inner_iterations=getattr(solver, "inner", 0),
    )
    return GridField.from_values(problem.grid, x), run


def helmholtz_matrix(problem: HelmholtzProblem) -> sp.csr_matrix:
    """L_ph + omega^2 I over the non-boundary points."""
    a = interior_matrix(problem.operator)
    return (a + problem.omega**2 * sp.identity(a.shape[0], format="csr")).tocsr()


def direct_solve(problem: HelmholtzProblem) -> GridField:
    """Sparse-LU reference solve of the discrete Helmholtz system."""
    h = helmholtz_matrix(problem)
    rhs = interior_values(problem.grid, problem.forcing.values)
    if not np.any(rhs):
        return GridField.zeros(problem.grid)
    lu = spla.splu(h.tocsc())
    u = lu.solve(rhs)
    hnorm = spla.norm(h, np.inf)
    backward = np.linalg.norm(h @ u - rhs, np.inf) / (
        hnorm * np.linalg.norm(u, np.inf) + np.linalg.norm(rhs, np.inf)
    )
    cond_est = float(hnorm * np.linalg.norm(u, np.inf) / np.linalg.norm(rhs, np.inf))
    if not np.isfinite(backward) or backward > 1e-12 or cond_est > 1e13:
        raise NearSingularError(
            f"discrete Helmholtz solve backward error {backward:.3e}; condition estimate {cond_est:.3e}"
        )
    return GridField.from_values(problem.grid, scatter_interior(problem.grid, u))


def compute_deflation_set(problem: HelmholtzProblem, count: int) -> DeflationSet:
    """Eigenpairs closest to omega, from the dense symmetric oracle.

    Modes are normalized in the volume inner product; desk scale only (the
    oracle caps the interior dimension at 4096).
    """
    if count <= 0:
        return DeflationSet(problem.grid, [], [])
    a = interior_matrix(problem.operator).toarray()
    w, q = dense_symmetric_eig(a)
    lam = np.sqrt(np.maximum(0.0, -w))
    order = np.argsort(np.abs(lam - problem.omega))[:count]
    vol = problem.grid.cell_volume
    modes = [scatter_interior(problem.grid, q[:, j]) / math.sqrt(vol) for j in order]
    return DeflationSet(problem.grid, lam[order], modes)
