"""Helmholtz solutions from time-filtered wave-equation iterations.

The package solves  c^2 Lap u + omega^2 u = f  on 1D/2D Cartesian grids by
repeatedly integrating the forced wave equation and applying a time filter
that preserves the omega-frequency component (the WaveHoltz iteration),
with frequency corrections that make the discrete fixed point match the
direct discrete Helmholtz solution, eigenmode deflation, matrix-free GMRES
acceleration, multigrid-backed implicit stepping, and dispersion
(pollution) analysis utilities.
"""

from .driver import (
    DeflationSet,
    HelmholtzProblem,
    NearSingularError,
    WaveHoltzRun,
    apply_A,
    compute_deflation_set,
    deflated_solve,
    direct_solve,
    fpi_solve,
    gaussian_source,
    krylov_solve,
    measure_rate,
    resolve_time_discretization,
)
from .filters import (
    ExplicitStabilityError,
    FilterConfig,
    RatePrediction,
    ResonanceError,
    TimeMode,
    alpha_d,
    beta,
    beta_d,
    beta_d_quadrature,
    lambda_tilde_explicit,
    lambda_tilde_implicit,
    predict_rate,
    sinc_d,
)
from .grid import (
    BC,
    CartesianGrid,
    DiscreteOperator,
    GridField,
    apply_operator,
    build_grid,
    discrete_eigenvalues_symbolic,
    stencil_coefficients,
)
from .linalg import (
    LinearOperator,
    MultigridHierarchy,
    SolveReport,
    cg_solve,
    dense_symmetric_eig,
    gmres_solve,
    mg_vcycle,
    thomas_solve,
)
from .pollution import (
    ModelProblemSpec,
    b_coeff,
    continuous_solution,
    discrete_solution_closed_form,
    k_tilde,
    pollution_error,
    ppw_estimate,
)
from .timestep import (
    TimeCorrection,
    WaveState,
    correct_explicit,
    correct_implicit,
    step_explicit,
    step_implicit,
    wave_solve_filtered,
)

__version__ = "0.1.0"
