import math

import numpy as np
import pytest

from waveholtz.filters import FilterConfig, lambda_tilde_explicit, lambda_tilde_implicit, predict_rate
from waveholtz.grid import DiscreteOperator, GridField, build_grid, eigen_modes, interior_matrix, mode_field
from waveholtz.timestep import (
    TimeMode,
    WaveState,
    cfl_constant,
    correct_explicit,
    correct_implicit,
    make_implicit_solver,
    step_explicit,
    step_implicit,
    wave_solve_filtered,
)

RNG = np.random.default_rng(99)
GRID16 = build_grid(1, (0, 1), 16, "dirichlet")


# --- corrections ---------------------------------------------------------------


def test_explicit_correction_on_coarse_grid():
    # dx = 0.8 admits dt up to 0.8; the period of omega=1 then needs 8 steps
    g = build_grid(1, (0.0, 8.0), 10, "dirichlet")
    corr = correct_explicit(1.0, g, 2, 1.0)
    assert corr.steps_per_period == 8
    assert corr.dt == pytest.approx(2.0 * math.sin(math.pi / 8), rel=1e-15)
    assert corr.omega_tilde > 1.0


def test_explicit_correction_identity():
    for p in (2, 4):
        corr = correct_explicit(5.5, GRID16, p, 1.0)
        lhs = math.sin(corr.omega_tilde * corr.dt / 2) / (corr.dt / 2)
        assert abs(lhs - 5.5) <= 1e-13 * 5.5
        inv_sq = sum(1.0 / dx**2 for dx in GRID16.spacing)
        assert corr.dt**2 * inv_sq < cfl_constant(p) ** 2


def test_explicit_correction_approaches_omega_on_fine_grids():
    gaps = []
    for n in (64, 256):
        g = build_grid(1, (0, 1), n, "dirichlet")
        corr = correct_explicit(5.5, g, 2, 1.0)
        gaps.append(corr.omega_tilde - 5.5)
    assert gaps[0] > gaps[1] > 0


def test_cfl_constant_order_four():
    assert cfl_constant(4) == pytest.approx(math.sqrt(3) / 2, rel=1e-15)


def test_implicit_correction_rejects_four_steps():
    with pytest.raises(ValueError, match="at least 5 time-steps"):
        correct_implicit(1.0, 4)


def test_implicit_correction_five_steps():
    corr = correct_implicit(1.0, 5)
    assert corr.dt**2 == pytest.approx(2.0 / math.cos(2 * math.pi / 5) - 2.0, rel=1e-14)
    assert math.cos(corr.omega_tilde * corr.dt) * (1 + (corr.omega * corr.dt) ** 2 / 2) == pytest.approx(1.0, abs=1e-13)


def test_implicit_correction_large_step_count_limit():
    corr = correct_implicit(3.0, 4000)
    t = 2 * math.pi / 3.0
    assert corr.omega_tilde == pytest.approx(3.0, rel=1e-6)
    assert corr.dt == pytest.approx(t / 4000, rel=1e-6)


# --- steppers -------------------------------------------------------------------


def test_explicit_zero_data_stays_zero():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_explicit(5.5, GRID16, 2, 1.0)
    st = WaveState.start(np.zeros(GRID16.shape))
    f = np.zeros(GRID16.shape)
    for _ in range(corr.steps_per_period):
        step_explicit(st, op, f, corr)
    assert np.all(st.w == 0.0)


@pytest.mark.parametrize("p", [2, 4])
def test_explicit_eigenmode_propagation(p):
    op = DiscreteOperator(GRID16, p)
    corr = correct_explicit(5.5, GRID16, p, 1.0)
    mode, lam = eigen_modes(GRID16, p)[2]
    phi = mode_field(GRID16, mode).values
    lam_e = lambda_tilde_explicit(lam, corr.dt)
    st = WaveState.start(phi)
    f = np.zeros(GRID16.shape)
    for _ in range(corr.steps_per_period):
        step_explicit(st, op, f, corr)
        assert np.max(np.abs(st.w - math.cos(lam_e * st.t) * phi)) < 1e-10


def test_explicit_energy_bounded_over_fifty_periods():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_explicit(5.5, GRID16, 2, 1.0)
    vals = np.zeros(GRID16.shape)
    vals[1:-1] = RNG.standard_normal(15)
    st = WaveState.start(vals)
    f = np.zeros(GRID16.shape)
    n0 = np.linalg.norm(vals)
    for _ in range(50 * corr.steps_per_period):
        step_explicit(st, op, f, corr)
    assert np.linalg.norm(st.w) <= n0 * (1.0 + 1e-8)


def test_implicit_zero_data_stays_zero():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_implicit(5.5, 7)
    solver = make_implicit_solver(op, corr.dt)
    st = WaveState.start(np.zeros(GRID16.shape))
    f = np.zeros(GRID16.shape)
    for _ in range(7):
        step_implicit(st, op, f, corr, solver)
    assert np.all(st.w == 0.0)


def test_implicit_eigenmode_propagation():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_implicit(5.5, 5)
    solver = make_implicit_solver(op, corr.dt)
    mode, lam = eigen_modes(GRID16, 2)[3]
    phi = mode_field(GRID16, mode).values
    lam_i = lambda_tilde_implicit(lam, corr.dt)
    st = WaveState.start(phi)
    f = np.zeros(GRID16.shape)
    for _ in range(20):
        step_implicit(st, op, f, corr, solver)
        assert np.max(np.abs(st.w - math.cos(lam_i * st.t) * phi)) < 1e-10


def test_implicit_unconditionally_stable_at_large_cfl():
    g = build_grid(1, (0, 1), 512, "dirichlet")
    op = DiscreteOperator(g, 2)
    corr = correct_implicit(6.0, 5)
    assert corr.dt / g.spacing[0] > 100  # far beyond the explicit limit
    solver = make_implicit_solver(op, corr.dt)
    vals = np.zeros(g.shape)
    vals[1:-1] = RNG.standard_normal(511)
    st = WaveState.start(vals)
    f = np.zeros(g.shape)
    n0 = np.linalg.norm(vals)
    for _ in range(20 * 5):
        step_implicit(st, op, f, corr, solver)
    assert np.linalg.norm(st.w) <= 2.0 * n0


# --- first time-step pinned against the coupled start equations -------------------


def _dense_first_step(op, f_vals, corr, implicit):
    """Solve the n=0 equations {update, D0 W^0 = 0} for (W^1, W^-1) densely."""
    from waveholtz.grid import interior_values, scatter_interior

    g = op.grid
    a = interior_matrix(op).toarray()
    n = a.shape[0]
    w0 = interior_values(g, np.zeros(g.shape))
    f = interior_values(g, f_vals)
    dt = corr.dt
    eye = np.eye(n)
    big = np.zeros((2 * n, 2 * n))
    rhs = np.zeros(2 * n)
    if implicit:
        # (W1 - 2 W0 + Wm1)/dt^2 = (A/2)(W1 + Wm1) - f cos(0) cos(wt dt)
        big[:n, :n] = eye / dt**2 - a / 2
        big[:n, n:] = eye / dt**2 - a / 2
        rhs[:n] = 2 * w0 / dt**2 - f * math.cos(corr.omega_tilde * dt)
    else:
        big[:n, :n] = eye / dt**2
        big[:n, n:] = eye / dt**2
        rhs[:n] = 2 * w0 / dt**2 + a @ w0 - f
    big[n:, :n] = eye
    big[n:, n:] = -eye
    sol = np.linalg.solve(big, rhs)
    return scatter_interior(g, sol[:n])


def test_first_steps_match_dense_coupled_system():
    g = build_grid(1, (0, 1), 4, "dirichlet")
    x = g.axis_coords(0)
    f_vals = np.zeros(g.shape)
    f_vals[1:-1] = np.sin(np.pi * x[1:-1]) + 0.3

    op = DiscreteOperator(g, 2)
    corr_i = correct_implicit(2.0, 5)
    solver = make_implicit_solver(op, corr_i.dt)
    st = WaveState.start(np.zeros(g.shape))
    step_implicit(st, op, f_vals, corr_i, solver)
    expected = _dense_first_step(op, f_vals, corr_i, implicit=True)
    assert np.max(np.abs(st.w - expected)) < 1e-12

    corr_e = correct_explicit(2.0, g, 2, 1.0)
    st = WaveState.start(np.zeros(g.shape))
    step_explicit(st, op, f_vals, corr_e)
    expected = _dense_first_step(op, f_vals, corr_e, implicit=False)
    assert np.max(np.abs(st.w - expected)) < 1e-14


# --- filtered wave solve -----------------------------------------------------------


def test_filtered_solve_zero_inputs():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_implicit(5.5, 10)
    cfg = FilterConfig(omega=5.5, periods=1, steps_per_period=10, mode="implicit")
    out = wave_solve_filtered(GridField.zeros(GRID16), GridField.zeros(GRID16), cfg, corr, op)
    assert np.all(out.values == 0.0)


@pytest.mark.parametrize("mode,n_t", [("explicit", None), ("implicit", 10)])
def test_filtered_solve_eigen_action(mode, n_t):
    p = 2
    op = DiscreteOperator(GRID16, p)
    if mode == "explicit":
        corr = correct_explicit(5.5, GRID16, p, 1.0)
        n_t = corr.steps_per_period
    else:
        corr = correct_implicit(5.5, n_t)
    cfg = FilterConfig(omega=5.5, periods=2, steps_per_period=n_t, mode=mode)
    modes = eigen_modes(GRID16, p)
    pred = predict_rate([lam for _, lam in modes], cfg, omega_tilde=corr.omega_tilde)
    f0 = GridField.zeros(GRID16)
    for i in (0, 2, 5):
        phi = mode_field(GRID16, modes[i][0])
        out = wave_solve_filtered(phi, f0, cfg, corr, op)
        assert np.max(np.abs(out.values - pred.betas[i] * phi.values)) < 1e-9


def test_filtered_solve_is_affine():
    op = DiscreteOperator(GRID16, 4)
    corr = correct_implicit(5.5, 7)
    cfg = FilterConfig(omega=5.5, periods=1, steps_per_period=7, mode="implicit")
    v = GridField.from_values(GRID16, RNG.standard_normal(GRID16.shape))
    f = GridField.from_values(GRID16, RNG.standard_normal(GRID16.shape))
    w_vf = wave_solve_filtered(v, f, cfg, corr, op)
    w_0f = wave_solve_filtered(GridField.zeros(GRID16), f, cfg, corr, op)
    w_v0 = wave_solve_filtered(v, GridField.zeros(GRID16), cfg, corr, op)
    gap = np.max(np.abs(w_vf.values - w_0f.values - w_v0.values))
    assert gap < 1e-11 * max(1.0, np.max(np.abs(w_vf.values)))


def test_accumulator_matches_stored_history_recomputation():
    # stream the filter on a tiny grid and recompute it from saved snapshots
    g = build_grid(1, (0, 1), 8, "dirichlet")
    op = DiscreteOperator(g, 2)
    corr = correct_implicit(4.0, 6)
    cfg = FilterConfig(omega=4.0, periods=2, steps_per_period=6, mode="implicit")
    vals = np.zeros(g.shape)
    vals[1:-1] = RNG.standard_normal(7)
    v = GridField.from_values(g, vals)
    f = GridField.from_values(g, np.where(np.arange(9) % 2, 0.5, -0.25))

    streamed = wave_solve_filtered(v, f, cfg, corr, op)

    solver = make_implicit_solver(op, corr.dt)
    st = WaveState.start(v.values)
    history = [st.w.copy()]
    for _ in range(cfg.total_steps):
        step_implicit(st, op, f.values, corr, solver)
        history.append(st.w.copy())
    n_total = cfg.total_steps
    t_bar = n_total * corr.dt
    acc = np.zeros(g.shape)
    for n, w in enumerate(history):
        sigma = 0.5 if n in (0, n_total) else 1.0
        acc += (math.cos(corr.omega_tilde * n * corr.dt) - 0.5 * corr.alpha) * sigma * w
    expected = (2.0 / t_bar) * corr.dt * acc
    assert np.max(np.abs(streamed.values - expected)) < 1e-13


def test_explicit_first_step_breaks_implicit_filter_at_large_dt():
    # regression guard: the large-dt implicit scheme needs an implicit start
    op = DiscreteOperator(GRID16, 2)
    corr = correct_implicit(5.5, 5)
    cfg = FilterConfig(omega=5.5, periods=1, steps_per_period=5, mode="implicit")
    modes = eigen_modes(GRID16, 2)
    pred = predict_rate([lam for _, lam in modes], cfg, omega_tilde=corr.omega_tilde)
    phi = mode_field(GRID16, modes[3][0])
    f0 = GridField.zeros(GRID16)
    good = wave_solve_filtered(phi, f0, cfg, corr, op)
    bad = wave_solve_filtered(phi, f0, cfg, corr, op, implicit_first_step=False)
    err_good = np.max(np.abs(good.values - pred.betas[3] * phi.values))
    err_bad = np.max(np.abs(bad.values - pred.betas[3] * phi.values))
    assert err_good < 1e-10
    assert err_bad > 100 * max(err_good, 1e-14)


def test_filtered_solve_rejects_mode_mismatch():
    op = DiscreteOperator(GRID16, 2)
    corr = correct_implicit(5.5, 10)
    cfg = FilterConfig(omega=5.5, periods=1, steps_per_period=10, mode="explicit")
    with pytest.raises(ValueError, match="mode"):
        wave_solve_filtered(GridField.zeros(GRID16), GridField.zeros(GRID16), cfg, corr, op)


def test_correction_mode_enum_roundtrip():
    corr = correct_implicit(2.0, 6)
    assert corr.mode is TimeMode.IMPLICIT
    assert corr.steps_per_period * corr.dt == pytest.approx(corr.period_tilde, rel=1e-14)
