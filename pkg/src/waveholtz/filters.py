"""Time-filter transfer functions and convergence-rate prediction.

The iteration damps an eigenmode with eigenvalue lambda by the filter value
beta(lambda); beta equals 1 exactly at the target frequency omega, so that
mode survives while the rest contract. Continuous filtering gives the
three-sinc form

    beta(lambda) = sinc((omega-lambda)*Tbar) + sinc((omega+lambda)*Tbar)
                   - alpha*sinc(lambda*Tbar),

and trapezoidal quadrature over the same interval replaces each sinc with the
discrete sinc_d(z, T) = sin(z*T) / (T*tan(z*dt/2)/(dt/2)), obtained by
summing the geometric series of the quadrature. With finite dt the filter
constant must be corrected to alpha_d = tan(omega*dt/2)/tan(omega*dt) for the
discrete filter to peak exactly at lambda = omega.

Time discretization shifts each eigenvalue before it meets the filter:
second-order explicit stepping maps lambda to (2/dt)*asin(lambda*dt/2) and
trapezoidal implicit stepping to (1/dt)*acos(1/(1+(lambda*dt)^2/2)). The
asymptotic rate of the fixed-point iteration is the largest |beta| over the
mapped spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "TimeMode",
    "FilterConfig",
    "RatePrediction",
    "ResonanceError",
    "ExplicitStabilityError",
    "beta",
    "sinc_d",
    "alpha_d",
    "beta_d",
    "beta_d_quadrature",
    "lambda_tilde_explicit",
    "lambda_tilde_implicit",
    "predict_rate",
]


class TimeMode(Enum):
    CONTINUOUS = "continuous"
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class ResonanceError(ValueError):
    """An eigenvalue coincides with the target frequency."""


class ExplicitStabilityError(ValueError):
    """lambda*dt exceeds the explicit stability limit for some mode."""


def _as_mode(mode) -> TimeMode:
    return mode if isinstance(mode, TimeMode) else TimeMode(str(mode).lower())


@dataclass(frozen=True)
class FilterConfig:
    """Filter interval and quadrature parameters.

    omega is the target frequency, ``periods`` (N_p) the number of periods
    per filter interval, ``steps_per_period`` (N_t) the quadrature steps per
    period. ``alpha`` defaults to 1/2 for the continuous filter and to the
    corrected alpha_d for discrete modes.
    """

    omega: float
    periods: int = 1
    steps_per_period: int = 10
    mode: TimeMode = TimeMode.IMPLICIT
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", _as_mode(self.mode))
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.periods < 1 or self.steps_per_period < 1:
            raise ValueError("periods and steps_per_period must be positive")
        if self.mode is TimeMode.IMPLICIT and self.steps_per_period < 5:
            raise ValueError("implicit filtering needs at least 5 time-steps per period")
        assert abs(self.dt * self.steps_per_period * self.periods - self.total_time) <= 1e-14 * self.total_time

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def total_time(self) -> float:
        return self.periods * self.period

    @property
    def dt(self) -> float:
        return self.period / self.steps_per_period

    @property
    def total_steps(self) -> int:
        return self.periods * self.steps_per_period

    @property
    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        if self.mode is TimeMode.CONTINUOUS:
            return 0.5
        # omega*dt = 2*pi/N_t for any config pairing dt = T/N_t
        return alpha_d(2.0 * math.pi / self.steps_per_period)


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def beta(lam, omega: float, t_bar: float, alpha: float = 0.5):
    """Continuous filter value at eigenvalue lam; beta(omega) = 1 on whole periods."""
    lam = np.asarray(lam, dtype=float)
    val = (
        _sinc((omega - lam) * t_bar)
        + _sinc((omega + lam) * t_bar)
        - alpha * _sinc(lam * t_bar)
    )
    return float(val) if val.ndim == 0 else val


def sinc_d(z, T: float, dt: float):
    """Discrete sinc: sin(z*T)*(dt/2)*cos(z*dt/2) / (T*sin(z*dt/2)).

    Requires T = N*dt for integer N. Removable singularities (z*dt/2 at a
    multiple of pi) are evaluated by the limit of the full quotient via the
    exact reduction sin(2*N*d)*cos(d)/(2*N*sin(d)) with d the distance of
    z*dt/2 from the nearest multiple of pi; the tan poles land on the zero of
    the cos factor.
    """
    n_ratio = T / dt
    n = round(n_ratio)
    if n < 1 or abs(n_ratio - n) > 1e-9 * max(1.0, n):
        raise ValueError("sinc_d requires T to be an integer number of steps dt")
    phi = np.asarray(z, dtype=float) * dt / 2.0
    m = np.round(phi / np.pi)
    d = phi - m * np.pi
    tiny = np.abs(d) < 1e-300
    safe_d = np.where(tiny, 1.0, d)
    val = np.where(
        tiny,
        1.0,
        np.sin(2.0 * n * safe_d) * np.cos(safe_d) / (2.0 * n * np.sin(safe_d)),
    )
    return float(val) if val.ndim == 0 else val


def alpha_d(omega_dt: float) -> float:
    """Corrected filter constant tan(x/2)/tan(x) at x = omega*dt; -> 1/2 as dt -> 0."""
    if not 0.0 < omega_dt < math.pi / 2.0:
        raise ValueError(
            f"omega*dt = {omega_dt:.6g} outside (0, pi/2); need at least 5 steps per period"
        )
    return math.tan(omega_dt / 2.0) / math.tan(omega_dt)


def beta_d(lam, omega: float, T: float, n_t: int, alpha: float):
    """Discrete filter value via the three-sinc closed form.

    T is the full filter interval and n_t the total number of steps, so
    dt = T/n_t. On a whole number of periods beta_d(omega) = 1 for any n_t.
    """
    dt = T / n_t
    lam = np.asarray(lam, dtype=float)
    val = (
        sinc_d(omega + lam, T, dt)
        + sinc_d(omega - lam, T, dt)
        - alpha * sinc_d(lam, T, dt)
    )
    return float(val) if np.ndim(val) == 0 else val


def beta_d_quadrature(lam, config: FilterConfig, omega: float | None = None, alpha: float | None = None):
    """Discrete filter value by direct trapezoid summation over the filter interval.

    Agrees with :func:`beta_d` to rounding; kept as the independent route and
    as the definition used for multi-period prediction.
    """
    w = config.omega if omega is None else omega
    a = config.resolved_alpha if alpha is None else alpha
    n = config.total_steps
    t_bar = config.periods * 2.0 * math.pi / w
    dt = t_bar / n
    tn = dt * np.arange(n + 1)
    sigma = np.ones(n + 1)
    sigma[0] = sigma[-1] = 0.5
    weights = (np.cos(w * tn) - a / 2.0) * sigma * dt
    lam = np.asarray(lam, dtype=float)
    val = (2.0 / t_bar) * np.cos(np.multiply.outer(lam, tn)) @ weights
    return float(val) if val.ndim == 0 else val


def lambda_tilde_explicit(lam_h, dt: float):
    """Eigenvalue map of second-order explicit stepping: (2/dt)*asin(lam*dt/2)."""
    lam_h = np.asarray(lam_h, dtype=float)
    arg = lam_h * dt / 2.0
    if np.any(arg > 1.0):
        worst = float(np.max(lam_h))
        raise ExplicitStabilityError(
            f"lambda*dt = {worst * dt:.6g} > 2: mode {worst:.6g} is explicitly unstable"
        )
    val = (2.0 / dt) * np.arcsin(arg)
    return float(val) if val.ndim == 0 else val


def lambda_tilde_implicit(lam_h, dt: float):
    """Eigenvalue map of trapezoidal implicit stepping: (1/dt)*acos(1/(1+(lam*dt)^2/2))."""
    lam_h = np.asarray(lam_h, dtype=float)
    val = (1.0 / dt) * np.arccos(1.0 / (1.0 + (lam_h * dt) ** 2 / 2.0))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class RatePrediction:
    """Predicted asymptotic contraction of the fixed-point iteration."""

    mu: float
    argmax_index: int
    betas: np.ndarray
    non_contractive: tuple[int, ...] = ()


def predict_rate(
    lambdas_h,
    config: FilterConfig,
    omega_tilde: float | None = None,
    alpha: float | None = None,
    deflated=(),
) -> RatePrediction:
    """Asymptotic rate mu = max |beta| over the (mapped) eigenvalues.

    ``omega_tilde`` is the corrected driving frequency of the discrete run
    (defaults to config.omega, which is exact for the continuous filter).
    Eigenvalues whose index is in ``deflated`` are excluded from the max but
    reported in ``betas``. Any eigenvalue mapping exactly onto the driving
    frequency raises :class:`ResonanceError`; |beta| >= 1 entries are
    surfaced through ``non_contractive`` rather than dropped.
    """
    lambdas_h = np.asarray(lambdas_h, dtype=float)
    w = config.omega if omega_tilde is None else omega_tilde
    if config.mode is TimeMode.CONTINUOUS:
        mapped = lambdas_h
        a = 0.5 if (alpha is None and config.alpha is None) else (config.resolved_alpha if alpha is None else alpha)
        t_bar = config.periods * 2.0 * math.pi / w
        betas = np.atleast_1d(beta(mapped, w, t_bar, a))
    else:
        dt = 2.0 * math.pi / (w * config.steps_per_period)
        if config.mode is TimeMode.EXPLICIT:
            mapped = np.atleast_1d(lambda_tilde_explicit(lambdas_h, dt))
        else:
            mapped = np.atleast_1d(lambda_tilde_implicit(lambdas_h, dt))
        a = config.resolved_alpha if alpha is None else alpha
        t_bar = config.periods * 2.0 * math.pi / w
        betas = np.atleast_1d(beta_d(mapped, w, t_bar, config.total_steps, a))

    close = np.abs(mapped - w) <= 1e-12 * abs(w)
    if np.any(close):
        bad = int(np.argmax(close))
        raise ResonanceError(
            f"eigenvalue {lambdas_h.flat[bad]:.15g} maps onto the driving frequency {w:.15g}"
        )

    deflated = set(int(i) for i in deflated)
    mu = -1.0
    argmax = -1
    for i, b in enumerate(np.abs(betas)):
        if i in deflated:
            continue
        if b > mu:
            mu, argmax = float(b), i
    if argmax < 0:
        raise ValueError("no eigenvalues left after deflation")
    non_contractive = tuple(
        int(i) for i in np.nonzero(np.abs(betas) >= 1.0)[0] if i not in deflated
    )
    return RatePrediction(mu=mu, argmax_index=argmax, betas=betas, non_contractive=non_contractive)
