"""1D Helmholtz model problem, discrete dispersion, and resolution rules.

The model BVP  u'' + k^2 u = cos(kappa x),  u(a) = u(b) = 0  has closed-form
continuous and (order-2) discrete solutions, both a particular cosine plus a
homogeneous sine part. The discrete homogeneous part oscillates with the
discrete wave number k_tilde defined by sin(k_tilde dx/2)/(dx/2) = k at
order 2, and implicitly by

    k^2 = (1/dx^2) sum_{mu=0}^{p/2-1} b_mu (4 sin^2(k_tilde dx/2))^(mu+1)

at order p, where b_mu = 2 (mu!)^2/(2 mu+2)!. The phase drift
k_tilde = k (1 + b_{p/2} (k dx)^p / 2 + ...) accumulates across the domain,
which is the pollution error E_p = (1/2) b_{p/2} kL (k dx)^p; inverting it
for a target relative error gives the points-per-wavelength rule
PPW_p = 2 pi (pi b_{p/2})^(1/p) (N_Lambda/eps)^(1/p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "ModelProblemSpec",
    "DispersionResult",
    "b_coeff",
    "continuous_solution",
    "discrete_solution_closed_form",
    "k_tilde",
    "pollution_error",
    "amplitude_phase_errors",
    "measured_amplitude_ratio_error",
    "ppw_estimate",
    "ppw_prefactor",
]

K_H = 1.0 / 24.0  # leading amplitude/phase constant of the order-2 scheme
K_F = 1.0 / 12.0  # leading particular-solution constant


def b_coeff(mu: int) -> Fraction:
    """Exact expansion coefficient b_mu = 2 (mu!)^2 / (2 mu + 2)!."""
    if not isinstance(mu, (int, np.integer)) or mu < 0:
        raise ValueError("mu must be a nonnegative integer")
    if mu > 20:
        raise ValueError("mu > 20 exceeds the supported exact range")
    return Fraction(2 * math.factorial(mu) ** 2, math.factorial(2 * mu + 2))


@dataclass(frozen=True)
class ModelProblemSpec:
    """u'' + k^2 u = cos(kappa x) on [a, b] with zero endpoint values."""

    k: float
    kappa: float
    a: float
    b: float
    n: int
    order: int = 2

    def __post_init__(self):
        if not (self.k > 0 and self.kappa > 0):
            raise ValueError("k and kappa must be positive")
        if self.b <= self.a:
            raise ValueError("empty interval")
        if abs(self.k**2 - self.kappa**2) < 1e-10 * self.k**2:
            raise ValueError("kappa is resonant with k")
        if abs(math.sin(self.k * self.length)) < 1e-10:
            raise ValueError("k is (nearly) an eigenvalue: sin(kL) ~ 0, the BVP is singular")
        if self.n < 4:
            raise ValueError("need at least 4 cells")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def dx(self) -> float:
        return self.length / self.n

    def grid_points(self) -> np.ndarray:
        return self.a + self.dx * np.arange(self.n + 1)


class ContinuousSolution:
    """Evaluable closed-form solution u = u_f + u_h of the model problem."""

    def __init__(self, spec: ModelProblemSpec):
        self.spec = spec
        self._denom = spec.k**2 - spec.kappa**2
        self._sin_kl = math.sin(spec.k * spec.length)

    def particular(self, x):
        return np.cos(self.spec.kappa * np.asarray(x, dtype=float)) / self._denom

    def homogeneous(self, x):
        s = self.spec
        x = np.asarray(x, dtype=float)
        return (
            -self.particular(s.b) * np.sin(s.k * (x - s.a)) / self._sin_kl
            - self.particular(s.a) * np.sin(s.k * (s.b - x)) / self._sin_kl
        )

    def __call__(self, x):
        return self.particular(x) + self.homogeneous(x)

    def second_derivative(self, x):
        s = self.spec
        x = np.asarray(x, dtype=float)
        return -s.kappa**2 * self.particular(x) - s.k**2 * self.homogeneous(x)


def continuous_solution(spec: ModelProblemSpec) -> ContinuousSolution:
    return ContinuousSolution(spec)


def discrete_solution_closed_form(spec: ModelProblemSpec) -> np.ndarray:
    """Exact solution U_j of the order-2 difference scheme on the model grid.

    Valid in the propagating regime k dx < 2; U_j solves the tridiagonal
    system D+D- U + k^2 U = cos(kappa x_j), U_0 = U_N = 0 to rounding.
    """
    if spec.order != 2:
        raise ValueError("the closed form is derived for the order-2 scheme only")
    dx = spec.dx
    if spec.k * dx >= 2.0:
        raise ValueError(f"k*dx = {spec.k * dx:.3g} >= 2: evanescent regime")
    kt = (2.0 / dx) * math.asin(spec.k * dx / 2.0)
    kap_t = math.sin(spec.kappa * dx / 2.0) / (dx / 2.0)
    sin_ktl = math.sin(kt * spec.length)
    if abs(sin_ktl) < 1e-13:
        raise ValueError("discrete system is singular: sin(k_tilde L) ~ 0")
    x = spec.grid_points()
    denom = spec.k**2 - kap_t**2
    u_f = np.cos(spec.kappa * x) / denom
    u_h = (
        -u_f[-1] * np.sin(kt * (x - spec.a)) / sin_ktl
        - u_f[0] * np.sin(kt * (spec.b - x)) / sin_ktl
    )
    return u_f + u_h


@dataclass(frozen=True)
class DispersionResult:
    k_tilde: float
    relative_error: float
    asymptotic_coefficient: float  # (1/2) b_{p/2} (k dx)^p

    @property
    def asymptotic_prediction(self) -> float:
        return self.asymptotic_coefficient


def _symbol(p: int, xi: float) -> float:
    s2 = 4.0 * math.sin(xi / 2.0) ** 2
    return sum(float(b_coeff(mu)) * s2 ** (mu + 1) for mu in range(p // 2))


def _symbol_deriv(p: int, xi: float) -> float:
    s = math.sin(xi / 2.0)
    ds2 = 4.0 * s * math.cos(xi / 2.0)  # d(4 sin^2)/d xi
    s2 = 4.0 * s**2
    return sum(float(b_coeff(mu)) * (mu + 1) * s2**mu * ds2 for mu in range(p // 2))


def k_tilde(k: float, dx: float, p: int) -> DispersionResult:
    """Discrete wave number supported by the order-p scheme at (k, dx).

    Order 2 has the closed form (2/dx) asin(k dx/2); higher even orders
    solve the dispersion relation with a damped Newton iteration seeded by
    the asymptotic expansion. Requires k dx < 1.
    """
    if p < 2 or p % 2:
        raise ValueError("order p must be even and >= 2")
    if not k * dx < 1.0:
        raise ValueError(f"k*dx = {k * dx:.3g} >= 1: outside the asymptotic regime")
    coeff = 0.5 * float(b_coeff(p // 2)) * (k * dx) ** p
    if p == 2:
        kt = (2.0 / dx) * math.asin(k * dx / 2.0)
    else:
        target = (k * dx) ** 2
        xi = k * dx * (1.0 + coeff)
        converged = False
        for _ in range(50):
            g = _symbol(p, xi) - target
            dg = _symbol_deriv(p, xi)
            step = g / dg
            while abs(step) > 0.5 * abs(xi):
                step *= 0.5
            xi -= step
            if abs(step) <= 1e-14 * abs(xi):
                converged = True
                break
        if not converged:
            raise RuntimeError(f"dispersion Newton iteration did not converge at k*dx={k*dx:.3g}")
        kt = xi / dx
    return DispersionResult(k_tilde=kt, relative_error=(kt - k) / k, asymptotic_coefficient=coeff)


def pollution_error(p: int, k: float, length: float, dx: float) -> float:
    """Accumulated phase-error estimate E_p = (1/2) b_{p/2} k L (k dx)^p."""
    if p < 2 or p % 2:
        raise ValueError("order p must be even and >= 2")
    return 0.5 * float(b_coeff(p // 2)) * k * length * (k * dx) ** p


@dataclass(frozen=True)
class AmplitudePhaseBounds:
    amplitude: float
    phase: float
    near_eigenvalue_amplification: float
    nearest_eigenvalue: float
    delta_k: float


def amplitude_phase_errors(spec: ModelProblemSpec) -> AmplitudePhaseBounds:
    """Leading-order error bounds of the order-2 discrete model solution.

    amplitude: K_h kL/|tan(kL)| (k dx)^2 + K_f (kappa dx)^2 / |(k/kappa)^2-1|
    phase:     K_h kL (k dx)^2
    The amplification entry evaluates K_h (k_m/|dk|) (k dx)^2 with k_m the
    nearest homogeneous eigenvalue m pi / L; it grows like 1/|dk| as k
    approaches an eigenvalue.
    """
    if spec.order != 2:
        raise ValueError("bounds are derived for the order-2 scheme")
    k, kap, L, dx = spec.k, spec.kappa, spec.length, spec.dx
    amp = K_H * k * L / abs(math.tan(k * L)) * (k * dx) ** 2
    amp += K_F * (kap * dx) ** 2 / abs((k / kap) ** 2 - 1.0)
    phase = K_H * k * L * (k * dx) ** 2
    m = max(1, round(k * L / math.pi))
    k_m = m * math.pi / L
    dk = k - k_m
    amplification = K_H * (k_m / abs(dk)) * (k * dx) ** 2 if dk != 0 else math.inf
    return AmplitudePhaseBounds(
        amplitude=amp,
        phase=phase,
        near_eigenvalue_amplification=amplification,
        nearest_eigenvalue=k_m,
        delta_k=dk,
    )


def measured_amplitude_ratio_error(spec: ModelProblemSpec) -> float:
    """|A - 1| with A the discrete-to-continuous homogeneous amplitude ratio.

    A = [(k^2-kappa^2)/(k^2-kappa_tilde^2)] [sin(kL)/sin(k_tilde L)], read off
    the closed forms; this is the quantity the near-eigenvalue amplification
    bound describes.
    """
    dx = spec.dx
    kt = (2.0 / dx) * math.asin(spec.k * dx / 2.0)
    kap_t = math.sin(spec.kappa * dx / 2.0) / (dx / 2.0)
    ratio = (
        (spec.k**2 - spec.kappa**2)
        / (spec.k**2 - kap_t**2)
        * math.sin(spec.k * spec.length)
        / math.sin(kt * spec.length)
    )
    return abs(ratio - 1.0)


def ppw_prefactor(p: int) -> float:
    """(pi b_{p/2})^(1/p); about 0.51, 0.43, 0.42, 0.42 at p = 2, 4, 6, 8."""
    if p < 2 or p % 2:
        raise ValueError("order p must be even and >= 2")
    b = b_coeff(p // 2)
    return float((math.pi * b.numerator / b.denominator) ** (1.0 / p))


def ppw_estimate(p: int, n_lambda: float, eps: float) -> float:
    """Points-per-wavelength needed for relative pollution error eps.

    PPW_p = 2 pi (pi b_{p/2})^(1/p) (N_Lambda/eps)^(1/p), with N_Lambda the
    domain size in wavelengths.
    """
    if not (eps > 0 and n_lambda > 0):
        raise ValueError("eps and n_lambda must be positive")
    return 2.0 * math.pi * ppw_prefactor(p) * (n_lambda / eps) ** (1.0 / p)
