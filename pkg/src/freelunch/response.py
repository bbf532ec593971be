"""Linear response of the damped classical oscillator.

The position is

    x(t) = x0 c(t) + v0 s(t) + int_0^t G(t - u) F(u) du

with ``G(t) = (2/(m Omega)) exp(-Gamma t/2) sin(Omega t/2)`` and homogeneous
basis functions ``c`` (unit initial position) and ``s`` (unit initial
velocity, equal to ``m G``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemParams, THERMAL_IC, ZERO_IC
from .quadrature import PanelRule, exp_convolution, refine_until_converged


@dataclass(frozen=True)
class InitialState:
    mean_x0: float = 0.0
    mean_v0: float = 0.0
    var_x0: float = 0.0
    var_v0: float = 0.0
    cov_x0v0: float = 0.0

    def __post_init__(self):
        if self.var_x0 < 0 or self.var_v0 < 0:
            raise ValueError("initial variances must be non-negative")
        if self.cov_x0v0**2 > self.var_x0 * self.var_v0 * (1 + 1e-12):
            raise ValueError("initial covariance matrix is not positive semi-definite")

    @classmethod
    def thermal(cls, params: SystemParams) -> "InitialState":
        kT = params.k_B * params.T
        return cls(0.0, 0.0, kT / (params.m * params.omega_x**2), kT / params.m, 0.0)

    @classmethod
    def zero(cls) -> "InitialState":
        return cls()

    @classmethod
    def from_flag(cls, flag: str, params: SystemParams) -> "InitialState":
        if flag == THERMAL_IC:
            return cls.thermal(params)
        if flag == ZERO_IC:
            return cls.zero()
        raise ValueError(f"unknown initial condition {flag!r}")

    @property
    def covariance(self):
        return np.array([[self.var_x0, self.cov_x0v0], [self.cov_x0v0, self.var_v0]])


def eigenvalue(params: SystemParams) -> complex:
    """lam = -Gamma/2 + i Omega/2, so that G(t) = (2/(m Omega)) Im exp(lam t)."""
    return complex(-0.5 * params.Gamma, 0.5 * params.Omega)


def _check_nonnegative(t, name="dt"):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError(f"{name} must be >= 0")
    return t


def impulse_response(params: SystemParams, dt):
    """Green's function G(dt) [m/(N s)] for dt >= 0."""
    dt = _check_nonnegative(dt)
    Om = params.Omega
    return 2.0 / (params.m * Om) * np.exp(-0.5 * params.Gamma * dt) * np.sin(0.5 * Om * dt)


def homogeneous_basis(params: SystemParams, t):
    """Return (c, s, c_dot, s_dot) at times t."""
    t = np.asarray(t, dtype=float)
    G, Om = params.Gamma, params.Omega
    decay = np.exp(-0.5 * G * t)
    cs, sn = np.cos(0.5 * Om * t), np.sin(0.5 * Om * t)
    c = decay * (cs + (G / Om) * sn)
    s = decay * (2.0 / Om) * sn
    # derivatives: c' = -omega^2 s, s' = c - Gamma s
    c_dot = -params.omega_x**2 * s
    s_dot = c - G * s
    return c, s, c_dot, s_dot


def homogeneous_solution(params: SystemParams, x0, v0, t):
    """Free damped motion from (x0, v0)."""
    t = _check_nonnegative(t, "t")
    c, s, _, _ = homogeneous_basis(params, t)
    return x0 * c + v0 * s


def driven_response(params: SystemParams, force, t, rule: PanelRule):
    """int_0^t G(t-u) force(u) du on a fixed panel rule (no refinement)."""
    z = exp_convolution(eigenvalue(params), force, t, rule)
    return (2.0 / (params.m * params.Omega)) * z.imag


def _fastest(params: SystemParams, extra=0.0):
    return max(params.omega_x, 0.5 * params.Omega, params.omega_y, extra)


def mean_position(params: SystemParams, force, init: InitialState, t, omega_max=None):
    """<x(t)> under a deterministic force, with controlled quadrature.

    ``force`` is a vectorised callable. ``omega_max`` is the fastest angular
    frequency present in the force (default: the trap frequencies).
    """
    t = _check_nonnegative(t, "t")
    tmax = float(np.max(t)) if t.size else 0.0
    hom = homogeneous_solution(params, init.mean_x0, init.mean_v0, t)
    if tmax == 0.0:
        return hom + 0.0 * t
    rule = PanelRule.for_frequency(tmax, _fastest(params, omega_max or 0.0))
    scale = _force_scale(force, tmax) / (params.m * params.omega_x**2)
    out = refine_until_converged(
        lambda rl: {"x": driven_response(params, force, t, rl)},
        rule,
        {"x": (1e-9, 1e-12 * scale)},
    )
    return hom + out["x"]


def _force_scale(force, tmax, samples=257):
    u = np.linspace(0.0, tmax, samples)
    return float(np.max(np.abs(force(u)))) or 1.0


def white_response_covariance(params: SystemParams, strength, t1, t2):
    """strength * int_0^min(t1,t2) G(t1-u) G(t2-u) du, by panel quadrature."""
    lo = min(t1, t2)
    if lo <= 0 or strength == 0:
        return 0.0
    rule = PanelRule.for_frequency(lo, _fastest(params))

    def integrand(u):
        return impulse_response(params, t1 - u) * impulse_response(params, t2 - u)

    def evaluate(rl):
        return {"v": rl.integrate(integrand)}

    # int G^2 du grows like lo / (m omega)^2
    scale = lo / (params.m * params.omega_x) ** 2
    out = refine_until_converged(evaluate, rule, {"v": (1e-9, 1e-12 * scale)})
    return strength * float(out["v"])


def position_covariance(params: SystemParams, noise, init: InitialState, t1, t2):
    """Cov[x(t1), x(t2)] [m^2] from initial-state spread plus every noise component."""
    if t1 < 0 or t2 < 0:
        raise ValueError("times must be >= 0")
    c1, s1, _, _ = homogeneous_basis(params, t1)
    c2, s2, _, _ = homogeneous_basis(params, t2)
    total = float(np.array([c1, s1]) @ init.covariance @ np.array([c2, s2]))
    for comp in noise.components:
        if comp.kind == "white":
            total += white_response_covariance(params, comp.strength, t1, t2)
        else:
            rc = quadrature_responses(params, comp.omega, np.array([t1, t2]))
            total += comp.var_cos * rc[0][0] * rc[0][1] + comp.var_sin * rc[1][0] * rc[1][1]
    return total


def quadrature_responses(params: SystemParams, omega, t):
    """Responses to unit cos(omega u) and sin(omega u) forcing at times t."""
    t = _check_nonnegative(t, "t")
    tmax = float(np.max(t))
    if tmax == 0.0:
        z = np.zeros_like(t)
        return z, z
    rule = PanelRule.for_frequency(tmax, _fastest(params, omega))
    scale = 1.0 / (params.m * params.omega_x**2)

    def evaluate(rl):
        return {
            "c": driven_response(params, lambda u: np.cos(omega * u), t, rl),
            "s": driven_response(params, lambda u: np.sin(omega * u), t, rl),
        }

    out = refine_until_converged(evaluate, rule, {"c": (1e-9, 1e-12 * scale), "s": (1e-9, 1e-12 * scale)})
    return out["c"], out["s"]
