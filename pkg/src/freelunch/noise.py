"""Noise kernels acting on the classical particle and exact path samplers.

Thermal noise is white with strength ``2 m Gamma k_B T``. The quantum-induced
noise of a squeezed-coherent state (squeezing phase 0) is represented as

    zeta(t) = a cos(omega_y t) + b sin(omega_y t),
    a ~ N(0, e^{2r} kappa^2),  b ~ N(0, e^{-2r} kappa^2),

whose covariance is exactly
``kappa^2 [cosh(2r) cos(w(t-t')) + sinh(2r) cos(w(t+t'))]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import QuantumStateSpec, ScenarioFlags, SystemParams

WHITE = "white"
QUADRATURE = "quadrature"
ORACLE_MAX_POINTS = 2048
PSD_REL_TOL = 1e-12


class PSDViolation(ArithmeticError):
    """Assembled covariance matrix has a clearly negative eigenvalue."""


@dataclass(frozen=True)
class NoiseComponent:
    kind: str
    strength: float = 0.0  # white: <eta(t) eta(t')> = strength * delta(t - t')
    var_cos: float = 0.0
    var_sin: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in (WHITE, QUADRATURE):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.strength < 0 or self.var_cos < 0 or self.var_sin < 0:
            raise ValueError("noise strengths and quadrature variances must be >= 0")

    @property
    def stationary_amplitude(self):
        """kappa^2 cosh(2r), the coefficient of cos(w(t-t'))."""
        return 0.5 * (self.var_cos + self.var_sin)

    @property
    def nonstationary_amplitude(self):
        """kappa^2 sinh(2r), the coefficient of cos(w(t+t'))."""
        return 0.5 * (self.var_cos - self.var_sin)


@dataclass(frozen=True)
class NoiseModel:
    components: tuple = field(default_factory=tuple)

    @property
    def white(self):
        return [c for c in self.components if c.kind == WHITE]

    @property
    def quadrature(self):
        return [c for c in self.components if c.kind == QUADRATURE]

    @property
    def white_strength(self):
        return sum(c.strength for c in self.white)


def build_noise_model(params: SystemParams, state: QuantumStateSpec, flags: ScenarioFlags) -> NoiseModel:
    comps = []
    if flags.thermal_noise:
        comps.append(NoiseComponent(WHITE, strength=params.thermal_strength))
    if flags.quantum_noise:
        k2 = params.noise_scale**2
        comps.append(NoiseComponent(
            QUADRATURE,
            var_cos=np.exp(2 * state.r) * k2,
            var_sin=np.exp(-2 * state.r) * k2,
            omega=params.omega_y,
        ))
    return NoiseModel(tuple(comps))


def kernel_value(model: NoiseModel, t1, t2):
    """Smooth covariance <zeta(t1) zeta(t2)> [N^2] and the white delta strength.

    Returns ``(smooth, white_strength)``; the white part is never expanded
    into a delta function.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 < 0) or np.any(t2 < 0):
        raise ValueError("kernel times must be >= 0")
    smooth = np.zeros(np.broadcast(t1, t2).shape)
    for c in model.quadrature:
        smooth = smooth + (c.var_cos * np.cos(c.omega * t1) * np.cos(c.omega * t2)
                           + c.var_sin * np.sin(c.omega * t1) * np.sin(c.omega * t2))
    return smooth, model.white_strength


def kernel_matrix(model: NoiseModel, grid):
    grid = np.asarray(grid, dtype=float)
    smooth, _ = kernel_value(model, grid[:, None], grid[None, :])
    return smooth


def path_rng(seed, index=0):
    """Counter-based stream keyed by (master seed, path index)."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def draw_amplitudes(model: NoiseModel, rng, size=None):
    """One (a, b) pair per quadrature component, drawn in component order."""
    out = []
    for c in model.quadrature:
        a = np.sqrt(c.var_cos) * rng.standard_normal(size)
        b = np.sqrt(c.var_sin) * rng.standard_normal(size)
        out.append((c.omega, a, b))
    return out


def quadrature_path(amplitudes, grid):
    grid = np.asarray(grid, dtype=float)
    total = 0.0
    for omega, a, b in amplitudes:
        a = np.asarray(a)[..., None]
        b = np.asarray(b)[..., None]
        total = total + a * np.cos(omega * grid) + b * np.sin(omega * grid)
    return np.broadcast_to(total, np.broadcast_shapes(np.shape(total), grid.shape)).copy()


def sample_quadrature_path(model: NoiseModel, grid, seed, size=None, index=0):
    """Exact quadrature-noise path(s) on ``grid``; shape (size, len(grid)) if size given."""
    grid = _check_grid(grid)
    rng = path_rng(seed, index)
    amps = draw_amplitudes(model, rng, size)
    path = quadrature_path(amps, grid)
    if size is None:
        return path.reshape(grid.shape)
    return path.reshape((size,) + grid.shape)


def psd_factor(cov):
    """Symmetric square root of a PSD matrix with eigenvalue clipping."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    floor = -PSD_REL_TOL * max(np.trace(cov), 0.0)
    if vals.min() < floor:
        raise PSDViolation(f"covariance has eigenvalue {vals.min():.3e} below {floor:.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def sample_oracle_path(model: NoiseModel, grid, seed, size=None):
    """Correlated Gaussian draw from the assembled kernel matrix."""
    grid = _check_grid(grid)
    if grid.size > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle sampler limited to {ORACLE_MAX_POINTS} grid points")
    L = psd_factor(kernel_matrix(model, grid))
    rng = np.random.Generator(np.random.Philox(key=np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, 2**63], dtype=np.uint64)))
    z = rng.standard_normal((1 if size is None else size, grid.size))
    out = z @ L.T
    return out[0] if size is None else out
