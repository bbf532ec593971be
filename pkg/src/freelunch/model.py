"""Physical parameters, quantum-state descriptors and Coulomb-coupling relations.

All quantities are SI. Angular frequencies are in rad/s, so the trap values
2*pi*134 kHz etc. enter as ``2 * np.pi * 134e3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

HBAR = constants.hbar
K_B = constants.k
EPSILON_0 = constants.epsilon_0

# default trap and coupling values
DEFAULT_M = 1e-18
DEFAULT_GAMMA = 1e-20
DEFAULT_OMEGA_X = 2 * np.pi * 134e3
DEFAULT_OMEGA_Y = 2 * np.pi * 147e3
DEFAULT_ZPF = 4.1e-12
DEFAULT_G = 2 * np.pi * 51e3
DEFAULT_T = 60.0
# quantum-particle mass consistent with zpf = sqrt(hbar / (2 M omega_y))
DEFAULT_MASS_Y = HBAR / (2 * DEFAULT_OMEGA_Y * DEFAULT_ZPF**2)


class ParameterError(ValueError):
    """Raised when physical parameters violate their invariants.

    ``problems`` holds one ``(field, message)`` pair per violation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(f"{name}: {msg}" for name, msg in self.problems)
        super().__init__(text)


@dataclass(frozen=True)
class SystemParams:
    m: float = DEFAULT_M
    M: float = DEFAULT_MASS_Y
    Gamma: float = DEFAULT_GAMMA
    omega_x: float = DEFAULT_OMEGA_X
    omega_y: float = DEFAULT_OMEGA_Y
    zpf_y: float = DEFAULT_ZPF
    g: float = DEFAULT_G
    T: float = DEFAULT_T
    hbar: float = HBAR
    k_B: float = K_B
    # optional separate length scale for the noise amplitude; None -> zpf_y
    zpf_noise: float | None = None

    @property
    def beta(self) -> float:
        return 1.0 / (self.k_B * self.T)

    @property
    def Omega(self) -> float:
        """sqrt(4 omega_x^2 - Gamma^2); twice the damped oscillation frequency."""
        return math.sqrt(4.0 * self.omega_x**2 - self.Gamma**2)

    @property
    def force_scale(self) -> float:
        """hbar*g/zpf_y [N], the amplitude unit of the deterministic force."""
        return self.hbar * self.g / self.zpf_y

    @property
    def noise_scale(self) -> float:
        """kappa = hbar*g/zpf [N]; the quantum noise kernel is kappa^2 cos(...)."""
        zpf = self.zpf_y if self.zpf_noise is None else self.zpf_noise
        return self.hbar * self.g / zpf

    @property
    def thermal_strength(self) -> float:
        """White-noise strength 2 m Gamma k_B T [N^2 s]."""
        return 2.0 * self.m * self.Gamma * self.k_B * self.T

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class QuantumStateSpec:
    """Coherent (r = 0) or squeezed-coherent state of the quantum particle."""

    n: float = 1.0
    theta: float = 0.0
    r: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        problems = []
        if not np.isfinite(self.n) or self.n < 0:
            problems.append(("n", f"mean phonon number must be >= 0, got {self.n!r}"))
        if not np.isfinite(self.r) or self.r < 0:
            problems.append(("r", f"squeezing parameter must be >= 0, got {self.r!r}"))
        if not np.isfinite(self.theta):
            problems.append(("theta", "coherent phase must be finite"))
        if self.phi != 0:
            problems.append(("phi", f"only squeezing phase 0 is supported, got {self.phi!r}"))
        if problems:
            raise ParameterError(problems)

    def replace(self, **changes) -> "QuantumStateSpec":
        return replace(self, **changes)


THERMAL_IC = "thermal"
ZERO_IC = "zero"


@dataclass(frozen=True)
class ScenarioFlags:
    thermal_noise: bool = True
    quantum_noise: bool = True
    initial_condition: str = THERMAL_IC

    def __post_init__(self):
        if self.initial_condition not in (THERMAL_IC, ZERO_IC):
            raise ParameterError(
                [("initial_condition", f"expected 'thermal' or 'zero', got {self.initial_condition!r}")]
            )

    @classmethod
    def classical(cls) -> "ScenarioFlags":
        """Thermal bath only, particle starts in thermal equilibrium."""
        return cls(thermal_noise=True, quantum_noise=False, initial_condition=THERMAL_IC)

    @classmethod
    def quantum(cls) -> "ScenarioFlags":
        """Quantum-induced noise only, deterministic zero initial state."""
        return cls(thermal_noise=False, quantum_noise=True, initial_condition=ZERO_IC)

    @classmethod
    def full(cls) -> "ScenarioFlags":
        return cls(thermal_noise=True, quantum_noise=True, initial_condition=THERMAL_IC)


SCENARIOS = {
    "classical": ScenarioFlags.classical,
    "quantum": ScenarioFlags.quantum,
    "full": ScenarioFlags.full,
}


@dataclass(frozen=True)
class CoulombGeometry:
    q_x: float
    q_y: float
    d: float
    epsilon_0: float = field(default=EPSILON_0)

    @property
    def spring_constant(self) -> float:
        """q_x q_y / (4 pi eps0 d^3) [N/m]."""
        if not self.d > 0:
            raise ParameterError([("d", f"trap separation must be > 0, got {self.d!r}")])
        return self.q_x * self.q_y / (4 * math.pi * self.epsilon_0 * self.d**3)


def coulomb_coupling(geom: CoulombGeometry, zpf_x: float, zpf_y: float, hbar: float = HBAR) -> float:
    """Coupling rate g [rad/s] of the bilinear x*y term; negative for like charges."""
    return -geom.spring_constant * zpf_x * zpf_y / hbar


def shifted_frequency(omega: float, geom: CoulombGeometry, mass: float) -> float:
    """Trap frequency after absorbing the quadratic Coulomb self-term."""
    radicand = omega**2 - geom.spring_constant / mass
    if not radicand > 0:
        raise ParameterError(
            [("geometry", f"trap destabilised: need omega^2 > q_x q_y/(4 pi eps0 m d^3), "
                          f"radicand = {radicand:.6g} rad^2/s^2")]
        )
    return math.sqrt(radicand)


def validate_params(params: SystemParams) -> SystemParams:
    """Check every invariant of ``params`` and return it unchanged.

    Raises ParameterError listing all violations at once.
    """
    problems = []
    positive = ("m", "M", "omega_x", "omega_y", "zpf_y", "T", "hbar", "k_B")
    for name in positive:
        value = getattr(params, name)
        if not (np.isfinite(value) and value > 0):
            problems.append((name, f"must be finite and > 0, got {value!r}"))
    if not (np.isfinite(params.Gamma) and params.Gamma >= 0):
        problems.append(("Gamma", f"must be finite and >= 0, got {params.Gamma!r}"))
    if not np.isfinite(params.g):
        problems.append(("g", f"must be finite, got {params.g!r}"))
    if params.zpf_noise is not None and not (np.isfinite(params.zpf_noise) and params.zpf_noise > 0):
        problems.append(("zpf_noise", f"must be finite and > 0, got {params.zpf_noise!r}"))
    if not problems and not 4 * params.omega_x**2 > params.Gamma**2:
        problems.append(("Gamma", f"overdamped: need 4 omega_x^2 > Gamma^2 "
                                  f"(Gamma={params.Gamma!r}, omega_x={params.omega_x!r})"))
    if problems:
        raise ParameterError(problems)
    return params
