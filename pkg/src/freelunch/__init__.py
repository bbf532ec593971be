"""Work statistics and free-lunch probabilities for a classical oscillator
driven by a quantum oscillator in a coherent or squeezed-coherent state."""

from .model import (ParameterError, QuantumStateSpec, ScenarioFlags, SystemParams, SCENARIOS,
                    validate_params)
from .noise import build_noise_model
from .thermo import (ForceProtocol, SecondLawViolation, WorkStatistics, analyze, free_energy_difference,
                     free_lunch_probability, work_statistics)
from .montecarlo import compare_to_analytic, run_ensemble

__all__ = [
    "ParameterError", "QuantumStateSpec", "ScenarioFlags", "SystemParams", "SCENARIOS", "validate_params",
    "build_noise_model", "ForceProtocol", "SecondLawViolation", "WorkStatistics", "analyze",
    "free_energy_difference", "free_lunch_probability", "work_statistics", "compare_to_analytic",
    "run_ensemble",
]
