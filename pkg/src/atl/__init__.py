"""Robust adaptive asymptotic tracking for uncertain MIMO canonical-form plants.

Nussbaum-gain and known-direction filtered-error controllers, actuator
effectiveness faults, sampling-based controllability certificates and
trace diagnostics.
"""

from .errors import ATLError, ConfigError, DivergenceError, DomainError, GainOverflowError, SpecError
from .simulate import Scenario, SimulationTrace, Verdict, run

__all__ = [
    "ATLError", "ConfigError", "DivergenceError", "DomainError", "GainOverflowError", "SpecError",
    "Scenario", "SimulationTrace", "Verdict", "run",
]
__version__ = "0.1.0"
