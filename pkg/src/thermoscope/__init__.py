"""Tomographic tests of thermalization.

Given sample means of a few observables measured on the output of many
preparations, decide how many constants of the motion the data need, and
when one suffices, estimate the effective Hamiltonian and the temperatures.
"""

from .dataset import Dataset
from .errors import SolverError, ThermoscopeError, ValidationError
from .geometry import LevelOfDescription, gibbs_state, project, tomographic_image
from .hamiltonian import (
    HamiltonianEstimate,
    estimate_hamiltonian,
    qubit_geometry,
    qubit_max_likelihood,
    qubit_mle_fixed_point,
    qubit_thermal_conditions,
    qubit_xi_perturbative,
    thermalization_condition,
)
from .operators import DensityMatrix, kubo_mori, pauli_matrices, qubit_state, relative_entropy
from .pipeline import AssessmentReport, assess
from .selection import asymptotic_log_likelihood, compare_levels, estimate_alpha, full_log_likelihood
from .simulate import SimulationConfig, preset_config, recovery_study, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "AssessmentReport", "Dataset", "DensityMatrix", "HamiltonianEstimate", "LevelOfDescription",
    "SimulationConfig", "SolverError", "ThermoscopeError", "ValidationError", "assess",
    "asymptotic_log_likelihood", "compare_levels", "estimate_alpha", "estimate_hamiltonian",
    "full_log_likelihood", "gibbs_state", "kubo_mori", "pauli_matrices", "preset_config", "project",
    "qubit_geometry", "qubit_max_likelihood", "qubit_mle_fixed_point", "qubit_state",
    "qubit_thermal_conditions", "qubit_xi_perturbative", "recovery_study", "relative_entropy",
    "simulate_dataset", "thermalization_condition", "tomographic_image",
]
