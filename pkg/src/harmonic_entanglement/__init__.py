"""Two-colour continuous-variable entanglement from a doubly resonant
second-harmonic / degenerate-OPA cavity.

Submodules
----------
opa
    Classical steady state, stability and linearized noise transfer.
gaussian
    Correlation matrices, detection loss, standard form and inseparability.
sampling
    Synthetic homodyne records and correlation-matrix estimation.
sweep
    Operating-point reports, angle and amplitude sweeps, GAWBS fit.
"""

from .errors import CalibrationError, DomainError, ModelError, SingularSystemError, SolverError
from .opa import CavityParams, DriveConfig, SteadyState, solve_steady_state, reflected_transfer
from .gaussian import CorrelationMatrix, InseparabilityResult, standard_form, inseparability_raw
from .sampling import synthesize_runs, estimate_correlation_matrix
from .config import Config, load_config
from .sweep import SweepSpec, run_point, run_angle_sweep, run_map

__version__ = "0.1.0"

__all__ = [
    "ModelError", "DomainError", "CalibrationError", "SolverError", "SingularSystemError",
    "CavityParams", "DriveConfig", "SteadyState", "solve_steady_state", "reflected_transfer",
    "CorrelationMatrix", "InseparabilityResult", "standard_form", "inseparability_raw",
    "synthesize_runs", "estimate_correlation_matrix",
    "Config", "load_config",
    "SweepSpec", "run_point", "run_angle_sweep", "run_map",
]
