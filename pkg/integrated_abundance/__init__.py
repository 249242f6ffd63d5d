"""
Integrated Abundance

Hierarchical Bayesian abundance estimation that combines autonomous acoustic
recordings, manual call validation and human point counts.
"""

from .models import (
    AbundanceKind,
    AbundanceModel,
    AcousticData,
    CountData,
    Dataset,
    ModelVariant,
    ParameterState,
    SurveyDesign,
    TruthRecord,
    ValidationData,
    scalar_parameters,
)
from .dataset import validate_dataset, with_variant, subset_counts
from .rates import detection_prob, true_positive_rate
from .likelihoods import PriorConfig, joint_loglik, log_posterior
from .simulator import ScenarioSpec, simulate, simulate_validation, scenario_grid
from .mcmc import ChainOutput, McmcConfig, make_config, run
from .diagnostics import PosteriorSummary, converged, ess, relative_bias, rhat, rhat_below, summarize, summarize_output
from .study import FitRecord, StudyResult, aggregate, run_covariate_designs, run_grid, run_pointcount_sweep
from .calibration import CalibrationResult, run_calibration
from .events import ProgressEvent, ProgressManager
from .exceptions import (
    AbundanceException,
    DatasetError,
    ConfigurationError,
    InitializationError,
    DiagnosticsError,
    ConvergenceError,
    StorageError,
)

__version__ = "0.1.0"
__all__ = [
    "AbundanceKind",
    "AbundanceModel",
    "AcousticData",
    "CountData",
    "Dataset",
    "ModelVariant",
    "ParameterState",
    "SurveyDesign",
    "TruthRecord",
    "ValidationData",
    "scalar_parameters",
    "validate_dataset",
    "with_variant",
    "subset_counts",
    "detection_prob",
    "true_positive_rate",
    "PriorConfig",
    "joint_loglik",
    "log_posterior",
    "ScenarioSpec",
    "simulate",
    "simulate_validation",
    "scenario_grid",
    "ChainOutput",
    "McmcConfig",
    "make_config",
    "run",
    "PosteriorSummary",
    "converged",
    "rhat_below",
    "relative_bias",
    "rhat",
    "summarize",
    "summarize_output",
    "ess",
    "FitRecord",
    "StudyResult",
    "aggregate",
    "run_grid",
    "run_pointcount_sweep",
    "run_covariate_designs",
    "CalibrationResult",
    "run_calibration",
    "ProgressEvent",
    "ProgressManager",
    "AbundanceException",
    "DatasetError",
    "ConfigurationError",
    "InitializationError",
    "DiagnosticsError",
    "ConvergenceError",
    "StorageError",
]
