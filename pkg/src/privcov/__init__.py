"""Differentially private covariance estimation by adaptive entry measurement."""

from .baselines import diagonal_only_estimate, ssp_estimate
from .dataio import Dataset, load_csv, load_dataset, preprocess, synth_ar1
from .estimators import DiagonalCovariance, PaceGGMCovariance, SSPCovariance
from .harness import ExperimentConfig, TrialRecord, run_experiment, summarize
from .measurements import MeasurementStore
from .metrics import effective_rank, frobenius_error, mahalanobis_error, off_diag_energy
from .pace import PaceConfig, PaceResult, run
from .privacy import BudgetLedger, gaussian_mechanism, zcdp_to_approx_dp
from .reconstruction import ReconstructionProblem, IpmSchedule, ipm_solve, pgd_solve, solve_max_entropy
from .validation import second_moment

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "Dataset",
    "DiagonalCovariance",
    "ExperimentConfig",
    "IpmSchedule",
    "MeasurementStore",
    "PaceConfig",
    "PaceGGMCovariance",
    "PaceResult",
    "ReconstructionProblem",
    "SSPCovariance",
    "TrialRecord",
    "diagonal_only_estimate",
    "effective_rank",
    "frobenius_error",
    "gaussian_mechanism",
    "ipm_solve",
    "load_csv",
    "load_dataset",
    "mahalanobis_error",
    "off_diag_energy",
    "pgd_solve",
    "preprocess",
    "run",
    "run_experiment",
    "second_moment",
    "solve_max_entropy",
    "ssp_estimate",
    "summarize",
    "synth_ar1",
    "zcdp_to_approx_dp",
]
