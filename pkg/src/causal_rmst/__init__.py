"""Estimators of the restricted mean survival time difference between two treatment arms."""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap_ci, bootstrap_statistic
from .data import Dataset, RestrictedDataset, Subject, read_csv, restrict, validate_dataset, write_csv
from .estimators import METHODS, REQUIREMENTS, Estimate, EstimatorSpec, estimate, gformula_theta
from .nuisance import (
    NuisanceConfig,
    NuisanceSet,
    conditional_rmst,
    fit_cox,
    fit_logistic,
    fit_nuisances,
    make_oracle_nuisances,
    misspecify,
    q_s,
)
from .product_limit import StepSurvival, WeightPlan, greenwood_variance, rmst_from_curve, weighted_product_limit
from .simulation import PRESETS, DGPConfig, generate, preset, run_benchmark, true_rmst
from .transforms import bj_transform, dr_transform, ipcw_transform, qr_pseudo_outcome

__all__ = [
    "BootstrapResult", "bootstrap_ci", "bootstrap_statistic", "Dataset", "RestrictedDataset", "Subject", "read_csv",
    "restrict", "validate_dataset", "write_csv", "METHODS", "REQUIREMENTS", "Estimate",
    "EstimatorSpec", "estimate", "gformula_theta", "NuisanceConfig", "NuisanceSet",
    "conditional_rmst", "fit_cox", "fit_logistic", "fit_nuisances", "make_oracle_nuisances",
    "misspecify", "q_s", "StepSurvival", "WeightPlan", "greenwood_variance", "rmst_from_curve",
    "weighted_product_limit", "PRESETS", "DGPConfig", "generate", "preset", "run_benchmark",
    "true_rmst", "bj_transform", "dr_transform", "ipcw_transform", "qr_pseudo_outcome",
]
