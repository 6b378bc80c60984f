"""Propensity, outcome and censoring models plus their evaluation handles."""

from .cox import CoxModel, fit_cox
from .curves import (
    ConstantCurve,
    CoxCurve,
    ExponentialShiftCurve,
    conditional_rmst,
    mean_residual_life,
    q_s,
)
from .features import FEATURE_MAPS, design, interaction_terms
from .logistic import PropensityModel, fit_logistic
from .nuisance_set import (
    NuisanceConfig,
    NuisanceSet,
    constant_survival,
    fit_nuisances,
    make_oracle_nuisances,
    misspecify,
)

__all__ = [
    "CoxModel", "fit_cox", "ConstantCurve", "CoxCurve", "ExponentialShiftCurve",
    "conditional_rmst", "mean_residual_life", "q_s", "FEATURE_MAPS", "design",
    "interaction_terms", "PropensityModel", "fit_logistic", "NuisanceConfig",
    "NuisanceSet", "constant_survival", "fit_nuisances", "make_oracle_nuisances", "misspecify",
]
