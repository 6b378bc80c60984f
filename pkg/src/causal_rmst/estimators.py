"""RMST-difference estimators built from curves, pseudo-outcomes and nuisance predictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .data import RestrictedDataset
from .errors import BadConfig, DimensionMismatch, EmptyArm, FitError, MissingNuisance
from .nuisance.nuisance_set import NuisanceConfig, NuisanceSet, fit_nuisances
from .product_limit import WeightPlan, rmst_from_curve, treatment_weights, weighted_product_limit
from .transforms import bj_transform, dr_transform, ipcw_transform, qr_pseudo_outcome

METHODS = (
    "naive", "km", "ipcw_km", "ipcw_mean", "bj", "gformula_t", "gformula_s",
    "iptw_km", "iptw_ipcw_km", "iptw_ipcw_mean", "iptw_bj", "aiptw_aipcw",
)

# Nuisances each method consumes: e = propensity, G = censoring survival,
# S = per-arm outcome survival, S_pooled = single outcome model with A as covariate.
REQUIREMENTS: dict[str, frozenset[str]] = {
    "naive": frozenset(),
    "km": frozenset(),
    "ipcw_km": frozenset({"G"}),
    "ipcw_mean": frozenset({"G"}),
    "bj": frozenset({"S"}),
    "gformula_t": frozenset({"S"}),
    "gformula_s": frozenset({"S_pooled"}),
    "iptw_km": frozenset({"e"}),
    "iptw_ipcw_km": frozenset({"e", "G"}),
    "iptw_ipcw_mean": frozenset({"e", "G"}),
    "iptw_bj": frozenset({"e", "S"}),
    "aiptw_aipcw": frozenset({"e", "G", "S", "mu"}),
}

HAJEK_METHODS = ("ipcw_mean", "iptw_ipcw_mean", "iptw_bj")


@dataclass(frozen=True)
class EstimatorSpec:
    method: str
    normalization: Literal["standard", "hajek"] = "standard"
    nuisance_config: NuisanceConfig = field(default_factory=NuisanceConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadConfig(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.normalization not in ("standard", "hajek"):
            raise BadConfig(f"unknown normalization {self.normalization!r}")
        if self.normalization == "hajek" and self.method not in HAJEK_METHODS:
            raise BadConfig(f"hajek normalization is not defined for {self.method}")

    @property
    def requires(self) -> frozenset[str]:
        return REQUIREMENTS[self.method]


@dataclass(frozen=True)
class Estimate:
    """Point estimate of the RMST difference (arm 1 minus arm 0)."""

    theta: float
    method: str
    tau: float
    normalization: str = "standard"
    diagnostics: dict = field(default_factory=dict, compare=False)
    se: Optional[float] = None
    ci: Optional[tuple[float, float]] = None

    def to_dict(self) -> dict:
        out = {"method": self.method, "tau": self.tau, "normalization": self.normalization,
               "theta": self.theta, "diagnostics": self.diagnostics}
        if self.se is not None:
            out["se"] = self.se
        if self.ci is not None:
            out["ci"] = list(self.ci)
        return out


def fit_requirements(method: str) -> set[str]:
    """Nuisance fits needed to run ``method`` (``mu`` is derived from ``S``)."""
    req = set(REQUIREMENTS[method])
    if "mu" in req:
        req.discard("mu")
        req.add("S")
    return req


def check_nuisances(method: str, ns: NuisanceSet) -> None:
    missing = [k for k in sorted(REQUIREMENTS[method]) if not ns.has(k)]
    if missing:
        raise MissingNuisance(f"{method} needs nuisance(s) {', '.join(missing)}")


def normalized_weights(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Divide each arm's weights by that arm's total so they sum to one per arm."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    for arm in (0, 1):
        m = a == arm
        tot = w[m].sum()
        if tot <= 0:
            raise EmptyArm(f"arm {arm} has zero total weight")
        out[m] = w[m] / tot
    return out


def _arm_means(values: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    return float(values[a == 1].mean()), float(values[a == 0].mean())


def _weight_diag(w: np.ndarray) -> dict:
    return {"weight_min": float(w.min()), "weight_max": float(w.max())}


def _curve_theta(rd: RestrictedDataset, plan: WeightPlan, diag: dict) -> float:
    r = []
    for arm in (1, 0):
        s = weighted_product_limit(rd, arm, plan)
        diag[f"arm{arm}_skipped_factors"] = s.diagnostics["skipped_factors"]
        if "extension_fraction" in s.diagnostics:
            diag[f"arm{arm}_extension_fraction"] = s.diagnostics["extension_fraction"]
        r.append(rmst_from_curve(s, rd.tau))
    diag["rmst_arm1"], diag["rmst_arm0"] = r
    return r[0] - r[1]


def gformula_theta(rd: RestrictedDataset, ns: NuisanceSet, learner: Literal["T", "S"] = "T") -> Estimate:
    """Average of ``mu(x, 1) - mu(x, 0)`` over all subjects."""
    if learner == "T":
        mu1, mu0 = ns.mu_hat(rd.X, 1), ns.mu_hat(rd.X, 0)
    elif learner == "S":
        mu1, mu0 = ns.mu_pooled_hat(rd.X, 1), ns.mu_pooled_hat(rd.X, 0)
    else:
        raise BadConfig(f"unknown learner {learner!r}")
    theta = float(np.mean(mu1 - mu0))
    method = "gformula_t" if learner == "T" else "gformula_s"
    return Estimate(theta, method, rd.tau, diagnostics={"mu1_mean": float(mu1.mean()), "mu0_mean": float(mu0.mean())})


def estimate(rd: RestrictedDataset, spec: EstimatorSpec | str, ns: NuisanceSet | None = None) -> Estimate:
    """Estimate the RMST difference with ``spec.method``.

    When ``ns`` is omitted the nuisances listed in :data:`REQUIREMENTS` are
    fitted with ``spec.nuisance_config``.
    """
    if isinstance(spec, str):
        spec = EstimatorSpec(spec)
    method = spec.method
    n0, n1 = int(np.sum(rd.a == 0)), int(np.sum(rd.a == 1))
    if n0 == 0 or n1 == 0:
        raise EmptyArm("both arms must be nonempty")
    req = REQUIREMENTS[method]
    if req and rd.p == 0:
        raise DimensionMismatch(f"{method} needs covariates but the dataset has none")
    if ns is None and req:
        ns = fit_nuisances(rd, spec.nuisance_config, fit_requirements(method))
    if req:
        check_nuisances(method, ns)

    a = rd.a
    y = rd.restricted_time
    dt = rd.restricted_status.astype(float)
    diag: dict = {}
    hajek = spec.normalization == "hajek"

    if method == "naive":
        keep = dt > 0
        if not np.any(keep & (a == 1)) or not np.any(keep & (a == 0)):
            raise EmptyArm("an arm has no uncensored subjects")
        m1, m0 = _arm_means(y[keep], a[keep])
        theta = m1 - m0
        diag["dropped"] = int(np.sum(~keep))
    elif method == "km":
        theta = _curve_theta(rd, WeightPlan.unit(), diag)
    elif method == "ipcw_km":
        theta = _curve_theta(rd, WeightPlan("ipcw", censoring=ns.G_hat), diag)
    elif method == "iptw_km":
        w = treatment_weights(a, ns.e_hat(rd.X))
        diag.update(_weight_diag(w))
        theta = _curve_theta(rd, WeightPlan("iptw", treatment_weights=w), diag)
    elif method == "iptw_ipcw_km":
        w = treatment_weights(a, ns.e_hat(rd.X))
        diag.update(_weight_diag(w))
        theta = _curve_theta(rd, WeightPlan("iptw_ipcw", treatment_weights=w, censoring=ns.G_hat), diag)
    elif method in ("gformula_t", "gformula_s"):
        est = gformula_theta(rd, ns, "T" if method == "gformula_t" else "S")
        theta = est.theta
        diag.update(est.diagnostics)
    elif method == "ipcw_mean":
        po = ipcw_transform(rd, ns)
        if hajek:
            G = _G_at_y(rd, ns)
            wn = normalized_weights(dt / G, a)
            theta = float(np.sum(np.where(a == 1, wn, -wn) * y))
        else:
            m1, m0 = _arm_means(po.values, a)
            theta = m1 - m0
    elif method == "bj":
        po = bj_transform(rd, ns)
        m1, m0 = _arm_means(po.values, a)
        theta = m1 - m0
        diag.update(po.flags)
    elif method == "iptw_ipcw_mean":
        e = ns.e_hat(rd.X)
        w = treatment_weights(a, e)
        diag.update(_weight_diag(w))
        po = ipcw_transform(rd, ns)
        if hajek:
            G = _G_at_y(rd, ns)
            wn = normalized_weights(w * dt / G, a)
            theta = float(np.sum(np.where(a == 1, wn, -wn) * y))
        else:
            theta = float(np.mean(np.where(a == 1, w, -w) * po.values))
    elif method == "iptw_bj":
        e = ns.e_hat(rd.X)
        w = treatment_weights(a, e)
        diag.update(_weight_diag(w))
        po = bj_transform(rd, ns)
        diag.update(po.flags)
        if hajek:
            wn = normalized_weights(w, a)
            theta = float(np.sum(np.where(a == 1, wn, -wn) * po.values))
        else:
            theta = float(np.mean(np.where(a == 1, w, -w) * po.values))
    elif method == "aiptw_aipcw":
        po = qr_pseudo_outcome(rd, ns, dr_transform(rd, ns))
        theta = float(np.mean(po.values))
        diag.update(po.flags)
    else:  # pragma: no cover - guarded by EstimatorSpec
        raise BadConfig(method)

    if ns is not None:
        diag["nuisance_tags"] = {k: ns.tags[k] for k in sorted(ns.tags)}
        if "propensity_clipped" in ns.diagnostics and "e" in req:
            diag["propensity_clipped"] = ns.diagnostics["propensity_clipped"]
    if not np.isfinite(theta):
        raise FitError(f"{method} produced a non-finite estimate")
    return Estimate(float(theta), method, rd.tau, spec.normalization, diag)


def _G_at_y(rd: RestrictedDataset, ns: NuisanceSet) -> np.ndarray:
    G = np.empty(rd.n)
    for arm in (0, 1):
        m = rd.a == arm
        G[m] = ns.G_hat(rd.restricted_time[m], rd.X[m], arm)
    return G
