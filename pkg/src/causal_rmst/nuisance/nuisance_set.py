"""Bundles of nuisance handles consumed by the transforms and estimators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from ..data import RestrictedDataset
from ..errors import BadConfig, MissingNuisance, UnsupportedDGP
from .cox import fit_cox
from .curves import ConstantCurve, CoxCurve, ExponentialShiftCurve, conditional_rmst, q_s
from .features import FEATURE_MAPS
from .logistic import fit_logistic

NUISANCE_NAMES = ("outcome", "censoring", "treatment")


@dataclass(frozen=True)
class NuisanceConfig:
    """Model choices for the nuisance fits.

    ``*_features`` name a feature map from :data:`FEATURE_MAPS`. Clipping
    thresholds and solver tolerances are shared by every fit.
    """

    outcome_features: str = "linear"
    censoring_features: str = "linear"
    treatment_features: str = "linear"
    censoring_clip: float = 0.01
    propensity_clip: tuple[float, float] = (0.01, 0.99)
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        for name in NUISANCE_NAMES:
            f = getattr(self, f"{name}_features")
            if f not in FEATURE_MAPS:
                raise BadConfig(f"unknown feature map {f!r} for {name} model")
        if not 0 < self.censoring_clip < 1:
            raise BadConfig("censoring_clip must lie in (0, 1)")
        lo, hi = self.propensity_clip
        if not 0 < lo < hi < 1:
            raise BadConfig("propensity_clip must satisfy 0 < lo < hi < 1")


def misspecify(config: NuisanceConfig, which: Iterable[str]) -> NuisanceConfig:
    """Interaction designs for every model except those in ``which``.

    Flagged models only see ``X`` and its squares; the others see ``X`` and
    the full set of squares and pairwise products.
    """
    which = set(which)
    unknown = which - set(NUISANCE_NAMES)
    if unknown:
        raise BadConfig(f"unknown nuisance names {sorted(unknown)}")
    kw = {f"{name}_features": ("main" if name in which else "interactions") for name in NUISANCE_NAMES}
    return replace(config, **kw)


@dataclass(frozen=True)
class NuisanceSet:
    """Prediction handles for ``e``, ``G``, ``S``, ``mu`` and ``Q_S``.

    Any of ``propensity``, ``censoring``, ``survival`` may be ``None`` when
    the corresponding model was not requested. ``outcome_mean`` is the law
    integrated to produce ``mu``; it defaults to ``survival`` but can be set
    independently so that ``mu`` and ``S`` belong to different robustness
    pairs. ``survival_pooled`` holds the single-model (S-learner) law.
    ``tags`` records where each handle came from: fitted, oracle or constant.
    """

    tau: float
    propensity: Optional[Callable[[np.ndarray], np.ndarray]] = None
    censoring: object = None
    survival: object = None
    outcome_mean: object = None
    survival_pooled: object = None
    censoring_clip: float = 0.01
    propensity_clip: tuple[float, float] = (0.01, 0.99)
    tags: dict = field(default_factory=dict, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)
    memo: dict = field(default_factory=dict, compare=False, repr=False)

    def has(self, name: str) -> bool:
        attr = {"e": "propensity", "G": "censoring", "S": "survival", "mu": "_mu_law",
                "S_pooled": "survival_pooled"}[name]
        return getattr(self, attr) is not None

    @property
    def _mu_law(self):
        return self.outcome_mean if self.outcome_mean is not None else self.survival

    def _need(self, obj, what: str):
        if obj is None:
            raise MissingNuisance(f"nuisance set has no {what} model")
        return obj

    def e_hat(self, X: np.ndarray) -> np.ndarray:
        lo, hi = self.propensity_clip
        return np.clip(self._need(self.propensity, "propensity")(X), lo, hi)

    def G_hat(self, t, X: np.ndarray, a: int) -> np.ndarray:
        """Clipped left limit ``max(P(C >= t | x, a), eps)``."""
        law = self._need(self.censoring, "censoring")
        return np.maximum(law.left_limit(np.asarray(t, dtype=float), X, a), self.censoring_clip)

    def S_hat(self, t, X: np.ndarray, a: int) -> np.ndarray:
        return self._need(self.survival, "outcome").survival(np.asarray(t, dtype=float), X, a)

    def cached(self, tag: str, objs: tuple, compute: Callable):
        """Memoize ``compute()`` on the identity of ``objs``.

        Keys hold the objects themselves, so ids cannot be recycled while an
        entry is alive; the memo may therefore be shared between sets built
        on the same fitted laws. Only read-only arrays should be passed.
        """
        slot = (tag, *map(id, objs))
        hit = self.memo.get(slot)
        if hit is not None and all(h is o for h, o in zip(hit[0], objs)):
            return hit[1]
        val = compute()
        self.memo[slot] = (objs, val)
        return val

    def _memo_rmst(self, key: str, law, X: np.ndarray, a: int) -> np.ndarray:
        if X.flags.writeable:
            return conditional_rmst(law, X, a, self.tau)
        val = self.cached(f"{key}:{int(a)}:{self.tau!r}", (law, X), lambda: conditional_rmst(law, X, a, self.tau))
        val.setflags(write=False)
        return val

    def mu_hat(self, X: np.ndarray, a: int) -> np.ndarray:
        return self._memo_rmst("mu", self._need(self._mu_law, "outcome"), X, a)

    def mu_pooled_hat(self, X: np.ndarray, a: int) -> np.ndarray:
        return self._memo_rmst("mu_pooled", self._need(self.survival_pooled, "pooled outcome"), X, a)

    def Q_hat(self, t, X: np.ndarray, a: int) -> tuple[np.ndarray, int]:
        return q_s(self._need(self.survival, "outcome"), t, X, a, self.tau)


NEEDS = ("e", "G", "S", "S_pooled")


def fit_nuisances(
    rd: RestrictedDataset,
    config: NuisanceConfig | None = None,
    need: Iterable[str] = NEEDS,
) -> NuisanceSet:
    """Fit the requested nuisance models on ``rd``.

    ``need`` is a subset of ``{"e", "G", "S", "S_pooled"}``. Outcome and
    censoring models are Cox fits on each arm separately; ``S_pooled`` is a
    single Cox fit with treatment as an extra covariate. Fits use the
    unrestricted observations.
    """
    config = config or NuisanceConfig()
    need = set(need)
    unknown = need - set(NEEDS)
    if unknown:
        raise BadConfig(f"unknown nuisance requests {sorted(unknown)}")
    d = rd.base
    kw = dict(tol=config.tol, max_iter=config.max_iter)
    out: dict = {"tags": {}, "diagnostics": {}}
    if "e" in need:
        pm = fit_logistic(d, features=config.treatment_features, clip=config.propensity_clip, **kw)
        out["propensity"] = pm
        out["tags"]["e"] = "fitted"
        out["diagnostics"]["propensity_clipped"] = pm.diagnostics.get("clipped", 0)
    if "G" in need:
        models = {a: fit_cox(d, "censoring", f"arm{a}", config.censoring_features, **kw) for a in (0, 1)}
        out["censoring"] = CoxCurve(models)
        out["tags"]["G"] = "fitted"
    if "S" in need:
        models = {a: fit_cox(d, "event", f"arm{a}", config.outcome_features, **kw) for a in (0, 1)}
        out["survival"] = CoxCurve(models)
        out["tags"]["S"] = "fitted"
    if "S_pooled" in need:
        m = fit_cox(d, "event", "pooled_with_treatment_covariate", config.outcome_features, **kw)
        out["survival_pooled"] = CoxCurve({0: m, 1: m})
        out["tags"]["S_pooled"] = "fitted"
    return NuisanceSet(
        tau=rd.tau,
        censoring_clip=config.censoring_clip,
        propensity_clip=config.propensity_clip,
        **out,
    )


def make_oracle_nuisances(dgp, tau: float, censoring_clip: float = 0.01,
                          propensity_clip: tuple[float, float] = (0.01, 0.99)) -> NuisanceSet:
    """Closed-form nuisances implied by a built-in generator.

    ``dgp`` must expose ``event_rate``, ``censoring_rate``, ``propensity``
    and ``shift`` (see :class:`causal_rmst.simulation.DGPConfig`).
    """
    from ..simulation import DGPConfig  # local import: simulation depends on this module

    if not isinstance(dgp, DGPConfig):
        raise UnsupportedDGP(f"no oracle nuisances for {type(dgp).__name__}")
    S = ExponentialShiftCurve(dgp.event_rate, {0: 0.0, 1: float(dgp.shift)})
    G = ExponentialShiftCurve(dgp.censoring_rate, {0: 0.0, 1: 0.0})
    tags = {"e": "oracle", "G": "oracle", "S": "oracle", "S_pooled": "oracle"}
    return NuisanceSet(tau=float(tau), propensity=dgp.propensity, censoring=G, survival=S,
                       survival_pooled=S, censoring_clip=censoring_clip,
                       propensity_clip=propensity_clip, tags=tags)


def constant_survival(level: float = 0.5) -> ConstantCurve:
    """A deliberately wrong survival or censoring law."""
    return ConstantCurve(level)
