"""Weighted product-limit curves: unit, IPCW, IPTW and IPTW-IPCW Kaplan-Meier."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .data import RestrictedDataset
from .errors import BadConfig, EmptyArm, UnsupportedWeightMode
from .nuisance.curves import chunk_rows

WeightMode = Literal["unit", "ipcw", "iptw", "iptw_ipcw"]
WEIGHT_MODES = ("unit", "ipcw", "iptw", "iptw_ipcw")

# Share of [0, tau] covered by constant extension before a diagnostic is raised.
EXTENSION_WARN_FRACTION = 0.10


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous nonincreasing step function with value 1 before the first jump.

    ``values[k]`` holds on ``[jump_times[k], jump_times[k+1])``; the last value
    extends to infinity.
    """

    jump_times: np.ndarray
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if jt.shape != v.shape:
            raise ValueError("jump_times and values must have the same length")
        if jt.size > 1 and np.any(np.diff(jt) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", v)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right")
        ext = np.concatenate([[1.0], self.values])
        return ext[idx]

    def left_limit(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="left")
        return np.concatenate([[1.0], self.values])[idx]

    def integral(self, tau: float) -> float:
        return rmst_from_curve(self, tau)


@dataclass(frozen=True)
class WeightPlan:
    """Weights entering the product-limit sums.

    Parameters
    ----------
    mode : {"unit", "ipcw", "iptw", "iptw_ipcw"}
    treatment_weights : ndarray of shape (n,), optional
        Per-subject weight ``a/e + (1-a)/(1-e)``; required for the IPTW modes.
    censoring : callable, optional
        ``censoring(t, X, a)`` returning clipped left-limit censoring survival
        for rows of ``X`` on a shared grid ``t`` of shape ``(1, K)``. Required
        for the IPCW modes.
    """

    mode: WeightMode = "unit"
    treatment_weights: Optional[np.ndarray] = None
    censoring: Optional[object] = None

    def __post_init__(self):
        if self.mode not in WEIGHT_MODES:
            raise BadConfig(f"unknown weight mode {self.mode!r}")
        if self.mode in ("iptw", "iptw_ipcw") and self.treatment_weights is None:
            raise BadConfig(f"{self.mode} plan needs treatment weights")
        if self.mode in ("ipcw", "iptw_ipcw") and self.censoring is None:
            raise BadConfig(f"{self.mode} plan needs a censoring handle")
        if self.treatment_weights is not None:
            w = np.asarray(self.treatment_weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise BadConfig("treatment weights must be finite and positive")

    @classmethod
    def unit(cls) -> "WeightPlan":
        return cls("unit")

    @property
    def uses_censoring(self) -> bool:
        return self.mode in ("ipcw", "iptw_ipcw")

    @property
    def uses_treatment(self) -> bool:
        return self.mode in ("iptw", "iptw_ipcw")


def treatment_weights(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    """``a / e + (1 - a) / (1 - e)``."""
    a = np.asarray(a, dtype=float)
    return a / e + (1.0 - a) / (1.0 - e)


def weighted_product_limit(rd: RestrictedDataset, arm: int, plan: WeightPlan | None = None) -> StepSurvival:
    """Product-limit curve of arm ``arm`` under ``plan``.

    The grid is the set of distinct restricted times in the arm. Deaths use
    the restricted status, so follow-up reaching ``tau`` is an event there.
    IPCW modes weight every at-risk subject by ``1 / G(t_k | x_i, a)``.
    Factors with an empty (zero-weight) risk set are skipped and counted in
    ``diagnostics["skipped_factors"]``.
    """
    plan = plan or WeightPlan.unit()
    rows = np.flatnonzero(rd.a == arm)
    if rows.size == 0:
        raise EmptyArm(f"arm {arm} is empty")
    t = rd.restricted_time[rows]
    dt = rd.restricted_status[rows].astype(float)
    w = np.ones(rows.size)
    if plan.uses_treatment:
        w = np.asarray(plan.treatment_weights, dtype=float)[rows]

    grid, inv = np.unique(t, return_inverse=True)
    K = grid.size
    if not plan.uses_censoring:
        D = np.bincount(inv, weights=w * dt, minlength=K)
        N = np.cumsum(np.bincount(inv, weights=w, minlength=K)[::-1])[::-1]
    else:
        X = rd.X[rows]
        D = np.zeros(K)
        N = np.zeros(K)
        order = np.argsort(inv, kind="stable")
        for sl in chunk_rows(rows.size, K):
            sl = order[sl]
            # subject i is at risk on grid points 0..inv[i]; later columns are not needed
            k_max = int(inv[sl].max()) + 1
            G = np.asarray(plan.censoring(grid[None, :k_max], X[sl], arm), dtype=float)
            at_risk = inv[sl, None] >= np.arange(k_max)[None, :]
            N[:k_max] += np.sum(np.where(at_risk, w[sl, None] / G, 0.0), axis=0)
            # deaths: only the subject's own grid point contributes
            own = G[np.arange(sl.size), inv[sl]]
            D += np.bincount(inv[sl], weights=w[sl] * dt[sl] / own, minlength=K)

    skip = N <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = np.where(skip, 1.0, 1.0 - D / np.where(skip, 1.0, N))
    values = np.cumprod(np.clip(factors, 0.0, 1.0))
    diag = {"skipped_factors": int(skip.sum()), "grid_size": int(K)}
    last = float(grid[-1])
    ext = (rd.tau - last) / rd.tau
    if ext > EXTENSION_WARN_FRACTION:
        diag["extension_fraction"] = ext
    return StepSurvival(grid, values, diag)


def rmst_from_curve(s: StepSurvival, tau: float) -> float:
    """Exact area under the step function on ``[0, tau]``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    jt = s.jump_times
    keep = jt < tau
    knots = np.concatenate([[0.0], jt[keep]])
    ends = np.concatenate([jt[keep], [tau]])
    vals = np.concatenate([[1.0], s.values[keep]])
    return float(np.sum(vals * (ends - knots)))


def greenwood_variance(rd: RestrictedDataset, arm: int, plan: WeightPlan | None, t) -> np.ndarray | float:
    """Greenwood variance of the unweighted curve at ``t``.

    Terms with ``N_k == D_k`` (the curve drops to zero) are skipped and a
    warning reports how many were skipped.
    """
    plan = plan or WeightPlan.unit()
    if plan.mode != "unit":
        raise UnsupportedWeightMode("Greenwood variance is only defined for unit weights")
    rows = rd.a == arm
    if not np.any(rows):
        raise EmptyArm(f"arm {arm} is empty")
    times = rd.restricted_time[rows]
    status = rd.restricted_status[rows].astype(float)
    grid, inv = np.unique(times, return_inverse=True)
    D = np.bincount(inv, weights=status, minlength=grid.size)
    N = np.cumsum(np.bincount(inv, minlength=grid.size)[::-1])[::-1].astype(float)
    ok = (N > D) & (D > 0)
    terms = np.zeros(grid.size)
    terms[ok] = D[ok] / (N[ok] * (N[ok] - D[ok]))
    t_arr = np.asarray(t, dtype=float)
    # only skips that enter a requested value are reported
    n_skipped = int(np.sum((N == D) & (D > 0) & (grid <= np.max(t_arr))))
    if n_skipped:
        warnings.warn(f"Greenwood sum skipped {n_skipped} term(s) with N_k = D_k", RuntimeWarning, stacklevel=2)
    cum = np.cumsum(terms)
    S = np.cumprod(1.0 - D / N)
    idx = np.searchsorted(grid, t_arr, side="right")
    S_ext = np.concatenate([[1.0], S])[idx]
    cum_ext = np.concatenate([[0.0], cum])[idx]
    out = S_ext**2 * cum_ext
    return float(out) if out.ndim == 0 else out
