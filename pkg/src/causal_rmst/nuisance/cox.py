"""Cox proportional hazards with Breslow ties and Breslow baseline hazard."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..data import Dataset
from ..errors import BadConfig, MonotoneLikelihoodWarning, NoConverge, NoEvents, Singular
from .features import design

Target = Literal["event", "censoring"]
Stratum = Literal["arm0", "arm1", "pooled", "pooled_with_treatment_covariate"]

MONOTONE_NORM = 50.0


@dataclass(frozen=True)
class CoxModel:
    """A fitted Cox model.

    ``baseline_times`` are the distinct target-event times and
    ``baseline_cumhaz`` the Breslow cumulative hazard just after each of them,
    for covariates centred at ``center``.
    """

    coefficients: np.ndarray
    center: np.ndarray
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    stratum: str = "pooled"
    target: str = "event"
    features: str = "linear"
    diagnostics: dict = field(default_factory=dict, compare=False)

    def model_design(self, X: np.ndarray, a: np.ndarray | int | None = None) -> np.ndarray:
        Z = design(np.atleast_2d(X), self.features)
        if self.stratum == "pooled_with_treatment_covariate":
            a_col = np.broadcast_to(np.asarray(a, dtype=float), (Z.shape[0],)).reshape(-1, 1)
            Z = np.hstack([Z, a_col])
        return Z

    def risk(self, X: np.ndarray, a: np.ndarray | int | None = None) -> np.ndarray:
        """Relative risk ``exp(beta'(z - center))`` for each row."""
        Z = self.model_design(X, a)
        return np.exp((Z - self.center) @ self.coefficients)

    def cumhaz(self, t: np.ndarray, left: bool = False) -> np.ndarray:
        """Baseline cumulative hazard at ``t`` (or just before ``t`` if ``left``)."""
        side = "left" if left else "right"
        idx = np.searchsorted(self.baseline_times, t, side=side)
        ext = np.concatenate([[0.0], self.baseline_cumhaz])
        return ext[idx]

    def predict_survival(self, x: np.ndarray, t: float | np.ndarray, a: int | None = None) -> np.ndarray:
        """``exp(-Lambda0(t) exp(beta'x))``; right-continuous, constant after the last event."""
        r = self.risk(np.atleast_2d(x), a)
        return np.exp(-np.multiply.outer(r, self.cumhaz(np.asarray(t, dtype=float)))).squeeze()


@dataclass
class _Sorted:
    Z: np.ndarray        # (n, k) centred design, sorted by time
    first: np.ndarray    # index of first subject of each distinct time
    d: np.ndarray        # number of events at each distinct time
    zsum: np.ndarray     # sum of Z over the events at each distinct time
    times: np.ndarray    # distinct times


def _prepare(Z: np.ndarray, time: np.ndarray, event: np.ndarray) -> _Sorted:
    order = np.argsort(time, kind="stable")
    ts = time[order]
    Zs = Z[order]
    es = event[order].astype(float)
    times, first, inv = np.unique(ts, return_index=True, return_inverse=True)
    d = np.bincount(inv, weights=es, minlength=times.size)
    zsum = np.zeros((times.size, Z.shape[1]))
    np.add.at(zsum, inv[es > 0], Zs[es > 0])
    keep = d > 0
    return _Sorted(Zs, first[keep], d[keep], zsum[keep], times[keep])


def _rev_cumsum(x: np.ndarray) -> np.ndarray:
    return np.cumsum(x[::-1], axis=0)[::-1]


def _slack(ll: float) -> float:
    # rounding noise in the log-likelihood near the optimum
    return 1e-12 * max(1.0, abs(ll))


def partial_loglik(beta: np.ndarray, s: _Sorted, with_derivatives: bool = True):
    """Breslow partial log-likelihood, score and Hessian at ``beta``."""
    eta = s.Z @ beta
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    S0 = _rev_cumsum(w)[s.first]
    ll = float(np.sum(s.zsum @ beta) - np.sum(s.d * (np.log(S0) + shift)))
    if not with_derivatives:
        return ll
    wZ = w[:, None] * s.Z
    S1 = _rev_cumsum(wZ)[s.first]
    m = S1 / S0[:, None]
    grad = np.sum(s.zsum - s.d[:, None] * m, axis=0)
    S2 = _rev_cumsum(wZ[:, :, None] * s.Z[:, None, :])[s.first]
    info = np.einsum("j,jab->ab", s.d, S2 / S0[:, None, None] - m[:, :, None] * m[:, None, :])
    return ll, grad, -info


def newton_cox(
    Z: np.ndarray,
    time: np.ndarray,
    event: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> tuple[np.ndarray, dict]:
    """Newton-Raphson with step-halving on the Breslow partial likelihood.

    ``Z`` must already be centred. Returns coefficients and diagnostics.
    """
    s = _prepare(Z, time, event)
    k = Z.shape[1]
    beta = np.zeros(k)
    if k == 0:
        return beta, {"iterations": 0, "grad_norm": 0.0}
    ll, grad, hess = partial_loglik(beta, s)
    diag: dict = {}
    for it in range(1, max_iter + 1):
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            diag.update(iterations=it - 1, grad_norm=grad_norm)
            return beta, diag
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise Singular("Cox information matrix is singular") from None
        halvings = 0
        while True:
            cand = beta + step
            ll_c = partial_loglik(cand, s, with_derivatives=False)
            if ll_c >= ll - _slack(ll) or halvings >= 30:
                break
            step *= 0.5
            halvings += 1
        if ll_c < ll - _slack(ll):
            if grad_norm <= 1e-6 * Z.shape[0]:
                diag.update(iterations=it, grad_norm=grad_norm, precision_floor=True)
                return beta, diag
            raise NoConverge("Cox line search failed")
        beta = cand
        ll, grad, hess = partial_loglik(beta, s)
        if np.linalg.norm(beta) > MONOTONE_NORM:
            diag.update(iterations=it, grad_norm=float(np.max(np.abs(grad))), monotone=True)
            warnings.warn("Cox coefficients diverge (monotone likelihood); returning partial fit",
                          MonotoneLikelihoodWarning, stacklevel=3)
            return beta, diag
    grad_norm = float(np.max(np.abs(grad)))
    if grad_norm <= 1e-6 * Z.shape[0]:
        diag.update(iterations=max_iter, grad_norm=grad_norm, precision_floor=grad_norm > tol)
        return beta, diag
    raise NoConverge(f"Cox Newton did not converge in {max_iter} iterations (|grad|={grad_norm:.3g})")


def breslow_baseline(Zc: np.ndarray, beta: np.ndarray, time: np.ndarray, event: np.ndarray):
    """Distinct event times and Breslow cumulative baseline hazard after each."""
    s = _prepare(Zc, time, event)
    eta = s.Z @ beta
    S0 = _rev_cumsum(np.exp(eta))[s.first]
    return s.times, np.cumsum(s.d / S0)


def fit_cox(
    d: Dataset,
    target: Target = "event",
    stratum: Stratum = "pooled",
    features: str = "linear",
    tol: float = 1e-8,
    max_iter: int = 100,
) -> CoxModel:
    """Fit a Cox model on one arm, or on both arms with treatment as a covariate.

    ``target="censoring"`` fits the hazard of censoring, i.e. uses ``1 - status``
    as the event indicator.
    """
    if target not in ("event", "censoring"):
        raise BadConfig(f"unknown Cox target {target!r}")
    if stratum == "arm0":
        rows = d.a == 0
    elif stratum == "arm1":
        rows = d.a == 1
    elif stratum in ("pooled", "pooled_with_treatment_covariate"):
        rows = np.ones(d.n, dtype=bool)
    else:
        raise BadConfig(f"unknown Cox stratum {stratum!r}")

    time = d.time[rows]
    event = d.status[rows] if target == "event" else 1 - d.status[rows]
    if not np.any(event == 1):
        raise NoEvents(f"no {target} events in stratum {stratum}")

    Z = design(d.X[rows], features)
    if stratum == "pooled_with_treatment_covariate":
        Z = np.hstack([Z, d.a[rows].astype(float)[:, None]])
    center = Z.mean(axis=0) if Z.shape[0] else np.zeros(Z.shape[1])
    Zc = Z - center

    # Constant columns are absorbed by the baseline hazard: coefficient 0.
    varying = np.ptp(Zc, axis=0) > 0 if Zc.shape[0] else np.zeros(Z.shape[1], bool)
    Zv = Zc[:, varying]
    if Zv.shape[1] and np.linalg.matrix_rank(Zv) < Zv.shape[1]:
        raise Singular("Cox design matrix is rank deficient")
    beta_v, diag = newton_cox(Zv, time, event.astype(float), tol=tol, max_iter=max_iter)
    beta = np.zeros(Z.shape[1])
    beta[varying] = beta_v
    if not np.all(varying):
        diag["constant_columns"] = np.flatnonzero(~varying).tolist()

    times, cumhaz = breslow_baseline(Zc, beta, time, event)
    diag["n"] = int(rows.sum())
    diag["events"] = int(event.sum())
    return CoxModel(beta, center, times, cumhaz, stratum, target, features, diag)
