"""Propensity score model: logistic regression fitted by IRLS."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..data import Dataset
from ..errors import EmptyArm, NoConverge, SeparationWarning, Singular
from .features import design


@dataclass(frozen=True)
class PropensityModel:
    intercept: float
    coefficients: np.ndarray
    features: str = "linear"
    clip: tuple[float, float] = (0.01, 0.99)
    diagnostics: dict = field(default_factory=dict, compare=False)

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + design(X, self.features) @ self.coefficients

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        return expit(self.linear_predictor(X))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Clipped probability of treatment."""
        lo, hi = self.clip
        return np.clip(self.predict_raw(X), lo, hi)


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # sum y*eta - log(1 + exp(eta)), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _slack(ll: float) -> float:
    # rounding noise in the log-likelihood near the optimum
    return 1e-12 * max(1.0, abs(ll))


def irls(
    Z: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> tuple[np.ndarray, dict]:
    """Maximise the Bernoulli log-likelihood of ``y`` on the design ``Z``.

    Newton/IRLS iterations with step-halving whenever the log-likelihood
    decreases. Returns the coefficients and a diagnostics dict.
    """
    n, k = Z.shape
    if np.linalg.matrix_rank(Z) < k:
        raise Singular("logistic design matrix is rank deficient")
    beta = np.zeros(k)
    eta = Z @ beta
    ll = _loglik(eta, y)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = Z.T @ (y - p)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            return beta, {"iterations": it - 1, "grad_norm": grad_norm}
        W = p * (1.0 - p)
        H = (Z * W[:, None]).T @ Z
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise Singular("logistic information matrix is singular") from None
        halvings = 0
        while True:
            cand = beta + step
            eta_c = Z @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll - _slack(ll) or halvings >= 30:
                break
            step *= 0.5
            halvings += 1
        if ll_c < ll - _slack(ll):
            # cannot improve further in floating point
            if grad_norm <= 1e-6 * n:
                return beta, {"iterations": it, "grad_norm": grad_norm, "precision_floor": True}
            raise NoConverge("logistic line search failed")
        beta, eta, ll = cand, eta_c, ll_c
    p = expit(eta)
    grad_norm = float(np.max(np.abs(Z.T @ (y - p))))
    if grad_norm <= max(tol, 1e-6 * n):
        return beta, {"iterations": max_iter, "grad_norm": grad_norm, "precision_floor": grad_norm > tol}
    raise NoConverge(f"IRLS did not converge in {max_iter} iterations (|grad|={grad_norm:.3g})")


def fit_logistic(
    d: Dataset,
    features: str = "linear",
    clip: tuple[float, float] = (0.01, 0.99),
    tol: float = 1e-8,
    max_iter: int = 100,
) -> PropensityModel:
    """Fit ``P(A=1 | X)`` by maximum likelihood.

    A :class:`~causal_rmst.errors.SeparationWarning` is emitted when more than
    90% of one arm has a fitted probability pinned at a clip bound.
    """
    n0, n1 = d.arm_sizes()
    if n0 == 0 or n1 == 0:
        raise EmptyArm("propensity model needs both arms")
    F = design(d.X, features)
    Z = np.hstack([np.ones((d.n, 1)), F])
    y = d.a.astype(float)
    beta, diag = irls(Z, y, tol=tol, max_iter=max_iter)
    model = PropensityModel(float(beta[0]), beta[1:].copy(), features, clip, diag)

    raw = model.predict_raw(d.X)
    lo, hi = clip
    pinned = (raw <= lo) | (raw >= hi)
    for arm in (0, 1):
        frac = float(pinned[d.a == arm].mean())
        if frac > 0.9:
            diag["separation"] = True
            warnings.warn(
                f"{frac:.0%} of arm {arm} has propensity at the clip bounds", SeparationWarning, stacklevel=2
            )
    diag["clipped"] = int(pinned.sum())
    return model
