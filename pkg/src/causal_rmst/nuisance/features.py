"""Covariate designs used by the nuisance models."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import BadConfig, DimensionMismatch


def _pairs(p: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(p, 1)


def interaction_terms(X: np.ndarray) -> np.ndarray:
    """Squares followed by pairwise products (x1x2, x1x3, ..., x(p-1)xp)."""
    X = np.asarray(X, dtype=float)
    i, j = _pairs(X.shape[1])
    return np.hstack([X**2, X[:, i] * X[:, j]])


def _linear(X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=float)


def _interactions(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, interaction_terms(X)])


def _main(X: np.ndarray) -> np.ndarray:
    # X plus the squared terms only; drops the pairwise products.
    return np.hstack([X, X**2])


FEATURE_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "linear": _linear,
    "interactions": _interactions,
    "main": _main,
}


def design(X: np.ndarray, features: str) -> np.ndarray:
    try:
        fn = FEATURE_MAPS[features]
    except KeyError:
        raise BadConfig(f"unknown feature map {features!r}; choose from {sorted(FEATURE_MAPS)}") from None
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch("covariates must be a 2-d array")
    return fn(X)
