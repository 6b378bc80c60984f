"""Nonparametric bootstrap over subjects with nuisance refits."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import RestrictedDataset, restrict
from .errors import BadConfig, RMSTError, TooManyFailures
from .estimators import EstimatorSpec, estimate


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    se: float
    ci_lower: float
    ci_upper: float
    B: int
    level: float
    n_failed: int
    replicates: np.ndarray

    def to_dict(self) -> dict:
        return {"point": self.point, "se": self.se, "ci": [self.ci_lower, self.ci_upper],
                "B": self.B, "level": self.level, "n_failed": self.n_failed}


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    """Stream for replicate ``b``; independent of execution order."""
    return np.random.default_rng([int(seed), int(b)])


@dataclass(frozen=True)
class _EstimatorStatistic:
    spec: EstimatorSpec

    def __call__(self, rd: RestrictedDataset) -> float:
        return estimate(rd, self.spec).theta


def _one(args) -> float | None:
    rd, statistic, seed, b = args
    rng = replicate_rng(seed, b)
    idx = rng.integers(0, rd.n, rd.n)
    try:
        sub = restrict(rd.base.take(idx), rd.tau)
        return float(statistic(sub))
    except (RMSTError, ArithmeticError):
        return None


def bootstrap_statistic(rd: RestrictedDataset, statistic: Callable[[RestrictedDataset], float], B: int,
                        seed: int, threads: int = 1) -> list[float | None]:
    """Evaluate ``statistic`` on ``B`` subject resamples; failed replicates give ``None``.

    ``statistic`` must be picklable (a module-level function or dataclass
    instance) when ``threads > 1``.
    """
    tasks = [(rd, statistic, seed, b) for b in range(B)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_one, tasks, chunksize=8))
    return [_one(t) for t in tasks]


def bootstrap_replicates(rd: RestrictedDataset, spec: EstimatorSpec, B: int, seed: int,
                         threads: int = 1) -> list[float | None]:
    return bootstrap_statistic(rd, _EstimatorStatistic(spec), B, seed, threads)


def bootstrap_ci(
    rd: RestrictedDataset,
    spec: EstimatorSpec | str,
    B: int = 500,
    level: float = 0.95,
    seed: int = 0,
    threads: int = 1,
    point: float | None = None,
) -> BootstrapResult:
    """Percentile bootstrap interval and standard error for ``spec``.

    Each replicate resamples ``n`` subjects with replacement, refits every
    nuisance and recomputes the estimate. Replicates that raise are dropped
    and counted; more than ``B / 2`` failures raise :class:`TooManyFailures`.
    The interval uses type-7 (linear interpolation) quantiles.
    """
    if isinstance(spec, str):
        spec = EstimatorSpec(spec)
    if int(B) < 2:
        raise BadConfig("B must be at least 2")
    if not 0 < level < 1:
        raise BadConfig("level must lie in (0, 1)")
    if point is None:
        point = estimate(rd, spec).theta
    reps = bootstrap_replicates(rd, spec, int(B), seed, threads)
    vals = np.array([v for v in reps if v is not None], dtype=float)
    n_failed = int(B) - vals.size
    if n_failed > B / 2:
        raise TooManyFailures(f"{n_failed} of {B} bootstrap replicates failed")
    if vals.size < 2:
        raise TooManyFailures("fewer than two successful bootstrap replicates")
    se = 0.0 if np.all(vals == vals[0]) else float(np.std(vals, ddof=1))
    alpha = 1.0 - level
    lo, hi = np.quantile(vals, [alpha / 2, 1 - alpha / 2], method="linear")
    return BootstrapResult(float(point), se, float(lo), float(hi), int(B), float(level), n_failed, vals)
