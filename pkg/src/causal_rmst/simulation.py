"""Synthetic designs, Monte Carlo ground truths and the replication benchmark."""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset, restrict
from .errors import BadConfig, MissingNuisance, RMSTError, UnsupportedDGP
from .estimators import EstimatorSpec, estimate, fit_requirements
from .nuisance.features import interaction_terms
from .nuisance.nuisance_set import NuisanceConfig, NuisanceSet, fit_nuisances, misspecify

log = logging.getLogger(__name__)

KINDS = ("rct_indep", "rct_cond", "obs_indep", "obs_cond", "misspec")


@dataclass(frozen=True)
class DGPConfig:
    """Coefficients of a synthetic design.

    Control times have hazard ``lambda0 * exp(beta0' v)`` and censoring
    ``lambda_c0 * exp(beta_c' v)`` (constant if ``beta_c`` is None), where
    ``v`` is ``X`` for ``design="linear"`` and the squares and pairwise
    products of ``X`` for ``design="interactions"``. Treated times are control
    times plus ``shift``, so the treated arm is not a Cox model in ``(X, A)``.
    Treatment is Bernoulli(``propensity_const``) if ``beta_a`` is None and
    logistic in ``v`` otherwise.
    """

    kind: str
    mu: tuple[float, ...]
    lambda0: float
    beta0: tuple[float, ...]
    lambda_c0: float
    shift: float
    tau: float
    beta_c: Optional[tuple[float, ...]] = None
    beta_a: Optional[tuple[float, ...]] = None
    sigma: Optional[tuple[tuple[float, ...], ...]] = None
    design: str = "linear"
    propensity_const: float = 0.5
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadConfig(f"unknown DGP kind {self.kind!r}")
        if self.design not in ("linear", "interactions"):
            raise BadConfig(f"unknown design {self.design!r}")
        p = len(self.mu)
        q = p if self.design == "linear" else p * (p + 1) // 2
        for name in ("beta0", "beta_c", "beta_a"):
            b = getattr(self, name)
            if b is not None and len(b) != q:
                raise BadConfig(f"{name} has length {len(b)}, expected {q}")
        if self.sigma is not None and np.shape(self.sigma) != (p, p):
            raise BadConfig(f"sigma must be {p}x{p}")
        if self.lambda0 <= 0 or self.lambda_c0 <= 0 or self.tau <= 0:
            raise BadConfig("rates and tau must be positive")
        if not 0 < self.propensity_const < 1:
            raise BadConfig("propensity_const must lie in (0, 1)")

    @property
    def p(self) -> int:
        return len(self.mu)

    def features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X if self.design == "linear" else interaction_terms(X)

    def event_rate(self, X: np.ndarray) -> np.ndarray:
        return self.lambda0 * np.exp(self.features(X) @ np.asarray(self.beta0))

    def censoring_rate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.beta_c is None:
            return np.full(X.shape[0], self.lambda_c0)
        return self.lambda_c0 * np.exp(self.features(X) @ np.asarray(self.beta_c))

    def propensity(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.beta_a is None:
            return np.full(X.shape[0], self.propensity_const)
        return expit(self.features(X) @ np.asarray(self.beta_a))

    def sample_covariates(self, rng: np.random.Generator, n: int) -> np.ndarray:
        mu = np.asarray(self.mu, dtype=float)
        if self.sigma is None:
            return mu + rng.standard_normal((n, self.p))
        L = np.linalg.cholesky(np.asarray(self.sigma, dtype=float))
        return mu + rng.standard_normal((n, self.p)) @ L.T

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.loads(json.dumps(out))


_LIN = dict(mu=(1.0, 1.0, -1.0, 1.0), lambda0=0.01, beta0=(0.5, 0.5, -0.5, 0.5),
            lambda_c0=0.03, shift=10.0, tau=25.0)
_BETA_C = (0.7, 0.3, -0.25, -0.1)
_BETA_A = (-1.0, -1.0, -2.5, -1.0)

PRESETS: dict[str, DGPConfig] = {
    "rct_indep": DGPConfig("rct_indep", **_LIN),
    "rct_cond": DGPConfig("rct_cond", beta_c=_BETA_C, **_LIN),
    "obs_indep": DGPConfig("obs_indep", beta_a=_BETA_A, **_LIN),
    "obs_cond": DGPConfig("obs_cond", beta_c=_BETA_C, beta_a=_BETA_A, **_LIN),
    "misspec": DGPConfig(
        "misspec",
        mu=(0.1, 0.5, 0.7, 0.4),
        lambda0=1.0,
        beta0=(0.2, 0.3, 0.1, 0.1, 0, 1, 0, 0, 0, -1),
        lambda_c0=1.0,
        beta_c=(0.05, -0.01, 0.05, -0.01, 0, 1, 0, 0, -1, 0),
        beta_a=(0.05, -0.1, 0.5, -0.1, -1, 0, -1, 0, 0, 0),
        shift=0.3,
        tau=1.0,
        design="interactions",
    ),
}

# Nuisance designs matching each preset when every model is well specified.
PRESET_FEATURES = {k: ("interactions" if v.design == "interactions" else "linear") for k, v in PRESETS.items()}


def preset(name: str, **overrides) -> DGPConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise UnsupportedDGP(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if overrides:
        overrides = {k: (tuple(v) if isinstance(v, list) else v) for k, v in overrides.items()}
        try:
            cfg = replace(cfg, **overrides)
        except TypeError as exc:
            raise BadConfig(str(exc)) from None
    return cfg


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Observed data plus the latent potential and censoring times."""

    data: Dataset
    T0: np.ndarray
    T1: np.ndarray
    C: np.ndarray
    config: DGPConfig

    @property
    def T(self) -> np.ndarray:
        return np.where(self.data.a == 1, self.T1, self.T0)


def _draw_latent(cfg: DGPConfig, rng: np.random.Generator, n: int):
    X = cfg.sample_covariates(rng, n)
    # inverse transform of exponential laws with subject-specific rates
    T0 = -np.log(rng.random(n)) / cfg.event_rate(X)
    C = -np.log(rng.random(n)) / cfg.censoring_rate(X)
    A = (rng.random(n) < cfg.propensity(X)).astype(np.int8)
    return X, T0, T0 + cfg.shift, C, A


def generate(cfg: DGPConfig, n: int | None = None, seed: Any = None) -> SyntheticDataset:
    """Draw ``n`` subjects (defaults to ``cfg.n`` and ``cfg.seed``)."""
    n = cfg.n if n is None else int(n)
    if n <= 0:
        raise BadConfig("n must be positive")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    X, T0, T1, C, A = _draw_latent(cfg, rng, n)
    T = np.where(A == 1, T1, T0)
    time = np.minimum(T, C)
    status = (T <= C).astype(np.int8)
    data = Dataset.from_arrays(X, A, time, status, require_both_arms=False)
    return SyntheticDataset(data, T0, T1, C, cfg)


def true_rmst(cfg: DGPConfig, tau: float | None = None, M: int = 1_000_000, seed: Any = 0,
              chunk: int = 250_000) -> tuple[float, float]:
    """Monte Carlo mean of ``min(T1, tau) - min(T0, tau)`` and its standard error."""
    tau = cfg.tau if tau is None else float(tau)
    if M < 10_000:
        raise BadConfig("use at least 1e4 Monte Carlo draws")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < M:
        m = min(chunk, M - done)
        X = cfg.sample_covariates(rng, m)
        T0 = -np.log(rng.random(m)) / cfg.event_rate(X)
        diff = np.minimum(T0 + cfg.shift, tau) - np.minimum(T0, tau)
        total += float(diff.sum())
        total_sq += float(np.sum(diff * diff))
        done += m
    mean = total / M
    var = max(total_sq / M - mean * mean, 0.0) * M / (M - 1)
    return mean, float(np.sqrt(var / M))


def replicate_seed(master: int, scenario: str, n: int, rep: int) -> np.random.SeedSequence:
    """Seed for one replication, independent of the order cells are run in."""
    return np.random.SeedSequence([int(master), zlib.crc32(scenario.encode()), int(n), int(rep)])


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class EstimatorEntry:
    label: str
    spec: EstimatorSpec


@dataclass(frozen=True)
class Scenario:
    name: str
    dgp: DGPConfig
    tau: float
    n_grid: tuple[int, ...]
    reps: int
    estimators: tuple[EstimatorEntry, ...]
    truth: Optional[float] = None


@dataclass(frozen=True)
class Benchmark:
    scenarios: tuple[Scenario, ...]
    master_seed: int = 0
    truth_draws: int = 1_000_000
    threads: int = 1


@dataclass
class ReplicationResults:
    """Per-replication estimates and per-cell summaries."""

    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    censoring: list[dict] = field(default_factory=list)

    def cell(self, scenario: str, estimator: str, n: int) -> dict:
        for r in self.summary:
            if r["scenario"] == scenario and r["estimator"] == estimator and r["n"] == n:
                return r
        raise KeyError((scenario, estimator, n))

    def thetas(self, scenario: str, estimator: str, n: int) -> np.ndarray:
        return np.array([r["theta"] for r in self.rows
                         if r["scenario"] == scenario and r["estimator"] == estimator and r["n"] == n])


def _entry_from_json(obj: Any, default_features: str) -> EstimatorEntry:
    if isinstance(obj, str):
        obj = {"method": obj}
    if not isinstance(obj, dict) or "method" not in obj:
        raise BadConfig(f"estimator entry must name a method: {obj!r}")
    feats = obj.get("features", default_features)
    base = NuisanceConfig(outcome_features=feats, censoring_features=feats, treatment_features=feats)
    if "misspecify" in obj:
        base = misspecify(base, obj["misspecify"])
    for key in ("censoring_clip", "propensity_clip"):
        if key in obj:
            val = tuple(obj[key]) if key == "propensity_clip" else float(obj[key])
            base = replace(base, **{key: val})
    spec = EstimatorSpec(obj["method"], obj.get("normalization", "standard"), base)
    label = obj.get("label") or spec.method + ("_hajek" if spec.normalization == "hajek" else "")
    return EstimatorEntry(label, spec)


def load_benchmark(source: str | Path | dict) -> Benchmark:
    """Parse a benchmark document.

    ``{"master_seed": 1, "truth_draws": 1000000, "scenarios": [{"name": ...,
    "preset": "rct_indep", "tau": 25, "n": [500, 4000], "reps": 100,
    "estimators": ["km", {"method": "aiptw_aipcw", "misspecify": ["treatment"]}]}]}``
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfig(f"cannot read benchmark config: {exc}") from None
    else:
        doc = source
    if not isinstance(doc, dict):
        raise BadConfig("benchmark config must be a JSON object")
    scen = doc.get("scenarios")
    if not scen:
        raise BadConfig("benchmark config lists no scenarios")
    out = []
    for s in scen:
        try:
            name = s.get("name") or s["preset"]
            dgp = preset(s["preset"], **s.get("overrides", {}))
            tau = float(s.get("tau", dgp.tau))
            n_grid = tuple(int(v) for v in np.atleast_1d(s["n"]))
            reps = int(s.get("reps", 100))
            default_features = s.get("features", PRESET_FEATURES[s["preset"]])
            ests = tuple(_entry_from_json(e, default_features) for e in s["estimators"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, RMSTError):
                raise
            raise BadConfig(f"invalid scenario {s!r}: {exc}") from None
        if not ests or not n_grid or reps <= 0 or min(n_grid) <= 0:
            raise BadConfig(f"scenario {name!r} needs estimators, a positive n grid and reps")
        labels = [e.label for e in ests]
        if len(set(labels)) != len(labels):
            raise BadConfig(f"duplicate estimator labels in scenario {name!r}")
        out.append(Scenario(name, dgp, tau, n_grid, reps, ests, s.get("truth")))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise BadConfig("scenario names must be unique")
    return Benchmark(tuple(out), int(doc.get("master_seed", 0)), int(doc.get("truth_draws", 1_000_000)),
                     int(doc.get("threads", 1)))


_FEATURE_OF = {"e": "treatment_features", "G": "censoring_features", "S": "outcome_features",
               "S_pooled": "outcome_features"}


def fit_available(rd, config: NuisanceConfig, need: Iterable[str],
                  cache: dict | None = None) -> tuple[NuisanceSet, dict]:
    """Fit each requested nuisance on its own so one failure only disables its users.

    ``cache`` (keyed by nuisance name, feature map and solver settings) lets
    several configurations on the same data share identical fits.
    """
    cache = {} if cache is None else cache
    memo = cache.setdefault("memo", {})
    parts: dict = {}
    errors: dict = {}
    for k in sorted(set(need)):
        key = (k, getattr(config, _FEATURE_OF[k]), config.propensity_clip if k == "e" else None,
               config.tol, config.max_iter)
        if key not in cache:
            try:
                cache[key] = fit_nuisances(rd, config, {k})
            except RMSTError as exc:
                cache[key] = f"{type(exc).__name__}: {exc}"
        if isinstance(cache[key], str):
            errors[k] = cache[key]
        else:
            parts[k] = cache[key]
    pick = lambda k, attr: getattr(parts[k], attr) if k in parts else None  # noqa: E731
    tags = {k: "fitted" for k in parts}
    diag = {}
    if "e" in parts:
        diag.update(parts["e"].diagnostics)
    ns = NuisanceSet(
        tau=rd.tau,
        propensity=pick("e", "propensity"),
        censoring=pick("G", "censoring"),
        survival=pick("S", "survival"),
        survival_pooled=pick("S_pooled", "survival_pooled"),
        censoring_clip=config.censoring_clip,
        propensity_clip=config.propensity_clip,
        tags=tags,
        diagnostics=diag,
        memo=memo,
    )
    return ns, errors


def run_replication(scenario: Scenario, n: int, rep: int, master_seed: int) -> tuple[list[dict], float]:
    """All estimators of ``scenario`` on one simulated dataset.

    Returns one row per estimator (``theta`` is None on failure) and the
    realized censoring fraction before the horizon.
    """
    sd = generate(scenario.dgp, n, replicate_seed(master_seed, scenario.name, n, rep))
    rows = []
    try:
        rd = restrict(sd.data, scenario.tau)
    except RMSTError as exc:  # pragma: no cover - tau validated at load time
        return [dict(estimator=e.label, theta=None, error=str(exc)) for e in scenario.estimators], float("nan")
    cens_frac = float(np.mean(rd.restricted_status == 0))
    groups: dict[NuisanceConfig, list[EstimatorEntry]] = {}
    for e in scenario.estimators:
        groups.setdefault(e.spec.nuisance_config, []).append(e)
    results: dict[str, dict] = {}
    arms_ok = 0 < int(rd.a.sum()) < rd.n
    cache: dict = {}
    for config, entries in groups.items():
        need = set().union(*(fit_requirements(e.spec.method) for e in entries))
        ns, errors = fit_available(rd, config, need, cache) if (need and arms_ok) else (None, {})
        for e in entries:
            try:
                if not arms_ok:
                    raise MissingNuisance("a treatment arm is empty")
                est = estimate(rd, e.spec, ns if e.spec.requires else None)
                results[e.label] = dict(estimator=e.label, theta=est.theta)
            except (RMSTError, ArithmeticError) as exc:
                msg = "; ".join(errors.values()) or str(exc)
                results[e.label] = dict(estimator=e.label, theta=None, error=msg)
    rows = [results[e.label] for e in scenario.estimators]
    return rows, cens_frac


def _task(args):
    scenario, n, rep, master = args
    return run_replication(scenario, n, rep, master)


def _truth_for(scenario: Scenario, bench: Benchmark, cache: dict) -> float:
    if scenario.truth is not None:
        return float(scenario.truth)
    cfg = scenario.dgp
    key = (cfg.mu, cfg.sigma, cfg.lambda0, cfg.beta0, cfg.shift, cfg.design, scenario.tau, bench.truth_draws)
    if key not in cache:
        seed = replicate_seed(bench.master_seed, "truth", 0, 0)
        cache[key] = true_rmst(cfg, scenario.tau, bench.truth_draws, seed=seed)[0]
    return cache[key]


def run_benchmark(bench: Benchmark | dict | str | Path, threads: int | None = None,
                  progress: bool = False) -> ReplicationResults:
    """Run every (scenario, n, replication) cell and summarize each estimator.

    Results only depend on ``master_seed``: each replication draws from its
    own seed and results are reduced in index order.
    """
    if not isinstance(bench, Benchmark):
        bench = load_benchmark(bench)
    threads = bench.threads if threads is None else threads
    tasks = [(s, n, r, bench.master_seed) for s in bench.scenarios for n in s.n_grid for r in range(s.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(_task, tasks, chunksize=4))
    else:
        outputs = []
        for i, t in enumerate(tasks):
            outputs.append(_task(t))
            if progress and (i + 1) % 50 == 0:
                print(f"[benchmark] {i + 1}/{len(tasks)} replications", file=sys.stderr)

    res = ReplicationResults()
    truth_cache: dict = {}
    by_cell: dict = {}
    cens: dict = {}
    for (s, n, rep, _), (rows, frac) in zip(tasks, outputs):
        cens.setdefault((s.name, n), []).append(frac)
        for row in rows:
            by_cell.setdefault((s.name, row["estimator"], n), []).append(row["theta"])
            if row["theta"] is not None:
                res.rows.append(dict(scenario=s.name, estimator=row["estimator"], n=n, rep=rep, theta=row["theta"]))
    for s in bench.scenarios:
        truth = _truth_for(s, bench, truth_cache)
        for n in s.n_grid:
            fr = np.array(cens[(s.name, n)])
            res.censoring.append(dict(scenario=s.name, n=n, censored_fraction=float(np.nanmean(fr))))
            for e in s.estimators:
                vals = by_cell[(s.name, e.label, n)]
                ok = np.array([v for v in vals if v is not None], dtype=float)
                mean = float(ok.mean()) if ok.size else None
                sd = float(ok.std(ddof=1)) if ok.size > 1 else None
                res.summary.append(dict(
                    scenario=s.name, estimator=e.label, n=n, mean=mean, sd=sd,
                    bias=None if mean is None else mean - truth, truth=truth,
                    failures=len(vals) - ok.size,
                ))
    for c in res.censoring:
        log.info("scenario %s n=%d: censored before tau %.3f", c["scenario"], c["n"], c["censored_fraction"])
    return res


REP_COLUMNS = ("scenario", "estimator", "n", "rep", "theta")
SUMMARY_COLUMNS = ("scenario", "estimator", "n", "mean", "sd", "bias", "truth", "failures")


def _cell(v) -> str:
    # failed cells are left empty rather than written as NaN
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ""
    return str(v)


def _csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def results_csv(res: ReplicationResults) -> tuple[str, str]:
    """Per-replication and summary CSV documents."""
    return _csv_text(res.rows, REP_COLUMNS), _csv_text(res.summary, SUMMARY_COLUMNS)


def write_results(res: ReplicationResults, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reps, summary = results_csv(res)
    p1, p2 = out / "replicates.csv", out / "summary.csv"
    p1.write_text(reps)
    p2.write_text(summary)
    return p1, p2
