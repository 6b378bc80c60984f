"""Censoring-unbiased pseudo-outcomes: IPCW, Buckley-James, doubly and quadruply robust."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import RestrictedDataset
from .nuisance.curves import chunk_rows
from .nuisance.nuisance_set import NuisanceSet


@dataclass(frozen=True)
class PseudoOutcomes:
    """One transformed value per subject.

    ``flags`` counts degenerate ``Q_S`` evaluations (survival below 1e-10).
    """

    values: np.ndarray
    tag: str
    provenance: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i):
        return self.values[i]


def _per_arm(rd: RestrictedDataset, fn: Callable) -> tuple[np.ndarray, int]:
    """Evaluate ``fn(rows, y, delta, X, a) -> (values, flagged)`` arm by arm."""
    out = np.empty(rd.n)
    flagged = 0
    for arm in (0, 1):
        rows = np.flatnonzero(rd.a == arm)
        if rows.size == 0:
            continue
        y = rd.restricted_time[rows]
        d = rd.restricted_status[rows].astype(float)
        vals, f = fn(rows, y, d, rd.X[rows], arm)
        out[rows] = vals
        flagged += f
    return out, flagged


def _provenance(ns: NuisanceSet, keys) -> dict:
    tags = dict(ns.tags)
    tags.setdefault("mu", tags.get("S", "unknown"))
    return {k: tags.get(k, "unknown") for k in keys}


def ipcw_transform(rd: RestrictedDataset, ns: NuisanceSet) -> PseudoOutcomes:
    """``delta_tau * Y / G(Y-)`` with ``Y = min(time, tau)``."""

    def fn(rows, y, d, X, a):
        G = ns.G_hat(y, X, a)
        return np.where(d > 0, y / G, 0.0), 0

    vals, _ = _per_arm(rd, fn)
    return PseudoOutcomes(vals, "ipcw", _provenance(ns, ["G"]))


def bj_transform(rd: RestrictedDataset, ns: NuisanceSet) -> PseudoOutcomes:
    """Observed value for events, ``Q_S(Y)`` for censored subjects."""

    def fn(rows, y, d, X, a):
        cens = d == 0
        out = y.copy()
        flagged = 0
        if np.any(cens):
            q, flagged = ns.Q_hat(y[cens], X[cens], a)
            out[cens] = q
        return out, flagged

    vals, flagged = _per_arm(rd, fn)
    return PseudoOutcomes(vals, "bj", _provenance(ns, ["S"]), {"degenerate_q": flagged})


def _dr_correction(ns: NuisanceSet, y: np.ndarray, X: np.ndarray, a: int) -> tuple[np.ndarray, int]:
    """``sum_{t_j <= y} Q_S(t_j) / G(t_j-)^2 * dP_C(t_j)`` for every row.

    Step censoring laws contribute their jump masses; continuous ones a
    quadrature rule on ``[0, y]``. Both ``G`` and ``dP_C`` refer to the
    clipped law ``max(G, eps)``, which has no mass once ``G`` reaches ``eps``.
    """
    law = ns.censoring
    out = np.zeros(y.shape[0])
    flagged = 0
    width = len(getattr(law, "jump_times", lambda a: np.empty(128))(a)) or 1
    # rows in time order so that each chunk only spans jumps up to its own maximum
    order = np.argsort(y, kind="stable")
    for sl in chunk_rows(y.shape[0], width):
        sl = order[sl]
        nodes, mass = law.measure(y[sl], X[sl], a)
        if not np.any(mass):
            continue
        nodes = np.minimum(nodes, ns.tau)
        eps = ns.censoring_clip
        G_left = law.left_limit(nodes, X[sl], a)
        # jumps of the clipped law max(G, eps), so weights and masses agree
        mass = np.maximum(G_left, eps) - np.maximum(G_left - mass, eps)
        G = np.maximum(G_left, eps)
        q, f = ns.Q_hat(nodes, X[sl], a)
        flagged += f
        out[sl] = np.sum(np.where(mass > 0, q / G**2 * mass, 0.0), axis=1)
    return out, flagged


def dr_transform(rd: RestrictedDataset, ns: NuisanceSet) -> PseudoOutcomes:
    """Augmented IPCW transform, robust to misspecifying one of ``G`` and ``S``."""
    tag = f"dr:{ns.censoring_clip!r}:{ns.tau!r}"
    return ns.cached(tag, (ns.censoring, ns.survival, rd), lambda: _dr_transform(rd, ns))


def _dr_transform(rd: RestrictedDataset, ns: NuisanceSet) -> PseudoOutcomes:

    def fn(rows, y, d, X, a):
        G = ns.G_hat(y, X, a)
        num = y.copy()
        cens = d == 0
        f1 = 0
        if np.any(cens):
            num[cens], f1 = ns.Q_hat(y[cens], X[cens], a)
        corr, f2 = _dr_correction(ns, y, X, a)
        return num / G - corr, f1 + f2

    vals, flagged = _per_arm(rd, fn)
    return PseudoOutcomes(vals, "dr", _provenance(ns, ["G", "S"]), {"degenerate_q": flagged})


def qr_pseudo_outcome(rd: RestrictedDataset, ns: NuisanceSet, dr: PseudoOutcomes | None = None) -> PseudoOutcomes:
    """Contrast that stays unbiased if one of ``(G, S)`` and one of ``(e, mu)`` is right.

    ``(a/e - (1-a)/(1-e)) * (T_DR - mu(x, a)) + mu(x, 1) - mu(x, 0)``.
    """
    dr = dr if dr is not None else dr_transform(rd, ns)
    X = rd.X
    a = rd.a.astype(float)
    e = ns.e_hat(X)
    mu1 = ns.mu_hat(X, 1)
    mu0 = ns.mu_hat(X, 0)
    mu_a = np.where(a == 1, mu1, mu0)
    vals = (a / e - (1 - a) / (1 - e)) * (dr.values - mu_a) + mu1 - mu0
    return PseudoOutcomes(vals, "qr", _provenance(ns, ["e", "G", "S", "mu"]), dict(dr.flags))
