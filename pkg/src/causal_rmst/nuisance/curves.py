"""Conditional survival and censoring laws evaluated per subject.

Every law exposes the same vectorised surface so that fitted, oracle and
deliberately wrong nuisances are interchangeable:

``survival(t, X, a)``
    ``P(T > t | x, a)``; ``t`` has shape ``(n,)``, ``(n, m)`` or ``(1, m)``
    (a grid shared by all rows).
``left_limit(t, X, a)``
    ``P(T >= t | x, a)``.
``integral(t, X, a, tau)``
    ``int_t^tau survival(u) du`` for ``t <= tau``.
``residual_mean(t, X, a, tau)``
    ``integral / survival(t)`` plus a count of rows where survival at ``t``
    fell below :data:`DEGENERATE_SURVIVAL`.
``measure(upper, X, a)``
    nodes and masses of the distribution of the time on ``[0, upper_i]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .cox import CoxModel

DEGENERATE_SURVIVAL = 1e-10
CHUNK_ELEMENTS = 2_000_000


def chunk_rows(n: int, width: int) -> list[slice]:
    size = max(32, CHUNK_ELEMENTS // max(width, 1))
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _gather(M: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Row-wise gather ``M[i, idx[i, j]]``; ``idx`` may be (n,), (n, m) or (1, m)."""
    if idx.ndim == 1:
        return M[np.arange(M.shape[0]), idx]
    if idx.shape[0] == 1:
        return M[:, idx[0]]
    return np.take_along_axis(M, idx, axis=1)


def _col(v: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Shape per-row quantities so they broadcast against ``t``."""
    return v if t.ndim == 1 else v[:, None]


# ---------------------------------------------------------------- Cox step laws


@dataclass(frozen=True)
class CoxCurve:
    """Step-function law from Cox fits, one model per arm or a pooled one.

    ``models`` maps arm -> :class:`CoxModel`; a single model fitted with
    ``stratum="pooled_with_treatment_covariate"`` may be stored under both
    keys.
    """

    models: Mapping[int, CoxModel]
    kind = "step"

    def _parts(self, X: np.ndarray, a: int):
        m = self.models[int(a)]
        return m, m.risk(X, a)

    def survival(self, t, X, a):
        t = np.asarray(t, dtype=float)
        m, r = self._parts(X, a)
        return np.exp(-m.cumhaz(t) * _col(r, t))

    def left_limit(self, t, X, a):
        t = np.asarray(t, dtype=float)
        m, r = self._parts(X, a)
        return np.exp(-m.cumhaz(t, left=True) * _col(r, t))

    def jump_times(self, a: int) -> np.ndarray:
        return self.models[int(a)].baseline_times

    def _pieces(self, m: CoxModel, r: np.ndarray, tau: float):
        """Knots, piece values and tail integrals on ``[0, tau]``.

        Piece ``j`` is ``[knots[j], knots[j+1])`` with value ``V[:, j]``; the
        last piece ends at ``tau``. ``tail[:, j]`` integrates from ``knots[j]``.
        """
        keep = m.baseline_times < tau
        u = m.baseline_times[keep]
        knots = np.concatenate([[0.0], u])
        ends = np.concatenate([u, [tau]])
        L = np.concatenate([[0.0], m.baseline_cumhaz[keep]])
        V = np.exp(-np.multiply.outer(r, L))
        areas = V * (ends - knots)
        tail = np.zeros((r.shape[0], knots.size + 1))
        tail[:, :-1] = np.cumsum(areas[:, ::-1], axis=1)[:, ::-1]
        return knots, ends, V, tail

    def integral(self, t, X, a, tau):
        t = np.minimum(np.asarray(t, dtype=float), tau)
        m, r = self._parts(X, a)
        knots, ends, V, tail = self._pieces(m, r, tau)
        j = np.searchsorted(knots, t, side="right") - 1
        return _gather(tail, j + 1) + _gather(V, j) * (ends[j] - t)

    def rmst(self, X, a, tau):
        """``int_0^tau survival`` per row: a plain rectangle sum."""
        m, r = self._parts(X, a)
        keep = m.baseline_times < tau
        u = m.baseline_times[keep]
        widths = np.diff(np.concatenate([[0.0], u, [tau]]))
        L = np.concatenate([[0.0], m.baseline_cumhaz[keep]])
        return np.exp(-np.multiply.outer(r, L)) @ widths

    def residual_mean(self, t, X, a, tau):
        t = np.minimum(np.asarray(t, dtype=float), tau)
        m, r = self._parts(X, a)
        knots, ends, V, tail = self._pieces(m, r, tau)
        j = np.searchsorted(knots, t, side="right") - 1
        Vt = _gather(V, j)
        num = _gather(tail, j + 1) + Vt * (ends[j] - t)
        bad = Vt < DEGENERATE_SURVIVAL
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / Vt
        if np.any(bad):
            # Fall back to the last point t' < t where survival is still
            # well defined: the left end of the drop below the threshold.
            last_ok = np.sum(V >= DEGENERATE_SURVIVAL, axis=1) - 1
            jstar = np.broadcast_to(_col(last_ok, t), Vt.shape)
            t_prime = ends[jstar]
            res_prime = _gather(tail, jstar + 1) / _gather(V, jstar)
            # express as residual from t so that t + residual = max(Q(t'), t)
            out = np.where(bad, np.maximum(t_prime + res_prime - t, 0.0), out)
        return out, int(np.sum(bad))

    def measure(self, upper, X, a):
        """Jump masses of the conditional law at the baseline jump times."""
        upper = np.asarray(upper, dtype=float)
        m, r = self._parts(X, a)
        u = m.baseline_times
        keep = u <= upper.max() if upper.size else np.zeros(u.size, bool)
        u = u[keep]
        L = m.baseline_cumhaz[keep]
        L_prev = np.concatenate([[0.0], L[:-1]])
        masses = np.exp(-np.multiply.outer(r, L_prev)) - np.exp(-np.multiply.outer(r, L))
        masses = np.where(u[None, :] <= upper[:, None], masses, 0.0)
        return u[None, :], masses


# ---------------------------------------------------------------- closed-form laws


def _gauss_panels(panels: int = 8, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    starts = np.arange(panels) / panels
    nodes = (starts[:, None] + x[None, :] / panels).ravel()
    weights = np.tile(w / panels, panels)
    return nodes, weights


_QUAD_NODES, _QUAD_WEIGHTS = _gauss_panels()


@dataclass(frozen=True)
class ExponentialShiftCurve:
    """``T = shift[a] + E`` with ``E`` exponential of rate ``rate(x)``.

    ``rate`` maps covariates to per-row hazards. With zero shift this is a
    constant-baseline Cox law; with a positive shift it is the treated arm
    of the simulation designs.
    """

    rate: Callable[[np.ndarray], np.ndarray]
    shift: Mapping[int, float]
    kind = "continuous"

    def _parts(self, X, a):
        return np.asarray(self.rate(X), dtype=float), float(self.shift.get(int(a), 0.0))

    def survival(self, t, X, a):
        t = np.asarray(t, dtype=float)
        r, s = self._parts(X, a)
        return np.exp(-_col(r, t) * np.maximum(t - s, 0.0))

    left_limit = survival

    def integral(self, t, X, a, tau):
        t = np.minimum(np.asarray(t, dtype=float), tau)
        r, s = self._parts(X, a)
        r = _col(r, t)
        flat = np.maximum(min(s, tau) - t, 0.0)
        lo = np.maximum(t, s) - s
        hi = max(tau - s, 0.0)
        expo = np.where(hi > lo, (np.exp(-r * lo) - np.exp(-r * hi)) / r, 0.0)
        return flat + expo

    def residual_mean(self, t, X, a, tau):
        t = np.minimum(np.asarray(t, dtype=float), tau)
        r, s = self._parts(X, a)
        r = _col(r, t)
        flat = np.maximum(min(s, tau) - t, 0.0)
        lo = np.maximum(t - s, 0.0)
        hi = max(tau - s, 0.0)
        # survival(t) = exp(-r * lo) cancels analytically
        expo = np.where(hi > lo, -np.expm1(-r * np.maximum(hi - lo, 0.0)) / r, 0.0)
        return flat + expo, 0

    def measure(self, upper, X, a):
        """Composite Gauss-Legendre rule for the density on ``[0, upper_i]``."""
        upper = np.asarray(upper, dtype=float)
        r, s = self._parts(X, a)
        nodes = upper[:, None] * _QUAD_NODES[None, :]
        dens = np.where(nodes >= s, r[:, None] * np.exp(-r[:, None] * np.maximum(nodes - s, 0.0)), 0.0)
        return nodes, dens * upper[:, None] * _QUAD_WEIGHTS[None, :]


def _out_shape(t: np.ndarray, n: int) -> tuple[int, ...]:
    return (n, t.shape[1]) if t.ndim == 2 else (n,)


@dataclass(frozen=True)
class ConstantCurve:
    """``survival(t) = level`` for every ``t >= 0``; a deliberately wrong law.

    The missing mass ``1 - level`` sits at time 0, so ``left_limit(0) = 1``.
    """

    level: float
    kind = "constant"

    def survival(self, t, X, a):
        return np.full(_out_shape(np.asarray(t), len(X)), float(self.level))

    def left_limit(self, t, X, a):
        t = np.asarray(t, dtype=float)
        vals = np.where(t > 0, float(self.level), 1.0)
        return np.broadcast_to(vals, _out_shape(t, len(X))).copy()

    def integral(self, t, X, a, tau):
        t = np.minimum(np.asarray(t, dtype=float), tau)
        return np.broadcast_to(self.level * (tau - t), _out_shape(t, len(X))).copy()

    def residual_mean(self, t, X, a, tau):
        return self.integral(t, X, a, tau) / self.level, 0

    def measure(self, upper, X, a):
        return np.zeros((1, 1)), np.full((len(X), 1), 1.0 - float(self.level))


# ---------------------------------------------------------------- functionals


def conditional_rmst(S_hat, X: np.ndarray, a: int, tau: float) -> np.ndarray:
    """``mu(x, a) = int_0^tau S(t | x, a) dt`` for every row of ``X``."""
    X = np.atleast_2d(X)
    width = len(getattr(S_hat, "jump_times", lambda a: ())(a)) + 1
    out = np.empty(X.shape[0])
    direct = getattr(S_hat, "rmst", None)
    for sl in chunk_rows(X.shape[0], width):
        if direct is not None:
            out[sl] = direct(X[sl], a, tau)
        else:
            out[sl] = S_hat.integral(np.zeros(sl.stop - sl.start), X[sl], a, tau)
    return out


def mean_residual_life(S_hat, t, X, a, tau) -> tuple[np.ndarray, int]:
    """``int_t^tau S(u) du / S(t)``: expected remaining restricted time after ``t``."""
    return S_hat.residual_mean(np.asarray(t, dtype=float), X, a, tau)


def q_s(S_hat, t, X, a, tau) -> tuple[np.ndarray, int]:
    """``Q_S(t | x, a) = E[T ^ tau | x, a, T ^ tau > t] = t + residual``.

    Returns the values and the number of rows flagged as degenerate.
    """
    t = np.minimum(np.asarray(t, dtype=float), tau)
    res, flagged = S_hat.residual_mean(t, X, a, tau)
    return np.clip(t + res, 0.0, tau), flagged
