"""Survival datasets, validation and restriction to a time horizon."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadCode,
    DimensionMismatch,
    EmptyArm,
    NegativeTime,
    NonFiniteValue,
    NonPositiveTau,
    ValidationError,
)


class Subject(NamedTuple):
    x: tuple[float, ...]
    a: int
    time: float
    status: int


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented, read-only table of subjects.

    Attributes
    ----------
    X : ndarray of shape (n, p)
        Covariates.
    a : ndarray of shape (n,)
        Treatment indicator, 0 or 1.
    time : ndarray of shape (n,)
        Observed time ``min(T, C)``.
    status : ndarray of shape (n,)
        Event indicator ``1{T <= C}``.
    ids : tuple of str, optional
        Subject identifiers carried through from CSV input.
    """

    X: np.ndarray
    a: np.ndarray
    time: np.ndarray
    status: np.ndarray
    ids: tuple[str, ...] | None = None

    @classmethod
    def from_arrays(
        cls,
        X: Any,
        a: Any,
        time: Any,
        status: Any,
        ids: Sequence[str] | None = None,
        require_both_arms: bool = True,
    ) -> "Dataset":
        """Validate raw columns and build a dataset (arrays are copied)."""
        time = np.array(time, dtype=float).reshape(-1)
        n = time.shape[0]
        if n == 0:
            raise ValidationError("dataset is empty")
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(n, -1) if X.size else np.empty((n, 0))
        if X.ndim != 2 or X.shape[0] != n:
            raise DimensionMismatch(f"covariates have shape {X.shape}, expected ({n}, p)")
        a_raw = np.asarray(a, dtype=float).reshape(-1)
        d_raw = np.asarray(status, dtype=float).reshape(-1)
        if a_raw.shape[0] != n or d_raw.shape[0] != n:
            raise DimensionMismatch("columns have different lengths")

        for name, col in (("covariates", X), ("a", a_raw), ("time", time), ("status", d_raw)):
            if not np.all(np.isfinite(col)):
                raise NonFiniteValue(f"non-finite value in {name}")
        if not np.all((a_raw == 0) | (a_raw == 1)):
            raise BadCode("treatment must be coded 0/1")
        if not np.all((d_raw == 0) | (d_raw == 1)):
            raise BadCode("status must be coded 0/1")
        if np.any(time < 0):
            raise NegativeTime("observed times must be nonnegative")
        a_int = a_raw.astype(np.int8)
        if require_both_arms and (not np.any(a_int == 1) or not np.any(a_int == 0)):
            raise EmptyArm("both treatment arms must contain at least one subject")
        if ids is not None:
            ids = tuple(str(i) for i in ids)
            if len(ids) != n:
                raise DimensionMismatch("ids column has the wrong length")
        return cls(_frozen(X), _frozen(a_int), _frozen(time), _frozen(d_raw.astype(np.int8)), ids)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def arm_sizes(self) -> tuple[int, int]:
        n1 = int(self.a.sum())
        return self.n - n1, n1

    def __len__(self) -> int:
        return self.n

    @property
    def subjects(self) -> Iterator[Subject]:
        for i in range(self.n):
            yield Subject(tuple(self.X[i].tolist()), int(self.a[i]), float(self.time[i]), int(self.status[i]))

    def take(self, index: np.ndarray, require_both_arms: bool = True) -> "Dataset":
        """Return the rows at ``index`` (repeats allowed) as a new dataset."""
        index = np.asarray(index)
        ids = None if self.ids is None else tuple(self.ids[i] for i in index)
        return Dataset.from_arrays(
            self.X[index], self.a[index], self.time[index], self.status[index],
            ids=ids, require_both_arms=require_both_arms,
        )

    def digest(self) -> str:
        """SHA-256 of the canonical CSV rendering."""
        return hashlib.sha256(to_csv_text(self).encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class RestrictedDataset:
    """A dataset viewed through the horizon ``tau``.

    ``restricted_time`` is ``min(time, tau)`` and ``restricted_status`` is
    ``max(status, 1{time >= tau})``: follow-up reaching the horizon counts as
    a fully observed restricted outcome.
    """

    base: Dataset
    tau: float
    restricted_time: np.ndarray = field(repr=False)
    restricted_status: np.ndarray = field(repr=False)

    # convenience pass-throughs
    @property
    def X(self) -> np.ndarray:
        return self.base.X

    @property
    def a(self) -> np.ndarray:
        return self.base.a

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def p(self) -> int:
        return self.base.p


def validate_dataset(rows: Iterable[Any], p: int, require_both_arms: bool = True) -> Dataset:
    """Validate raw records and return a :class:`Dataset`.

    Each record is either a mapping with keys ``x``, ``a``, ``time``,
    ``status`` or a sequence ``(x, a, time, status)``. Input order is kept.
    """
    xs, arms, times, stats = [], [], [], []
    for row in rows:
        if isinstance(row, Mapping):
            x, a, t, d = row["x"], row["a"], row["time"], row["status"]
        else:
            x, a, t, d = row
        x = list(np.atleast_1d(np.asarray(x, dtype=float))) if p else []
        if len(x) != p:
            raise DimensionMismatch(f"record has {len(x)} covariates, expected {p}")
        xs.append(x)
        arms.append(a)
        times.append(t)
        stats.append(d)
    if not times:
        raise ValidationError("no records supplied")
    X = np.array(xs, dtype=float).reshape(len(times), p)
    return Dataset.from_arrays(X, arms, times, stats, require_both_arms=require_both_arms)


def restrict(d: Dataset, tau: float) -> RestrictedDataset:
    """Restrict observed times to ``[0, tau]`` and update the event status."""
    if not (isinstance(tau, (int, float, np.floating)) and math.isfinite(tau) and tau > 0):
        raise NonPositiveTau(f"tau must be a positive finite number, got {tau!r}")
    if isinstance(d, RestrictedDataset):
        d = d.base
    tau = float(tau)
    reached = d.time >= tau
    rtime = np.minimum(d.time, tau)
    rstatus = np.maximum(d.status, reached.astype(np.int8))
    return RestrictedDataset(d, tau, _frozen(rtime), _frozen(rstatus))


# ---------------------------------------------------------------- CSV

def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv_text(d: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *[f"x{j + 1}" for j in range(d.p)], "a", "time", "status"])
    ids = d.ids if d.ids is not None else [str(i + 1) for i in range(d.n)]
    for i in range(d.n):
        writer.writerow([ids[i], *map(_fmt, d.X[i]), int(d.a[i]), _fmt(d.time[i]), int(d.status[i])])
    return buf.getvalue()


def write_csv(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(to_csv_text(d))


def read_csv(path: str | Path, require_both_arms: bool = True) -> Dataset:
    """Read a dataset with header ``id,x1,...,xp,a,time,status``.

    Parsing uses Python's ``float`` so it never depends on the locale.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        required = ["a", "time", "status"]
        if header[:1] != ["id"] or header[-3:] != required:
            raise ValidationError(f"{path}: header must be id,x1,...,xp,a,time,status")
        cov_names = header[1:-3]
        if cov_names != [f"x{j + 1}" for j in range(len(cov_names))]:
            raise ValidationError(f"{path}: covariate columns must be named x1..xp")
        p = len(cov_names)
        ids, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != p + 4:
                raise DimensionMismatch(f"{path}:{lineno}: expected {p + 4} fields, got {len(rec)}")
            try:
                vals = [float(v) for v in rec[1:]]
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            ids.append(rec[0])
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    return Dataset.from_arrays(
        arr[:, :p], arr[:, p], arr[:, p + 1], arr[:, p + 2], ids=ids,
        require_both_arms=require_both_arms,
    )
