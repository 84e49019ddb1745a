"""Empirical data model: the audit table, conditioning cells and fixtures."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, replace
from typing import Any, Literal, Optional, Sequence

import numpy as np

from .errors import (
    EmptyTable,
    MissingColumn,
    MissingValue,
    NonBinaryGroup,
    NonBinaryOutcome,
    OutOfRangeScore,
    SingleGroupOnly,
    ValidationError,
)

OutcomeKind = Literal["binary", "continuous"]
Strategy = Literal["equal-frequency", "equal-width", "distinct-values"]

STRATEGIES = ("equal-frequency", "equal-width", "distinct-values")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AuditTable:
    """Row-aligned outcome ``y``, group ``g`` in {0, 1} and score ``z``.

    Build through :func:`validate_table`; the constructor does not check
    invariants. Arrays are stored read-only.
    """

    y: np.ndarray
    g: np.ndarray
    z: np.ndarray
    yhat: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    feature_names: tuple[str, ...] = ()
    outcome_kind: OutcomeKind = "binary"

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def with_scores(self, z) -> "AuditTable":
        return replace(self, z=_frozen(np.asarray(z, dtype=np.float64)))

    def feature(self, name: str) -> np.ndarray:
        if self.x is None or name not in self.feature_names:
            raise MissingColumn(name)
        return self.x[:, self.feature_names.index(name)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AuditTable):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.outcome_kind == other.outcome_kind
            and self.feature_names == other.feature_names
            and same(self.y, other.y)
            and same(self.g, other.g)
            and same(self.z, other.z)
            and same(self.yhat, other.yhat)
            and same(self.x, other.x)
        )

    __hash__ = None  # type: ignore[assignment]


def _column(raw: Mapping[str, Any], name: str, required: bool = True):
    if name not in raw or raw[name] is None:
        if required:
            raise MissingColumn(name)
        return None
    try:
        arr = np.asarray(raw[name], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"column {name!r} is not numeric: {exc}") from None
    if np.isnan(arr).any():
        raise MissingValue(f"column {name!r} has missing values")
    return arr


def _is_01(a: np.ndarray) -> bool:
    return bool(np.all((a == 0.0) | (a == 1.0)))


def validate_table(raw, outcome_kind: OutcomeKind = "binary") -> AuditTable:
    """Check a column mapping (or an existing table) and return an AuditTable.

    ``raw`` maps ``"y"``, ``"g"``, ``"z"`` and optionally ``"yhat"``, ``"x"``,
    ``"feature_names"`` to row-aligned values. Row order is preserved.
    """
    if isinstance(raw, AuditTable):
        outcome_kind = raw.outcome_kind
        raw = {
            "y": raw.y,
            "g": raw.g,
            "z": raw.z,
            "yhat": raw.yhat,
            "x": raw.x,
            "feature_names": raw.feature_names,
        }
    if outcome_kind not in ("binary", "continuous"):
        raise ValidationError(f"unknown outcome kind {outcome_kind!r}")

    y = _column(raw, "y")
    g = _column(raw, "g")
    z = _column(raw, "z")
    yhat = _column(raw, "yhat", required=False)
    x = _column(raw, "x", required=False)

    n = y.shape[0] if y.ndim else 0
    if n == 0:
        raise EmptyTable("table has no rows")
    for name, col in (("y", y), ("g", g), ("z", z), ("yhat", yhat)):
        if col is None:
            continue
        if col.ndim != 1 or col.shape[0] != n:
            raise ValidationError(f"column {name!r} must be 1-d with {n} rows")
    if not np.isfinite(y).all() or not np.isfinite(z).all():
        raise ValidationError("outcome and score must be finite")

    if not _is_01(g):
        bad = sorted(set(np.unique(g).tolist()) - {0.0, 1.0})
        raise NonBinaryGroup(f"group column must be 0/1, found {bad[:5]}")
    n1 = int(g.sum())
    if n1 == 0 or n1 == n:
        raise SingleGroupOnly("both groups 0 and 1 must be present")

    if outcome_kind == "binary":
        if not _is_01(y):
            raise NonBinaryOutcome("binary outcome must be 0/1")
        if z.min() < 0.0 or z.max() > 1.0:
            raise OutOfRangeScore("binary-outcome scores must lie in [0, 1]")
    if yhat is not None and not _is_01(yhat):
        raise ValidationError("predicted class must be 0/1")

    names: tuple[str, ...] = ()
    if x is not None:
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValidationError(f"feature matrix must have {n} rows")
        if not np.isfinite(x).all():
            raise ValidationError("features must be finite")
        names = tuple(raw.get("feature_names") or (f"x{j}" for j in range(x.shape[1])))
        if len(names) != x.shape[1]:
            raise ValidationError("feature_names does not match feature matrix")

    return AuditTable(
        y=_frozen(y),
        g=_frozen(g),
        z=_frozen(z),
        yhat=None if yhat is None else _frozen(yhat),
        x=None if x is None else _frozen(x),
        feature_names=names,
        outcome_kind=outcome_kind,
    )


# ---------------------------------------------------------------------------
# binning


@dataclass(frozen=True)
class BinningSpec:
    strategy: Strategy = "equal-frequency"
    count: int = 20
    applied_to: Literal["score", "outcome"] = "score"
    # equal-width only: fixed (lo, hi) range instead of the data range
    bounds: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown binning strategy {self.strategy!r}")
        if int(self.count) != self.count or self.count < 1:
            raise ValidationError("bin count must be a positive integer")
        if self.applied_to not in ("score", "outcome"):
            raise ValidationError("applied_to must be 'score' or 'outcome'")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValidationError("bounds must satisfy lo < hi")

    @classmethod
    def distinct(cls, applied_to: Literal["score", "outcome"] = "score") -> "BinningSpec":
        return cls("distinct-values", 1, applied_to)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "count": int(self.count),
            "applied_to": self.applied_to,
            "bounds": None if self.bounds is None else list(self.bounds),
        }


@dataclass(frozen=True, eq=False)
class Binning:
    """Result of :func:`bin_assign`: per-row cell ids ordered by value."""

    cells: np.ndarray
    n_cells: int
    lo: np.ndarray
    hi: np.ndarray
    spec: BinningSpec

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.cells, minlength=self.n_cells)

    @property
    def exact(self) -> bool:
        """True when every cell holds a single distinct value."""
        return bool(np.all(self.lo == self.hi))


def _relabel(ids: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(ids, return_inverse=True)
    return inv.astype(np.int64).reshape(-1), int(uniq.shape[0])


def bin_assign(values, spec: BinningSpec) -> Binning:
    """Assign each value to a conditioning cell.

    Equal values always share a cell. Equal-frequency cells are cut on sorted
    rank (sizes differ by at most one) and any cut that would separate tied
    values is dropped, merging its two neighbours.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    n = v.shape[0]
    if n == 0:
        raise ValidationError("cannot bin an empty column")

    if spec.strategy == "distinct-values":
        uniq, inv = np.unique(v, return_inverse=True)
        cells = inv.astype(np.int64).reshape(-1)
        return Binning(_frozen(cells), int(uniq.shape[0]), _frozen(uniq), _frozen(uniq), spec)

    if spec.strategy == "equal-frequency":
        k = int(spec.count)
        order = np.argsort(v, kind="stable")
        s = v[order]
        rank_cell = (np.arange(n, dtype=np.int64) * k) // n
        cut = np.zeros(n, dtype=np.int64)
        cut[1:] = (rank_cell[1:] != rank_cell[:-1]) & (s[1:] > s[:-1])
        sorted_cells = np.cumsum(cut)
        cells = np.empty(n, dtype=np.int64)
        cells[order] = sorted_cells
        n_cells = int(sorted_cells[-1]) + 1
    else:  # equal-width
        k = int(spec.count)
        lo, hi = spec.bounds if spec.bounds is not None else (float(v.min()), float(v.max()))
        if v.min() < lo or v.max() > hi:
            raise ValidationError("values fall outside the equal-width bounds")
        if hi == lo:
            raw = np.zeros(n, dtype=np.int64)
        else:
            raw = np.floor((v - lo) / (hi - lo) * k).astype(np.int64)
            np.clip(raw, 0, k - 1, out=raw)
        cells, n_cells = _relabel(raw)

    cell_lo = np.full(n_cells, np.inf)
    cell_hi = np.full(n_cells, -np.inf)
    np.minimum.at(cell_lo, cells, v)
    np.maximum.at(cell_hi, cells, v)
    return Binning(_frozen(cells), n_cells, _frozen(cell_lo), _frozen(cell_hi), spec)


# ---------------------------------------------------------------------------
# fixtures

# (z, y, g)
FIXTURE_T4_ROWS: tuple[tuple[float, int, int], ...] = (
    (0.0, 0, 0),
    (0.5, 0, 0),
    (0.5, 1, 1),
    (1.0, 1, 1),
)

# (yhat, y, g)
FIXTURE_C10_ROWS: tuple[tuple[int, int, int], ...] = (
    (1, 1, 1),
    (1, 1, 1),
    (1, 1, 0),
    (1, 0, 0),
    (0, 1, 1),
    (0, 0, 0),
    (0, 0, 0),
    (0, 0, 0),
    (0, 0, 1),
    (0, 0, 0),
)


def fixture_t4() -> AuditTable:
    """Four rows, globally calibrated, with all of the identity's mass in z=0.5."""
    z, y, g = (np.array(c, dtype=np.float64) for c in zip(*FIXTURE_T4_ROWS))
    return validate_table({"y": y, "g": g, "z": z})


def fixture_c10() -> dict[str, np.ndarray]:
    """Ten rows of (y, yhat, g) for the classifier identity."""
    yhat, y, g = (np.array(c, dtype=np.float64) for c in zip(*FIXTURE_C10_ROWS))
    return {"y": y, "yhat": yhat, "g": g}


def table_from_rows(rows: Sequence[Mapping[str, Any]], outcome_kind: OutcomeKind = "binary") -> AuditTable:
    cols: dict[str, list] = {}
    for row in rows:
        for key, val in row.items():
            cols.setdefault(key, []).append(val)
    return validate_table(cols, outcome_kind)


__all__ = [
    "AuditTable",
    "Binning",
    "BinningSpec",
    "FIXTURE_C10_ROWS",
    "FIXTURE_T4_ROWS",
    "bin_assign",
    "fixture_c10",
    "fixture_t4",
    "table_from_rows",
    "validate_table",
]
