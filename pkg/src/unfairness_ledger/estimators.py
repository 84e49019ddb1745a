"""Plug-in estimators for pointwise and aggregate unfairness and the budget.

Every conditional moment is computed on the empirical distribution of the
table. Covariances default to population normalisation (divide by the cell
size), which is what makes the laws of total covariance hold exactly on a
finite table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import kernels
from .core import AuditTable, Binning, BinningSpec, bin_assign
from .errors import DegenerateOutcome, ValidationError

Normalization = Literal["population", "sample"]

DEFAULT_BINS = 20


@dataclass(frozen=True, eq=False)
class UnfairnessCurve:
    """Per-cell group gaps with their weights.

    ``delta`` is NaN where a cell holds only one group; such cells have zero
    ``omega`` and contribute nothing to the aggregate.
    """

    kind: Literal["miscalibration", "imbalance"]
    value: np.ndarray  # cell mean of the conditioning variable
    delta: np.ndarray
    omega: np.ndarray
    mass: np.ndarray
    n_cell: np.ndarray
    n_group1: np.ndarray
    weighted_cov: np.ndarray  # Cov(target, G | cell) * mass
    binning: Binning
    normalization: Normalization = "population"

    @property
    def n_cells(self) -> int:
        return int(self.value.shape[0])

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.delta)

    @property
    def contributions(self) -> np.ndarray:
        return np.where(self.defined, np.nan_to_num(self.delta) * self.omega, 0.0)

    @property
    def approximate(self) -> bool:
        """True when some cell pools distinct conditioning values."""
        return not self.binning.exact

    @property
    def dual_form_gap(self) -> float:
        return float(np.max(np.abs(self.contributions - self.weighted_cov), initial=0.0))

    def records(self) -> list[dict]:
        out = []
        for c in range(self.n_cells):
            d = float(self.delta[c])
            out.append(
                {
                    "cell": c,
                    "value": float(self.value[c]),
                    "lo": float(self.binning.lo[c]),
                    "hi": float(self.binning.hi[c]),
                    "delta": None if math.isnan(d) else d,
                    "omega": float(self.omega[c]),
                    "mass": float(self.mass[c]),
                    "n": int(self.n_cell[c]),
                    "n_group1": int(self.n_group1[c]),
                    "weighted_cov": float(self.weighted_cov[c]),
                }
            )
        return out


@dataclass(frozen=True)
class BudgetTerms:
    mse: float
    base_rate_gap: Optional[float]
    general_budget: float
    between_outcome_variance: float
    within_outcome_variance: float

    @property
    def budget(self) -> float:
        """Binary budget ``mse * gap`` when the gap is defined, else the general one."""
        if self.base_rate_gap is None:
            return self.general_budget
        return self.mse * self.base_rate_gap


def _check_normalization(normalization: str) -> None:
    if normalization not in ("population", "sample"):
        raise ValidationError(f"unknown normalization {normalization!r}")


def _curve(kind, cond, target, g, binning: Binning, normalization: Normalization) -> UnfairnessCurve:
    _check_normalization(normalization)
    k = binning.n_cells
    n = float(cond.shape[0])
    count, s_t, s_g, s_tg = kernels.cell_sums(binning.cells, k, target, g)
    _, s_c, _, _ = kernels.cell_sums(binning.cells, k, cond, g)

    mean_t = s_t / count
    mean_g = s_g / count
    mass = count / n
    n0 = count - s_g
    both = (s_g > 0) & (n0 > 0)

    with np.errstate(invalid="ignore", divide="ignore"):
        mean1 = s_tg / s_g
        mean0 = (s_t - s_tg) / n0
    delta = np.where(both, mean1 - mean0, np.nan)

    var_g = mean_g * (1.0 - mean_g)
    cross = kernels.cell_centered_cross(binning.cells, k, target, g, mean_t, mean_g)
    if normalization == "sample":
        # n_c / (n_c - 1); singleton cells carry a single group and zero weight
        adj = np.where(count > 1, count / np.maximum(count - 1.0, 1.0), 0.0)
        var_g = var_g * adj
        weighted_cov = cross * adj / n
    else:
        weighted_cov = cross / n
    omega = np.where(both, var_g * mass, 0.0)
    weighted_cov = np.where(both, weighted_cov, 0.0)

    curve = UnfairnessCurve(
        kind=kind,
        value=s_c / count,
        delta=delta,
        omega=omega,
        mass=mass,
        n_cell=count.astype(np.int64),
        n_group1=s_g.astype(np.int64),
        weighted_cov=weighted_cov,
        binning=binning,
        normalization=normalization,
    )
    scale = 1.0 + float(np.max(np.abs(target), initial=0.0))
    if curve.dual_form_gap > 1e-9 * scale:
        raise RuntimeError(
            f"weighted-gap and covariance forms disagree by {curve.dual_form_gap:.3g}"
        )
    return curve


def score_cells(table: AuditTable, score_binning: Optional[BinningSpec] = None) -> Binning:
    spec = score_binning or BinningSpec.distinct("score")
    return bin_assign(table.z, spec)


def outcome_cells(table: AuditTable, outcome_binning: Optional[BinningSpec] = None) -> Binning:
    """Cells on ``y``: distinct values for binary outcomes, 20 quantile bins otherwise."""
    if outcome_binning is None:
        if table.outcome_kind == "binary":
            outcome_binning = BinningSpec.distinct("outcome")
        else:
            outcome_binning = BinningSpec("equal-frequency", DEFAULT_BINS, "outcome")
    return bin_assign(table.y, outcome_binning)


def _as_binning(spec_or_binning, default) -> Binning:
    if isinstance(spec_or_binning, Binning):
        return spec_or_binning
    return default(spec_or_binning)


def pointwise_miscalibration(
    table: AuditTable,
    score_binning: Optional[BinningSpec] = None,
    normalization: Normalization = "population",
) -> UnfairnessCurve:
    """Group gap in mean outcome within score cells, weighted by Var(G|cell)*P(cell)."""
    binning = _as_binning(score_binning, lambda s: score_cells(table, s))
    return _curve("miscalibration", table.z, table.y, table.g, binning, normalization)


def pointwise_imbalance(
    table: AuditTable,
    outcome_binning: Optional[BinningSpec] = None,
    normalization: Normalization = "population",
) -> UnfairnessCurve:
    """Group gap in mean score within outcome cells, weighted by Var(G|cell)*P(cell)."""
    binning = _as_binning(outcome_binning, lambda s: outcome_cells(table, s))
    return _curve("imbalance", table.y, table.z, table.g, binning, normalization)


def aggregate(curve: UnfairnessCurve) -> float:
    return math.fsum(curve.contributions.tolist())


def mse(table: AuditTable) -> float:
    r = table.y - table.z
    return math.fsum((r * r).tolist()) / table.n


def base_rate_gap(table: AuditTable) -> float:
    """P(G=1 | Y=1) - P(G=1 | Y=0)."""
    if table.outcome_kind != "binary":
        raise ValidationError("base-rate gap needs a binary outcome")
    pos = table.y == 1.0
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == table.n:
        raise DegenerateOutcome("both outcome classes must be present")
    return float(table.g[pos].mean() - table.g[~pos].mean())


def _cell_means(binning: Binning, values) -> np.ndarray:
    count = np.bincount(binning.cells, minlength=binning.n_cells)
    sums = np.bincount(binning.cells, weights=values, minlength=binning.n_cells)
    return sums / count


def _pop_cov(a: np.ndarray, b: np.ndarray) -> float:
    n = a.shape[0]
    return math.fsum(((a - a.mean()) * (b - b.mean())).tolist()) / n


def budget_general(table: AuditTable, outcome_binning=None) -> float:
    """Cov(E[G|Y], Y - E[Z|Y]) with outcome cells standing in for Y levels."""
    binning = _as_binning(outcome_binning, lambda s: outcome_cells(table, s))
    pi = _cell_means(binning, table.g)[binning.cells]
    m = _cell_means(binning, table.z)[binning.cells]
    return _pop_cov(pi, table.y - m)


def mse_decomposition(table: AuditTable, outcome_binning=None) -> tuple[float, float]:
    """(Var(Y - E[Z|Y]), E[Var(Z|Y)]).

    The two terms add up to the MSE when cells are distinct outcome values and
    mean(z) == mean(y), which global calibration guarantees.
    """
    binning = _as_binning(outcome_binning, lambda s: outcome_cells(table, s))
    m = _cell_means(binning, table.z)[binning.cells]
    r = table.y - m
    between = _pop_cov(r, r)
    dz = table.z - m
    within = math.fsum((dz * dz).tolist()) / table.n
    return between, within


def group_share_variance(table: AuditTable, outcome_binning=None) -> float:
    """Var(E[G|Y]) over rows, with outcome cells standing in for Y levels."""
    binning = _as_binning(outcome_binning, lambda s: outcome_cells(table, s))
    pi = _cell_means(binning, table.g)[binning.cells]
    return _pop_cov(pi, pi)


def budget_terms(table: AuditTable, outcome_binning=None) -> BudgetTerms:
    binning = _as_binning(outcome_binning, lambda s: outcome_cells(table, s))
    gap = None
    if table.outcome_kind == "binary":
        try:
            gap = base_rate_gap(table)
        except DegenerateOutcome:
            gap = None
    between, within = mse_decomposition(table, binning)
    return BudgetTerms(
        mse=mse(table),
        base_rate_gap=gap,
        general_budget=budget_general(table, binning),
        between_outcome_variance=between,
        within_outcome_variance=within,
    )


__all__ = [
    "BudgetTerms",
    "UnfairnessCurve",
    "aggregate",
    "base_rate_gap",
    "budget_general",
    "budget_terms",
    "group_share_variance",
    "mse",
    "mse_decomposition",
    "outcome_cells",
    "pointwise_imbalance",
    "pointwise_miscalibration",
    "score_cells",
]
