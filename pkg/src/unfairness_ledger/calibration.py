"""Global calibration: isotonic (PAVA) and bin-mean recalibration, plus a residual check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import kernels
from .core import AuditTable, BinningSpec
from .errors import EmptyInput, ValidationError
from .estimators import score_cells


@dataclass(frozen=True, eq=False)
class IsotonicFit:
    """Stepwise-constant nondecreasing fit.

    Block ``k`` covers scores in ``[breakpoints[k], breakpoints[k + 1])``;
    scores below the first breakpoint take the first value and scores above
    the last take the last value.
    """

    breakpoints: np.ndarray  # lowest input score of each block
    upper: np.ndarray  # highest input score of each block
    values: np.ndarray
    weights: np.ndarray

    @property
    def n_blocks(self) -> int:
        return int(self.values.shape[0])

    def predict(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        idx = np.searchsorted(self.breakpoints, s, side="right") - 1
        np.clip(idx, 0, self.n_blocks - 1, out=idx)
        return self.values[idx]

    __call__ = predict


def pava_isotonic(scores, targets, weights=None) -> IsotonicFit:
    """Weighted least-squares nondecreasing fit of ``targets`` on ``scores``.

    Rows sharing a score are pooled into one weighted point first, so tied
    scores always receive the same fitted value.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if s.shape[0] == 0:
        raise EmptyInput("isotonic fit needs at least one point")
    if t.shape != s.shape:
        raise ValidationError("scores and targets must have equal length")
    w = np.ones_like(s) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != s.shape:
        raise ValidationError("weights must match scores")
    if not np.all(w > 0):
        raise ValidationError("weights must be positive")

    uniq, inv = np.unique(s, return_inverse=True)
    inv = inv.reshape(-1)
    pooled_w = np.bincount(inv, weights=w)
    pooled_t = np.bincount(inv, weights=w * t) / pooled_w

    values, block_w, ends = kernels.pava(pooled_t, pooled_w)
    starts = np.concatenate(([0], ends[:-1]))
    return IsotonicFit(
        breakpoints=uniq[starts],
        upper=uniq[ends - 1],
        values=values,
        weights=block_w,
    )


def recalibrate_empirical(
    table: AuditTable,
    mode: Literal["isotonic", "bin-mean"] = "isotonic",
    score_binning: Optional[BinningSpec] = None,
) -> AuditTable:
    """Replace ``z`` so that mean(y | z) == z holds on this table.

    ``isotonic`` maps scores through a PAVA fit of y on z; ``bin-mean``
    replaces each score by the mean outcome of its score cell (distinct
    values unless ``score_binning`` says otherwise).
    """
    if mode == "isotonic":
        fit = pava_isotonic(table.z, table.y)
        return table.with_scores(fit.predict(table.z))
    if mode == "bin-mean":
        binning = score_cells(table, score_binning)
        count = np.bincount(binning.cells, minlength=binning.n_cells)
        means = np.bincount(binning.cells, weights=table.y, minlength=binning.n_cells) / count
        return table.with_scores(means[binning.cells])
    raise ValidationError(f"unknown recalibration mode {mode!r}")


def calibration_residual(table: AuditTable, score_binning: Optional[BinningSpec] = None) -> float:
    """max over score cells of |mean(y) - mean(z)|."""
    binning = score_cells(table, score_binning)
    count = np.bincount(binning.cells, minlength=binning.n_cells)
    my = np.bincount(binning.cells, weights=table.y, minlength=binning.n_cells) / count
    mz = np.bincount(binning.cells, weights=table.z, minlength=binning.n_cells) / count
    # a cell holding one distinct score has that score as its exact mean
    mz = np.where(binning.lo == binning.hi, binning.lo, mz)
    return float(np.max(np.abs(my - mz)))


__all__ = ["IsotonicFit", "calibration_residual", "pava_isotonic", "recalibrate_empirical"]
