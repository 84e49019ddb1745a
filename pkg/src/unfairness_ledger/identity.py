"""The accounting identity and the diagnostics built on it.

For a globally calibrated score the weighted miscalibration ``delta_c`` plus
the weighted imbalance ``delta_b`` equals a budget:
``Cov(E[G|Y], Y - E[Z|Y])`` in general, which for binary outcomes reduces to
``MSE(Z) * (P(G=1|Y=1) - P(G=1|Y=0))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibration import calibration_residual
from .core import AuditTable, Binning, BinningSpec
from .errors import NotMonotone, ValidationError
from .estimators import (
    Normalization,
    UnfairnessCurve,
    aggregate,
    base_rate_gap,
    budget_general,
    group_share_variance,
    mse,
    mse_decomposition,
    outcome_cells,
    pointwise_imbalance,
    pointwise_miscalibration,
    score_cells,
)

CALIBRATION_WARN = 1e-6


class CalibrationWarning(UserWarning):
    pass


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) or math.isinf(v) else v


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    mode: str
    n: int
    delta_c: float
    delta_b: float
    # outcome class -> (delta_b(y), omega_y(y)); delta is NaN when undefined
    delta_b_by_class: dict = field(default_factory=dict)
    budget: float = 0.0
    mse: float = 0.0
    base_rate_gap: Optional[float] = None
    general_budget: Optional[float] = None
    between_outcome_variance: Optional[float] = None
    within_outcome_variance: Optional[float] = None
    calibration_residual: float = 0.0
    score_curve: Optional[UnfairnessCurve] = None
    outcome_curve: Optional[UnfairnessCurve] = None
    binning: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def lhs(self) -> float:
        return self.delta_c + self.delta_b

    @property
    def residual(self) -> float:
        return self.lhs - self.budget

    def to_dict(self, curves: bool = True) -> dict:
        out = {
            "mode": self.mode,
            "n": self.n,
            "delta_c": _num(self.delta_c),
            "delta_b": _num(self.delta_b),
            "delta_b_by_class": {
                repr(float(k)): {"delta": _num(d), "omega": _num(w)}
                for k, (d, w) in sorted(self.delta_b_by_class.items())
            },
            "lhs": _num(self.lhs),
            "budget": _num(self.budget),
            "residual": _num(self.residual),
            "mse": _num(self.mse),
            "base_rate_gap": _num(self.base_rate_gap),
            "general_budget": _num(self.general_budget),
            "between_outcome_variance": _num(self.between_outcome_variance),
            "within_outcome_variance": _num(self.within_outcome_variance),
            "calibration_residual": _num(self.calibration_residual),
            "binning": self.binning,
            "notes": list(self.notes),
        }
        if curves:
            out["curves"] = {
                "miscalibration": None if self.score_curve is None else self.score_curve.records(),
                "imbalance": None if self.outcome_curve is None else self.outcome_curve.records(),
            }
        return out


def _by_class(curve: UnfairnessCurve) -> dict:
    return {float(v): (float(d), float(w)) for v, d, w in zip(curve.value, curve.delta, curve.omega)}


def _binning_meta(score: Binning, outcome: Binning) -> dict:
    return {
        "score": dict(score.spec.to_dict(), n_cells=score.n_cells, exact=score.exact),
        "outcome": dict(outcome.spec.to_dict(), n_cells=outcome.n_cells, exact=outcome.exact),
    }


def _calibration_note(resid: float, notes: list) -> None:
    if resid > CALIBRATION_WARN:
        msg = (
            f"score is not globally calibrated on this table (residual {resid:.3g}); "
            "the identity only holds for calibrated scores"
        )
        warnings.warn(msg, CalibrationWarning, stacklevel=3)
        notes.append(msg)


def decompose_binary(
    table: AuditTable,
    score_binning: Optional[BinningSpec] = None,
    normalization: Normalization = "population",
) -> DecompositionReport:
    """Both sides of the binary identity, budget = MSE * base-rate gap."""
    if table.outcome_kind != "binary":
        raise ValidationError("decompose_binary needs a binary outcome")
    gap = base_rate_gap(table)
    s_cells = score_cells(table, score_binning)
    y_cells = outcome_cells(table, BinningSpec.distinct("outcome"))
    sc = pointwise_miscalibration(table, s_cells, normalization)
    oc = pointwise_imbalance(table, y_cells, normalization)
    m = mse(table)
    between, within = mse_decomposition(table, y_cells)
    notes: list[str] = []
    resid = calibration_residual(table, s_cells.spec)
    _calibration_note(resid, notes)
    if not s_cells.exact:
        notes.append("score cells pool distinct scores; identity holds only approximately")
    if normalization != "population":
        notes.append("sample normalisation: identity is not exact")
    return DecompositionReport(
        mode="binary",
        n=table.n,
        delta_c=aggregate(sc),
        delta_b=aggregate(oc),
        delta_b_by_class=_by_class(oc),
        budget=m * gap,
        mse=m,
        base_rate_gap=gap,
        general_budget=budget_general(table, y_cells),
        between_outcome_variance=between,
        within_outcome_variance=within,
        calibration_residual=resid,
        score_curve=sc,
        outcome_curve=oc,
        binning=_binning_meta(s_cells, y_cells),
        notes=tuple(notes),
    )


def decompose_general(
    table: AuditTable,
    outcome_binning: Optional[BinningSpec] = None,
    score_binning: Optional[BinningSpec] = None,
    normalization: Normalization = "population",
) -> DecompositionReport:
    """Both sides of the general identity, budget = Cov(E[G|Y], Y - E[Z|Y])."""
    s_cells = score_cells(table, score_binning)
    y_cells = outcome_cells(table, outcome_binning)
    sc = pointwise_miscalibration(table, s_cells, normalization)
    oc = pointwise_imbalance(table, y_cells, normalization)
    between, within = mse_decomposition(table, y_cells)
    notes: list[str] = []
    resid = calibration_residual(table, s_cells.spec)
    _calibration_note(resid, notes)
    if not y_cells.exact:
        notes.append("outcome cells pool distinct outcomes (binning approximation); residual is not expected to vanish")
    if not s_cells.exact:
        notes.append("score cells pool distinct scores; identity holds only approximately")
    gap = None
    by_class = {}
    if table.outcome_kind == "binary":
        gap = base_rate_gap(table)
        by_class = _by_class(oc)
    gb = budget_general(table, y_cells)
    return DecompositionReport(
        mode="general",
        n=table.n,
        delta_c=aggregate(sc),
        delta_b=aggregate(oc),
        delta_b_by_class=by_class,
        budget=gb,
        mse=mse(table),
        base_rate_gap=gap,
        general_budget=gb,
        between_outcome_variance=between,
        within_outcome_variance=within,
        calibration_residual=resid,
        score_curve=sc,
        outcome_curve=oc,
        binning=_binning_meta(s_cells, y_cells),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class BudgetBound:
    lhs_abs: float
    bound_between: float
    bound_mse: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "lhs_abs": self.lhs_abs,
            "bound_between": self.bound_between,
            "bound_mse": self.bound_mse,
            "holds": self.holds,
        }


def budget_bound(
    table: AuditTable,
    outcome_binning: Optional[BinningSpec] = None,
    score_binning: Optional[BinningSpec] = None,
    tol: float = 1e-10,
) -> BudgetBound:
    """Cauchy-Schwarz chain |delta_b + delta_c| <= sd(pi) sd(Y - m) <= sd(pi) sqrt(MSE)."""
    y_cells = outcome_cells(table, outcome_binning)
    lhs = aggregate(pointwise_miscalibration(table, score_binning)) + aggregate(
        pointwise_imbalance(table, y_cells)
    )
    sd_pi = math.sqrt(max(group_share_variance(table, y_cells), 0.0))
    between, _ = mse_decomposition(table, y_cells)
    b_between = sd_pi * math.sqrt(max(between, 0.0))
    b_mse = sd_pi * math.sqrt(mse(table))
    holds = abs(lhs) <= b_between + tol and b_between <= b_mse + tol
    return BudgetBound(abs(lhs), b_between, b_mse, bool(holds))


# ---------------------------------------------------------------------------
# regression impossibility diagnostic


@dataclass(frozen=True)
class DiagnosticTolerances:
    # sum over cells of omega * |delta|, per curve
    fair: float = 0.005
    # allowed counter-trend movement of pi, as a fraction of its range
    monotone: float = 0.1
    # allowed slope excess over 1 for m between adjacent outcome cells
    lipschitz: float = 0.05
    # Var(E[G|Y]) at or below this counts as independence
    independence: float = 0.005
    # MSE at or below this counts as an oracle score
    oracle: float = 1e-8


@dataclass(frozen=True, eq=False)
class DiagnosticVerdict:
    pointwise_fair: bool
    pi_monotone: bool
    m_lipschitz: bool
    g_indep_y: bool
    oracle: bool
    inconsistent: bool
    verdict: str
    weighted_abs_miscalibration: float
    weighted_abs_imbalance: float
    pi_counter_trend: float
    max_slope: float
    group_share_variance: float
    mse: float
    cell_values: np.ndarray
    pi: np.ndarray
    m: np.ndarray

    def to_dict(self) -> dict:
        return {
            "pointwise_fair": self.pointwise_fair,
            "pi_monotone": self.pi_monotone,
            "m_lipschitz": self.m_lipschitz,
            "g_indep_y": self.g_indep_y,
            "oracle": self.oracle,
            "inconsistent": self.inconsistent,
            "verdict": self.verdict,
            "weighted_abs_miscalibration": self.weighted_abs_miscalibration,
            "weighted_abs_imbalance": self.weighted_abs_imbalance,
            "pi_counter_trend": self.pi_counter_trend,
            "max_slope": _num(self.max_slope),
            "group_share_variance": self.group_share_variance,
            "mse": self.mse,
            "cells": [
                {"value": float(v), "pi": float(p), "m": float(mm)}
                for v, p, mm in zip(self.cell_values, self.pi, self.m)
            ],
        }


def _weighted_abs(curve: UnfairnessCurve) -> float:
    return math.fsum(np.abs(curve.contributions).tolist())


def impossibility_diagnostic(
    table: AuditTable,
    outcome_binning: Optional[BinningSpec] = None,
    tolerances: DiagnosticTolerances = DiagnosticTolerances(),
    score_binning: Optional[BinningSpec] = None,
) -> DiagnosticVerdict:
    """Check the premises of the regression impossibility result on a table.

    The population conditions (pi monotone, m 1-Lipschitz) are checked on
    outcome cells, so the verdict is a finite-sample heuristic: slopes are
    taken between adjacent cell means of y.
    """
    tol = tolerances
    y_cells = outcome_cells(table, outcome_binning)
    sc = pointwise_miscalibration(table, score_binning)
    oc = pointwise_imbalance(table, y_cells)
    abs_c = _weighted_abs(sc)
    abs_b = _weighted_abs(oc)
    fair = abs_c <= tol.fair and abs_b <= tol.fair

    count = np.bincount(y_cells.cells, minlength=y_cells.n_cells)
    pi = np.bincount(y_cells.cells, weights=table.g, minlength=y_cells.n_cells) / count
    m = np.bincount(y_cells.cells, weights=table.z, minlength=y_cells.n_cells) / count
    rep = oc.value

    d = np.diff(pi)
    up = float(np.sum(np.clip(d, 0.0, None)))
    down = float(np.sum(np.clip(-d, 0.0, None)))
    pi_range = float(pi.max() - pi.min())
    counter = min(up, down)
    pi_monotone = pi_range == 0.0 or counter <= tol.monotone * pi_range

    if y_cells.n_cells > 1:
        slopes = np.abs(np.diff(m)) / np.diff(rep)
        max_slope = float(slopes.max())
    else:
        max_slope = 0.0
    m_lipschitz = max_slope <= 1.0 + tol.lipschitz

    var_pi = group_share_variance(table, y_cells)
    g_indep = var_pi <= tol.independence
    err = mse(table)
    oracle = err <= tol.oracle

    premises = pi_monotone and m_lipschitz
    inconsistent = premises and fair and not (g_indep or oracle)
    if oracle:
        text = "oracle score: the budget is zero and every fairness measure can hold"
    elif inconsistent:
        text = (
            "inconsistent: premises hold and the score looks pointwise fair, yet G is associated "
            "with Y and the score is not an oracle; check calibration and binning"
        )
    elif not premises:
        failed = [n for n, ok in (("pi not monotone", pi_monotone), ("m not 1-Lipschitz", m_lipschitz)) if not ok]
        text = (
            "impossibility premises not met (" + ", ".join(failed) + "); possibility regime, "
            "pointwise fairness may coexist with group-outcome association"
        )
    elif g_indep:
        text = "G is (approximately) independent of Y; no budget to allocate"
    else:
        text = "impossibility regime: pointwise fairness would require an oracle score or G independent of Y"
    text += " [cell-level heuristic check]"

    return DiagnosticVerdict(
        pointwise_fair=bool(fair),
        pi_monotone=bool(pi_monotone),
        m_lipschitz=bool(m_lipschitz),
        g_indep_y=bool(g_indep),
        oracle=bool(oracle),
        inconsistent=bool(inconsistent),
        verdict=text,
        weighted_abs_miscalibration=abs_c,
        weighted_abs_imbalance=abs_b,
        pi_counter_trend=counter,
        max_slope=max_slope,
        group_share_variance=var_pi,
        mse=err,
        cell_values=rep,
        pi=pi,
        m=m,
    )


# ---------------------------------------------------------------------------
# signed covariance of monotone functions


@dataclass(frozen=True)
class SignCertificate:
    covariance: float
    direction_f: int
    direction_g: int
    expected_sign: int
    holds: bool


def _direction(v: np.ndarray, name: str) -> int:
    d = np.diff(v)
    if np.all(d == 0):
        return 0
    if np.all(d >= 0):
        return 1
    if np.all(d <= 0):
        return -1
    raise NotMonotone(f"{name} is not weakly monotone")


def signed_covariance_oracle(f_values, g_values, masses=None) -> SignCertificate:
    """Covariance of two monotone sequences on a common grid, with its predicted sign.

    Uses the pairwise form ``1/2 sum_ij w_i w_j (f_i - f_j)(g_i - g_j)``, whose
    terms all share one sign, so the computed sign is reliable.
    """
    f = np.asarray(f_values, dtype=np.float64).reshape(-1)
    g = np.asarray(g_values, dtype=np.float64).reshape(-1)
    if f.shape != g.shape or f.shape[0] == 0:
        raise ValidationError("f and g must be nonempty and of equal length")
    w = np.ones_like(f) if masses is None else np.asarray(masses, dtype=np.float64).reshape(-1)
    if w.shape != f.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValidationError("masses must be nonnegative, nonzero and match f")
    w = w / w.sum()
    df = _direction(f, "f")
    dg = _direction(g, "g")
    expected = df * dg
    if expected == 0:
        cov = 0.0
    else:
        terms = np.outer(w, w) * np.subtract.outer(f, f) * np.subtract.outer(g, g)
        cov = 0.5 * math.fsum(terms.ravel().tolist())
    sign = (cov > 0) - (cov < 0)
    # a sign of 0 is allowed for nonconstant pairs only when mass sits on one grid point
    support = int(np.sum(w > 0))
    holds = sign == expected or (sign == 0 and support < 2)
    return SignCertificate(cov, df, dg, expected, bool(holds))


__all__ = [
    "BudgetBound",
    "CalibrationWarning",
    "DecompositionReport",
    "DiagnosticTolerances",
    "DiagnosticVerdict",
    "SignCertificate",
    "budget_bound",
    "decompose_binary",
    "decompose_general",
    "impossibility_diagnostic",
    "signed_covariance_oracle",
]
