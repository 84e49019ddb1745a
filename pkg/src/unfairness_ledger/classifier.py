"""Classifier audit: group-wise confusion rates and the classifier form of the identity.

A binary classifier ``yhat`` induces the two-valued calibrated score
``z = P(Y=1 | yhat)``, i.e. ``z1 = PPV`` for predicted positives and
``z0 = FOR`` for predicted negatives. The identity then reads, term by term,
in terms of group gaps in PPV, FOR, TPR and FPR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AuditTable, Binning, BinningSpec, validate_table
from .errors import DegenerateClassifier, DegenerateOutcome, ValidationError
from .estimators import UnfairnessCurve
from .identity import DecompositionReport


def _rate(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def _nz(v: float) -> float:
    return 0.0 if math.isnan(v) else v


@dataclass(frozen=True)
class GroupRates:
    ppv: float
    for_: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class ClassifierStats:
    overall: GroupRates
    group0: GroupRates
    group1: GroupRates
    z1: float
    z0: float
    mse_derived: float
    mse_conditional_variance: float
    omega_yhat: tuple[float, float]  # (omega at yhat=0, omega at yhat=1)
    omega_y: tuple[float, float]  # (omega at y=0, omega at y=1)
    base_rate_gap: float
    n: int
    p_yhat1: float
    p_y1: float

    @property
    def ppv(self) -> float:
        return self.overall.ppv

    @property
    def for_(self) -> float:
        return self.overall.for_

    @property
    def d_ppv(self) -> float:
        return self.group1.ppv - self.group0.ppv

    @property
    def d_for(self) -> float:
        return self.group1.for_ - self.group0.for_

    @property
    def d_tpr(self) -> float:
        return self.group1.tpr - self.group0.tpr

    @property
    def d_fpr(self) -> float:
        return self.group1.fpr - self.group0.fpr

    def to_dict(self) -> dict:
        def rates(r: GroupRates) -> dict:
            return {k: (None if math.isnan(v) else v) for k, v in
                    (("ppv", r.ppv), ("for", r.for_), ("tpr", r.tpr), ("fpr", r.fpr))}

        def num(v):
            return None if math.isnan(v) else v

        return {
            "overall": rates(self.overall),
            "group0": rates(self.group0),
            "group1": rates(self.group1),
            "z0": self.z0,
            "z1": self.z1,
            "d_ppv": num(self.d_ppv),
            "d_for": num(self.d_for),
            "d_tpr": num(self.d_tpr),
            "d_fpr": num(self.d_fpr),
            "mse_derived": self.mse_derived,
            "omega_yhat": list(self.omega_yhat),
            "omega_y": list(self.omega_y),
            "base_rate_gap": self.base_rate_gap,
        }


def _check01(name, a):
    if not np.all((a == 0) | (a == 1)):
        raise ValidationError(f"{name} must be 0/1")


def classifier_stats(y, yhat, g) -> ClassifierStats:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if not (y.shape == yhat.shape == g.shape) or y.shape[0] == 0:
        raise ValidationError("y, yhat and g must be nonempty and row-aligned")
    for name, a in (("y", y), ("yhat", yhat), ("g", g)):
        _check01(name, a)
    n = y.shape[0]

    # counts[g, yhat, y]
    counts = np.zeros((2, 2, 2))
    np.add.at(counts, (g.astype(int), yhat.astype(int), y.astype(int)), 1.0)
    tot = counts.sum(axis=0)  # [yhat, y]

    if tot[1].sum() == 0 or tot[0].sum() == 0:
        raise DegenerateClassifier("predicted class is constant; PPV or FOR undefined")
    if tot[:, 1].sum() == 0 or tot[:, 0].sum() == 0:
        raise DegenerateOutcome("both outcome classes must be present")
    if counts[1].sum() == 0 or counts[0].sum() == 0:
        raise ValidationError("both groups must be present")

    def rates(c) -> GroupRates:
        return GroupRates(
            ppv=_rate(c[1, 1], c[1].sum()),
            for_=_rate(c[0, 1], c[0].sum()),
            tpr=_rate(c[1, 1], c[:, 1].sum()),
            fpr=_rate(c[1, 0], c[:, 0].sum()),
        )

    overall = rates(tot)
    ppv, for_ = overall.ppv, overall.for_
    p_fp = tot[1, 0] / n
    p_fn = tot[0, 1] / n
    mse_joint = p_fp * ppv + p_fn * (1.0 - for_)
    p_yhat1 = tot[1].sum() / n
    mse_condvar = p_yhat1 * ppv * (1 - ppv) + (1 - p_yhat1) * for_ * (1 - for_)

    def omega(n_cell: float, n1_cell: float) -> float:
        if n_cell == 0:
            return 0.0
        p = n1_cell / n_cell
        return p * (1 - p) * n_cell / n

    omega_yhat = (omega(tot[0].sum(), counts[1, 0].sum()), omega(tot[1].sum(), counts[1, 1].sum()))
    omega_y = (omega(tot[:, 0].sum(), counts[1, :, 0].sum()), omega(tot[:, 1].sum(), counts[1, :, 1].sum()))
    gap = counts[1, :, 1].sum() / tot[:, 1].sum() - counts[1, :, 0].sum() / tot[:, 0].sum()

    return ClassifierStats(
        overall=overall,
        group0=rates(counts[0]),
        group1=rates(counts[1]),
        z1=ppv,
        z0=for_,
        mse_derived=float(mse_joint),
        mse_conditional_variance=float(mse_condvar),
        omega_yhat=omega_yhat,
        omega_y=omega_y,
        base_rate_gap=float(gap),
        n=n,
        p_yhat1=float(p_yhat1),
        p_y1=float(tot[:, 1].sum() / n),
    )


def derived_score_table(y, yhat, g) -> AuditTable:
    """AuditTable whose score is the classifier-derived P(Y=1 | yhat)."""
    st = classifier_stats(y, yhat, g)
    yhat = np.asarray(yhat, dtype=np.float64)
    z = np.where(yhat == 1.0, st.z1, st.z0)
    return validate_table({"y": y, "g": g, "z": z, "yhat": yhat})


def _two_cell_curve(kind, values, deltas, omegas, masses, sizes, n1, applied_to) -> UnfairnessCurve:
    order = np.argsort(values, kind="stable")
    values = np.asarray(values, dtype=np.float64)[order]
    delta = np.asarray(deltas, dtype=np.float64)[order]
    omega = np.asarray(omegas, dtype=np.float64)[order]
    delta = np.where(omega > 0, delta, np.nan)
    contrib = np.where(omega > 0, np.nan_to_num(delta) * omega, 0.0)
    # cell ids are not meaningful here; the binning carries only value ranges
    binning = Binning(
        cells=np.zeros(0, dtype=np.int64),
        n_cells=len(values),
        lo=values,
        hi=values,
        spec=BinningSpec.distinct(applied_to),
    )
    return UnfairnessCurve(
        kind=kind,
        value=values,
        delta=delta,
        omega=omega,
        mass=np.asarray(masses, dtype=np.float64)[order],
        n_cell=np.asarray(sizes, dtype=np.int64)[order],
        n_group1=np.asarray(n1, dtype=np.int64)[order],
        weighted_cov=contrib,
        binning=binning,
    )


def classifier_decompose(stats_or_y, yhat=None, g=None) -> DecompositionReport:
    """Classifier identity from the closed-form group-rate expressions.

    Accepts either a :class:`ClassifierStats` or raw ``(y, yhat, g)`` columns.
    """
    if isinstance(stats_or_y, ClassifierStats):
        st = stats_or_y
        raw = None
    else:
        raw = (np.asarray(stats_or_y, dtype=np.float64), np.asarray(yhat, dtype=np.float64), np.asarray(g, dtype=np.float64))
        st = classifier_stats(*raw)

    w0, w1 = st.omega_yhat
    v0, v1 = st.omega_y
    d_ppv, d_for, d_tpr, d_fpr = st.d_ppv, st.d_for, st.d_tpr, st.d_fpr
    spread = st.ppv - st.for_

    delta_c = math.fsum([w1 * _nz(d_ppv) if w1 > 0 else 0.0, w0 * _nz(d_for) if w0 > 0 else 0.0])
    db1 = spread * d_tpr
    db0 = spread * d_fpr
    delta_b = spread * math.fsum([v1 * _nz(d_tpr) if v1 > 0 else 0.0, v0 * _nz(d_fpr) if v0 > 0 else 0.0])

    n = st.n
    p1 = st.p_yhat1
    py1 = st.p_y1
    score_curve = outcome_curve = None
    if raw is not None:
        yv, yh, gv = raw
        n1_yhat = (int(gv[yh == 0].sum()), int(gv[yh == 1].sum()))
        n1_y = (int(gv[yv == 0].sum()), int(gv[yv == 1].sum()))
    else:
        n1_yhat = n1_y = (0, 0)
    if st.z0 == st.z1:
        notes = ("derived score is constant (PPV == FOR)",)
    else:
        notes = ()
        score_curve = _two_cell_curve(
            "miscalibration", [st.z0, st.z1], [d_for, d_ppv], [w0, w1],
            [1 - p1, p1], [round((1 - p1) * n), round(p1 * n)], n1_yhat, "score",
        )
    outcome_curve = _two_cell_curve(
        "imbalance", [0.0, 1.0], [db0, db1], [v0, v1],
        [1 - py1, py1], [round((1 - py1) * n), round(py1 * n)], n1_y, "outcome",
    )
    by_class = {
        0.0: (db0 if v0 > 0 else math.nan, v0),
        1.0: (db1 if v1 > 0 else math.nan, v1),
    }
    return DecompositionReport(
        mode="classifier",
        n=n,
        delta_c=delta_c,
        delta_b=delta_b,
        delta_b_by_class=by_class,
        budget=st.mse_derived * st.base_rate_gap,
        mse=st.mse_derived,
        base_rate_gap=st.base_rate_gap,
        calibration_residual=0.0,
        score_curve=score_curve,
        outcome_curve=outcome_curve,
        binning={"score": "derived two-level score", "outcome": "outcome classes"},
        notes=notes,
    )


__all__ = ["ClassifierStats", "GroupRates", "classifier_decompose", "classifier_stats", "derived_score_table"]
