"""Logistic regression from scratch, an imbalance-penalised variant, and sweeps.

Both models maximise a per-row mean log-likelihood with a small ridge on the
slopes. The penalised model subtracts ``lam * |delta_b|`` (smoothed at zero),
where ``delta_b`` is the plug-in imbalance of the predicted probabilities in
within-class covariance form. Optimisation is deterministic full-batch
gradient ascent with Barzilai-Borwein trial steps and Armijo backtracking.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .calibration import calibration_residual, pava_isotonic, recalibrate_empirical
from .core import BinningSpec, validate_table
from .errors import DegenerateOutcome, NonFinite, ValidationError
from .identity import CalibrationWarning, DecompositionReport, decompose_binary

log = logging.getLogger(__name__)

Target = Literal["deltaB", "deltaB1"]


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_iter: int = 500
    tol: float = 1e-8
    ridge: float = 1e-6
    seed: int = 0
    random_init: bool = False
    # smoothing of |delta_b| at zero: sqrt(d^2 + eps^2) - eps
    penalty_eps: float = 1e-3
    armijo: float = 1e-4

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if not (self.tol > 0 and self.ridge >= 0 and self.penalty_eps > 0):
            raise ValidationError("tol and penalty_eps must be > 0, ridge >= 0")


def _design(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    # fixed C layout keeps BLAS reductions, and so the weights, bit-reproducible
    return np.ascontiguousarray(np.hstack([np.ones((x.shape[0], 1)), x]))


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def predict_proba(x, weights) -> np.ndarray:
    return _sigmoid(_design(x) @ np.asarray(weights, dtype=np.float64))


def imbalance_coefficients(y, g, target: Target = "deltaB") -> np.ndarray:
    """Row coefficients ``a`` with delta_b = sum_i a_i * p_i.

    ``deltaB`` is sum over classes of P(Y=c) Cov(p, G | Y=c); ``deltaB1`` is
    Cov(p, G | Y=1) alone.
    """
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = y.shape[0]
    a = np.zeros(n)
    classes = (0.0, 1.0) if target == "deltaB" else (1.0,)
    if target not in ("deltaB", "deltaB1"):
        raise ValidationError(f"unknown penalty target {target!r}")
    for c in classes:
        rows = y == c
        n_c = int(rows.sum())
        if n_c == 0:
            continue
        gbar = g[rows].mean()
        scale = 1.0 / n if target == "deltaB" else 1.0 / n_c
        a[rows] = (g[rows] - gbar) * scale
    return a


def make_objective(
    x,
    y,
    g=None,
    lam: float = 0.0,
    target: Target = "deltaB",
    config: TrainConfig = TrainConfig(),
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Return ``f(w) -> (J(w), dJ/dw)`` for the objective being maximised."""
    X = _design(x)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    ridge_mask = np.ones(X.shape[1])
    ridge_mask[0] = 0.0
    penalised = lam != 0.0
    if penalised:
        if g is None:
            raise ValidationError("penalised objective needs the group column")
        a = imbalance_coefficients(y, g, target)
    eps = config.penalty_eps

    def f(w: np.ndarray) -> tuple[float, np.ndarray]:
        t = X @ w
        ll = float(np.sum(y * t - np.logaddexp(0.0, t))) / n
        p = _sigmoid(t)
        grad = X.T @ (y - p) / n
        rw = ridge_mask * w
        val = ll - 0.5 * config.ridge * float(rw @ rw)
        grad = grad - config.ridge * rw
        if penalised:
            d = float(a @ p)
            root = math.sqrt(d * d + eps * eps)
            val -= lam * (root - eps)
            grad = grad - lam * (d / root) * (X.T @ (a * p * (1.0 - p)))
        return val, grad

    return f


@dataclass(frozen=True)
class FitInfo:
    iterations: int
    grad_norm: float
    converged: bool
    objective: float


def _ascend(f, w0: np.ndarray, config: TrainConfig) -> tuple[np.ndarray, FitInfo]:
    w = w0.copy()
    val, grad = f(w)
    if not math.isfinite(val):
        raise NonFinite("objective is not finite at the starting point")
    step = 1.0
    gnorm = float(np.linalg.norm(grad))
    it = 0
    for it in range(1, config.max_iter + 1):
        if gnorm <= config.tol:
            it -= 1
            break
        t = step
        slack = 4.0 * np.finfo(float).eps * abs(val)
        while True:
            w_new = w + t * grad
            val_new, grad_new = f(w_new)
            if not math.isfinite(val_new) or not np.all(np.isfinite(grad_new)):
                raise NonFinite("objective diverged")
            if val_new >= val + config.armijo * t * gnorm * gnorm - slack:
                break
            t *= 0.5
            if t < 1e-30:
                break
        s = w_new - w
        dg = grad_new - grad
        w, val, grad = w_new, val_new, grad_new
        gnorm = float(np.linalg.norm(grad))
        sy = -float(s @ dg)
        # Barzilai-Borwein length for the next trial step (ascent sign)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-10), 1e10)
    converged = gnorm <= config.tol
    if not converged:
        warnings.warn(
            f"gradient norm {gnorm:.3g} above tolerance after {config.max_iter} iterations",
            ConvergenceWarning,
            stacklevel=3,
        )
    return w, FitInfo(it, gnorm, converged, val)


def _check_inputs(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValidationError("x and y must have the same number of rows")
    if not np.all(np.isfinite(x)):
        raise NonFinite("features must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("logistic regression needs a 0/1 outcome")
    if y.min() == y.max():
        raise DegenerateOutcome("outcome is constant")
    if x.shape[0] <= x.shape[1] + 1:
        log.warning("%d rows for %d weights; the fit leans on the ridge term", x.shape[0], x.shape[1] + 1)
    return x, y


def _start(k: int, config: TrainConfig) -> np.ndarray:
    if config.random_init:
        return np.random.default_rng(config.seed).normal(0.0, 0.01, k)
    return np.zeros(k)


def fit_logistic(x, y, config: TrainConfig = TrainConfig(), return_info: bool = False):
    """Ridge-regularised logistic regression; weights are ``[intercept, slopes...]``."""
    x, y = _check_inputs(x, y)
    w, info = _ascend(make_objective(x, y, config=config), _start(x.shape[1] + 1, config), config)
    return (w, info) if return_info else w


def fit_penalized(
    x,
    y,
    g,
    lam: float,
    target: Target = "deltaB",
    config: TrainConfig = TrainConfig(),
    return_info: bool = False,
):
    """Logistic regression minus ``lam`` times the (smoothed) absolute imbalance."""
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    x, y = _check_inputs(x, y)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.shape != y.shape:
        raise ValidationError("g must align with y")
    f = make_objective(x, y, g, lam, target, config)
    w, info = _ascend(f, _start(x.shape[1] + 1, config), config)
    return (w, info) if return_info else w


# ---------------------------------------------------------------------------
# sweeps


def train_eval_split(n: int, train_fraction: float = 0.7, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_fraction < 1:
        raise ValidationError("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def weights_digest(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SweepPoint:
    key: float
    weights: np.ndarray
    weights_digest: str
    report: DecompositionReport
    raw_mse: float
    raw_calibration_residual: float
    train_penalty: float
    converged: bool

    def row(self) -> dict:
        r = self.report
        by = r.delta_b_by_class
        d0, w0 = by.get(0.0, (math.nan, 0.0))
        d1, w1 = by.get(1.0, (math.nan, 0.0))
        return {
            "key": self.key,
            "mse": r.mse,
            "raw_mse": self.raw_mse,
            "raw_calibration_residual": self.raw_calibration_residual,
            "calibration_residual": r.calibration_residual,
            "delta_c": r.delta_c,
            "delta_b": r.delta_b,
            "delta_b0": d0,
            "omega_y0": w0,
            "delta_b1": d1,
            "omega_y1": w1,
            "lhs": r.lhs,
            "budget": r.budget,
            "residual": r.residual,
            "base_rate_gap": r.base_rate_gap,
            "train_penalty": self.train_penalty,
            "converged": self.converged,
            "weights_digest": self.weights_digest,
        }


@dataclass(frozen=True, eq=False)
class SweepResult:
    kind: str
    points: list[SweepPoint] = field(default_factory=list)

    def __post_init__(self):
        keys = [p.key for p in self.points]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValidationError("sweep keys must be strictly increasing")

    @property
    def keys(self) -> list[float]:
        return [p.key for p in self.points]

    def rows(self) -> list[dict]:
        return [p.row() for p in self.points]


RAW_BINS = BinningSpec("equal-frequency", 20, "score")


def _holdout(ev: np.ndarray, calibration_fraction: float, seed: int, recalibration: str):
    """Split eval rows into (calibration, report) rows; no split when the fraction is 0."""
    if calibration_fraction == 0:
        return None, ev
    if not 0 < calibration_fraction < 1:
        raise ValidationError("calibration_fraction must lie in [0, 1)")
    if recalibration != "isotonic":
        raise ValidationError("a held-out calibration split needs isotonic recalibration")
    cal, rep = train_eval_split(ev.shape[0], calibration_fraction, seed + 1)
    return ev[cal], ev[rep]


def _evaluate(key, w, info, x, y, g, ev, cal, recalibration, train_penalty) -> SweepPoint:
    z = predict_proba(x[ev], w)
    raw = validate_table({"y": y[ev], "g": g[ev], "z": z})
    raw_mse = float(np.mean((y[ev] - z) ** 2))
    raw_resid = calibration_residual(raw, RAW_BINS)
    if cal is None:
        report = decompose_binary(recalibrate_empirical(raw, recalibration))
    else:
        # fitted elsewhere, so the reported table is only approximately calibrated
        table = raw.with_scores(pava_isotonic(predict_proba(x[cal], w), y[cal]).predict(z))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CalibrationWarning)
            report = decompose_binary(table)
    return SweepPoint(
        key=float(key),
        weights=w,
        weights_digest=weights_digest(w),
        report=report,
        raw_mse=raw_mse,
        raw_calibration_residual=raw_resid,
        train_penalty=train_penalty,
        converged=info.converged,
    )


def default_prefixes(k: int) -> list[int]:
    """0..5 features, then multiples of 10, then all ``k``."""
    out = list(range(0, min(k, 5) + 1))
    out += [m for m in range(10, k, 10) if m > 5]
    if k not in out:
        out.append(k)
    return out


def ablation_sweep(
    x,
    y,
    g,
    feature_order: Optional[Sequence[int]] = None,
    prefixes: Optional[Sequence[int]] = None,
    model: str = "logistic",
    config: TrainConfig = TrainConfig(),
    train_fraction: float = 0.7,
    seed: int = 0,
    recalibration: Literal["isotonic", "bin-mean"] = "isotonic",
    calibration_fraction: float = 0.0,
) -> SweepResult:
    """Train on growing feature prefixes; report each recalibrated eval-split decomposition.

    ``x`` must not contain the group column. Prefix 0 is the intercept-only model.
    With ``calibration_fraction`` > 0 that share of the eval split fits the
    isotonic map and the rest is reported.
    """
    if model != "logistic":
        raise ValidationError(f"unsupported model {model!r}; supply other models' scores as a CSV")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    k = x.shape[1]
    order = list(range(k)) if feature_order is None else [int(j) for j in feature_order]
    if len(set(order)) != len(order) or any(not 0 <= j < k for j in order):
        raise ValidationError("feature_order must list distinct column indices")
    prefixes = default_prefixes(len(order)) if prefixes is None else sorted(set(int(p) for p in prefixes))
    if any(not 0 <= p <= len(order) for p in prefixes):
        raise ValidationError("prefix lengths must lie in [0, len(feature_order)]")

    tr, ev = train_eval_split(y.shape[0], train_fraction, seed)
    cal, ev = _holdout(ev, calibration_fraction, seed, recalibration)
    points = []
    for p in prefixes:
        xp = np.ascontiguousarray(x[:, order[:p]])
        w, info = fit_logistic(xp[tr], y[tr], config, return_info=True)
        points.append(_evaluate(p, w, info, xp, y, g, ev, cal, recalibration, math.nan))
    return SweepResult("ablation", points)


def lambda_sweep(
    x,
    y,
    g,
    lambdas: Sequence[float],
    target: Target = "deltaB",
    config: TrainConfig = TrainConfig(),
    train_fraction: float = 0.7,
    seed: int = 0,
    recalibration: Literal["isotonic", "bin-mean"] = "isotonic",
    calibration_fraction: float = 0.0,
) -> SweepResult:
    """One penalised fit per lambda, each reported on the recalibrated eval split."""
    lambdas = [float(v) for v in lambdas]
    if any(v < 0 for v in lambdas):
        raise ValidationError("lambdas must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    tr, ev = train_eval_split(y.shape[0], train_fraction, seed)
    cal, ev = _holdout(ev, calibration_fraction, seed, recalibration)
    a = imbalance_coefficients(y[tr], g[tr], target)
    points = []
    for lam in lambdas:
        w, info = fit_penalized(x[tr], y[tr], g[tr], lam, target, config, return_info=True)
        pen = float(a @ predict_proba(x[tr], w))
        points.append(_evaluate(lam, w, info, x, y, g, ev, cal, recalibration, pen))
    return SweepResult("lambda", points)


__all__ = [
    "ConvergenceWarning",
    "FitInfo",
    "SweepPoint",
    "SweepResult",
    "TrainConfig",
    "ablation_sweep",
    "default_prefixes",
    "fit_logistic",
    "fit_penalized",
    "imbalance_coefficients",
    "lambda_sweep",
    "make_objective",
    "predict_proba",
    "train_eval_split",
    "weights_digest",
]
