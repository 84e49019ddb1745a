"""Seeded synthetic populations and an enumeration oracle.

Random streams: a ``numpy.random.SeedSequence(seed)`` is spawned into one
child per generated column (in a fixed, documented order) and each child
drives its own PCG64 ``Generator``. Tables are therefore reproducible from
the seed alone and adding a column never perturbs the others.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .core import AuditTable, BinningSpec, bin_assign, validate_table
from .errors import NonIntegralCounts, TooLarge, ValidationError
from .identity import DecompositionReport

BRUTE_FORCE_MAX_ROWS = 10_000


def column_streams(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(names, children)}


# ---------------------------------------------------------------------------
# binary populations


@dataclass(frozen=True)
class BinaryPopSpec:
    """Population over a finite score support.

    ``p_group[i]`` is P(G=1 | Z=z_i). ``p_outcome_g1[i]`` is P(Y=1 | Z=z_i, G=1);
    the G=0 rate is then fixed by calibration. Leaving it unset makes the
    population calibrated within each group.
    """

    support: tuple[tuple[float, float], ...]
    p_group: tuple[float, ...]
    n: int
    seed: int = 0
    mode: Literal["exact", "sampled"] = "exact"
    p_outcome_g1: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "support", tuple((float(z), float(m)) for z, m in self.support))
        object.__setattr__(self, "p_group", tuple(float(p) for p in self.p_group))
        if self.p_outcome_g1 is not None:
            object.__setattr__(self, "p_outcome_g1", tuple(float(q) for q in self.p_outcome_g1))
        k = len(self.support)
        if k == 0:
            raise ValidationError("support must be nonempty")
        if len(self.p_group) != k:
            raise ValidationError("p_group must have one entry per support point")
        if self.p_outcome_g1 is not None and len(self.p_outcome_g1) != k:
            raise ValidationError("p_outcome_g1 must have one entry per support point")
        masses = [m for _, m in self.support]
        if any(m < 0 for m in masses) or not math.isclose(math.fsum(masses), 1.0, abs_tol=1e-12):
            raise ValidationError("support masses must be nonnegative and sum to 1")
        if any(not 0.0 <= z <= 1.0 for z, _ in self.support):
            raise ValidationError("support scores must lie in [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in self.p_group):
            raise ValidationError("p_group entries must lie in [0, 1]")
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.mode not in ("exact", "sampled"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        for i in range(k):
            if self.p_group[i] >= 1.0 and self.p_outcome_g1 is not None:
                if abs(self.p_outcome_g1[i] - self.support[i][0]) > 1e-12:
                    raise ValidationError(f"support point {i}: all rows are group 1, so P(Y=1|G=1) must equal z")
            q0 = self.outcome_rates(i)[0]
            if not -1e-12 <= q0 <= 1 + 1e-12:
                raise ValidationError(f"support point {i}: implied P(Y=1|G=0) = {q0} is outside [0, 1]")

    def outcome_rates(self, i: int) -> tuple[float, float]:
        """(P(Y=1|z_i, G=0), P(Y=1|z_i, G=1))."""
        z = self.support[i][0]
        p = self.p_group[i]
        q1 = z if self.p_outcome_g1 is None else self.p_outcome_g1[i]
        if p >= 1.0:
            return (z, z)
        q0 = (z - p * q1) / (1.0 - p)
        return (q0, q1)


def _integral(x: float, what: str) -> int:
    r = round(x)
    if abs(x - r) > 1e-9:
        raise NonIntegralCounts(f"{what} = {x} is not an integer")
    return int(r)


def gen_binary_population(spec: BinaryPopSpec) -> AuditTable:
    if spec.mode == "exact":
        z_col, g_col, y_col = [], [], []
        for i, (z, mass) in enumerate(spec.support):
            n_i = _integral(spec.n * mass, f"rows at z={z}")
            n_i1 = _integral(n_i * spec.p_group[i], f"group-1 rows at z={z}")
            _, q1 = spec.outcome_rates(i)
            pos1 = _integral(n_i1 * q1, f"group-1 positives at z={z}")
            pos_total = _integral(n_i * z, f"positives at z={z}")
            pos0 = pos_total - pos1
            if not 0 <= pos0 <= n_i - n_i1:
                raise NonIntegralCounts(f"group-0 positives at z={z} out of range")
            for g, n_g, pos in ((0, n_i - n_i1, pos0), (1, n_i1, pos1)):
                z_col += [z] * n_g
                g_col += [g] * n_g
                y_col += [0] * (n_g - pos) + [1] * pos
        return validate_table({"y": y_col, "g": g_col, "z": z_col})

    rng = column_streams(spec.seed, ("z", "g", "y"))
    zs = np.array([z for z, _ in spec.support])
    masses = np.array([m for _, m in spec.support])
    idx = rng["z"].choice(len(zs), size=spec.n, p=masses)
    p_g = np.array(spec.p_group)[idx]
    g = (rng["g"].random(spec.n) < p_g).astype(np.float64)
    rates = np.clip(np.array([spec.outcome_rates(i) for i in range(len(zs))]), 0.0, 1.0)
    q = np.where(g == 1.0, rates[idx, 1], rates[idx, 0])
    y = (rng["y"].random(spec.n) < q).astype(np.float64)
    return validate_table({"y": y, "g": g, "z": zs[idx]})


# ---------------------------------------------------------------------------
# threshold counterexample


@dataclass(frozen=True)
class CounterexampleSpec:
    """Y ~ Unif[0,1], X = 1{Y > threshold}, Z = E[Y|X], G depends on X only."""

    n: int = 200_000
    seed: int = 0
    p_low: float = 0.1
    p_high: float = 0.9
    threshold: float = 0.5
    analytic_scores: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if not (0 <= self.p_low <= 1 and 0 <= self.p_high <= 1):
            raise ValidationError("p_low and p_high must lie in [0, 1]")
        if not 0 < self.threshold < 1:
            raise ValidationError("threshold must lie in (0, 1)")

    def outcome_binning(self, count: int = 20) -> BinningSpec:
        """Equal-width outcome cells on [0, 1]; an edge falls on the threshold when it is k/count."""
        return BinningSpec("equal-width", count, "outcome", bounds=(0.0, 1.0))


def gen_counterexample(spec: CounterexampleSpec = CounterexampleSpec()) -> AuditTable:
    """Streams, in order: ``y``, ``g``."""
    rng = column_streams(spec.seed, ("y", "g"))
    y = rng["y"].random(spec.n)
    x = (y > spec.threshold).astype(np.float64)
    if spec.analytic_scores:
        lo, hi = spec.threshold / 2.0, (1.0 + spec.threshold) / 2.0
    else:
        if x.min() == x.max():
            raise ValidationError("sample fell entirely on one side of the threshold")
        lo, hi = y[x == 0].mean(), y[x == 1].mean()
    z = np.where(x == 1.0, hi, lo)
    p = np.where(x == 1.0, spec.p_high, spec.p_low)
    g = (rng["g"].random(spec.n) < p).astype(np.float64)
    return validate_table(
        {"y": y, "g": g, "z": z, "x": x.reshape(-1, 1), "feature_names": ("x",)},
        outcome_kind="continuous",
    )


# ---------------------------------------------------------------------------
# sufficient conditions for pointwise fairness


@dataclass(frozen=True)
class SufficientConditionsReport:
    a1: bool
    a2: bool
    a3: bool
    a4: bool
    within_w_variance: float
    max_w_group_gap: float
    max_y_group_tv: float
    group_share_variance_w: float

    @property
    def all_hold(self) -> bool:
        return self.a1 and self.a2 and self.a3 and self.a4

    def to_dict(self) -> dict:
        return {
            "A1": self.a1,
            "A2": self.a2,
            "A3": self.a3,
            "A4": self.a4,
            "within_w_variance": self.within_w_variance,
            "max_w_group_gap": self.max_w_group_gap,
            "max_y_group_tv": self.max_y_group_tv,
            "group_share_variance_w": self.group_share_variance_w,
        }


def _w_cells(table: AuditTable, w_columns) -> tuple[np.ndarray, int]:
    cols = []
    for c in w_columns:
        if isinstance(c, str):
            if c == "y":
                cols.append(np.asarray(table.y))
            else:
                cols.append(table.feature(c))
        else:
            cols.append(np.asarray(c, dtype=np.float64))
    W = np.column_stack(cols)
    _, inv = np.unique(W, axis=0, return_inverse=True)
    inv = inv.reshape(-1).astype(np.int64)
    return inv, int(inv.max()) + 1


def check_sufficient_conditions(
    table: AuditTable,
    w_columns,
    outcome_binning: Optional[BinningSpec] = None,
    positivity_tol: float = 1e-3,
    equality_tol: float = 0.01,
) -> SufficientConditionsReport:
    """Measure the four sufficient conditions for pointwise fairness with score E[Y|W].

    ``w_columns`` names discrete feature columns (or ``"y"``), or passes arrays.
    A1 and A4 are positivity checks (value > ``positivity_tol``); A2 and A3
    are equality checks (value <= ``equality_tol``).
    """
    wc, k = _w_cells(table, w_columns)
    y, g = np.asarray(table.y), np.asarray(table.g)
    n = table.n
    cnt = np.bincount(wc, minlength=k).astype(float)
    ey = np.bincount(wc, weights=y, minlength=k) / cnt
    eyy = np.bincount(wc, weights=(y - ey[wc]) ** 2, minlength=k) / cnt
    within = float(np.sum(cnt / n * eyy))

    n1 = np.bincount(wc, weights=g, minlength=k)
    s1 = np.bincount(wc, weights=y * g, minlength=k)
    both = (n1 > 0) & (cnt - n1 > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        gaps = np.abs(s1 / n1 - (ey * cnt - s1) / (cnt - n1))
    max_gap = float(np.max(gaps[both], initial=0.0))

    if outcome_binning is None and table.outcome_kind == "binary":
        outcome_binning = BinningSpec.distinct("outcome")
    elif outcome_binning is None:
        outcome_binning = BinningSpec("equal-frequency", 20, "outcome")
    yb = bin_assign(y, outcome_binning)
    max_tv = 0.0
    for c in range(yb.n_cells):
        rows = yb.cells == c
        gc = g[rows]
        if gc.min() == gc.max():
            continue
        w1 = np.bincount(wc[rows][gc == 1], minlength=k) / (gc == 1).sum()
        w0 = np.bincount(wc[rows][gc == 0], minlength=k) / (gc == 0).sum()
        max_tv = max(max_tv, 0.5 * float(np.abs(w1 - w0).sum()))

    pi_w = (n1 / cnt)[wc]
    var_pi_w = float(np.mean((pi_w - pi_w.mean()) ** 2))
    return SufficientConditionsReport(
        a1=within > positivity_tol,
        a2=max_gap <= equality_tol,
        a3=max_tv <= equality_tol,
        a4=var_pi_w > positivity_tol,
        within_w_variance=within,
        max_w_group_gap=max_gap,
        max_y_group_tv=max_tv,
        group_share_variance_w=var_pi_w,
    )


# ---------------------------------------------------------------------------
# enumeration oracle (shares no estimator code)


def _enumerate(keys, targets, groups):
    """Per key: [rows, rows g=1, sum target g=1, rows g=0, sum target g=0]."""
    acc = defaultdict(lambda: [0, 0, 0.0, 0, 0.0])
    for k, t, gg in zip(keys, targets, groups):
        a = acc[k]
        a[0] += 1
        if gg == 1:
            a[1] += 1
            a[2] += t
        else:
            a[3] += 1
            a[4] += t
    return acc


def _weighted_gap_sum(acc, n):
    total = []
    by_key = {}
    for k in sorted(acc):
        rows, n1, s1, n0, s0 = acc[k]
        p = n1 / rows
        omega = p * (1 - p) * rows / n
        if n1 and n0:
            d = s1 / n1 - s0 / n0
            total.append(d * omega)
        else:
            d = math.nan
        by_key[k] = (d, omega)
    return math.fsum(total), by_key


def brute_force_report(table: AuditTable) -> DecompositionReport:
    """Every term of the identity by direct enumeration over rows."""
    n = table.n
    if n > BRUTE_FORCE_MAX_ROWS:
        raise TooLarge(f"brute force is limited to {BRUTE_FORCE_MAX_ROWS} rows, got {n}")
    ys = [float(v) for v in table.y]
    gs = [int(v) for v in table.g]
    zs = [float(v) for v in table.z]

    delta_c, _ = _weighted_gap_sum(_enumerate(zs, ys, gs), n)
    delta_b, by_y = _weighted_gap_sum(_enumerate(ys, zs, gs), n)

    err = math.fsum((a - b) ** 2 for a, b in zip(ys, zs)) / n

    # E[G|Y], E[Z|Y] by enumeration
    grp = defaultdict(lambda: [0, 0.0, 0.0])
    for y, g, z in zip(ys, gs, zs):
        e = grp[y]
        e[0] += 1
        e[1] += g
        e[2] += z
    pi = [grp[y][1] / grp[y][0] for y in ys]
    r = [y - grp[y][2] / grp[y][0] for y in ys]
    mpi = math.fsum(pi) / n
    mr = math.fsum(r) / n
    general = math.fsum((a - mpi) * (b - mr) for a, b in zip(pi, r)) / n
    between = math.fsum((b - mr) ** 2 for b in r) / n
    within = math.fsum((z - grp[y][2] / grp[y][0]) ** 2 for y, z in zip(ys, zs)) / n

    by_z = defaultdict(lambda: [0, 0.0, 0.0])
    for y, z in zip(ys, zs):
        e = by_z[z]
        e[0] += 1
        e[1] += y
        e[2] += z
    calib = max(abs(e[1] / e[0] - e[2] / e[0]) for e in by_z.values())

    gap = None
    budget = general
    if table.outcome_kind == "binary":
        n_pos = sum(1 for y in ys if y == 1)
        if 0 < n_pos < n:
            g_pos = sum(g for y, g in zip(ys, gs) if y == 1)
            g_neg = sum(g for y, g in zip(ys, gs) if y == 0)
            gap = g_pos / n_pos - g_neg / (n - n_pos)
            budget = err * gap

    return DecompositionReport(
        mode="brute-force",
        n=n,
        delta_c=delta_c,
        delta_b=delta_b,
        delta_b_by_class=by_y if table.outcome_kind == "binary" else {},
        budget=budget,
        mse=err,
        base_rate_gap=gap,
        general_budget=general,
        between_outcome_variance=between,
        within_outcome_variance=within,
        calibration_residual=calib,
        binning={"score": "distinct values", "outcome": "distinct values"},
    )


def random_discrete_table(
    rng: np.random.Generator,
    n: Optional[int] = None,
    levels: Optional[int] = None,
) -> AuditTable:
    """Random binary table with a few score levels and group-dependent outcomes.

    Scores are neither calibrated nor within-group calibrated; recalibrate
    before expecting the identity to hold.
    """
    n = int(rng.integers(50, 5001)) if n is None else n
    levels = int(rng.integers(2, 12)) if levels is None else levels
    grid = np.sort(rng.choice(np.arange(1, 20) / 20.0, size=levels, replace=False))
    z = rng.choice(grid, size=n)
    shift = rng.uniform(-0.3, 0.3)
    p_g = np.clip(0.5 + rng.uniform(-0.4, 0.4) * (z - 0.5) * 2, 0.05, 0.95)
    g = (rng.random(n) < p_g).astype(float)
    q = np.clip(z + shift * (g - 0.5) + rng.normal(0, 0.05, n), 0, 1)
    y = (rng.random(n) < q).astype(float)
    # guarantee both groups and both outcomes
    g[0], g[1] = 0.0, 1.0
    y[2], y[3] = 0.0, 1.0
    return validate_table({"y": y, "g": g, "z": z})


# ---------------------------------------------------------------------------
# feature data for the training experiments


@dataclass(frozen=True)
class ExperimentSpec:
    """Features for ablation and penalty sweeps.

    Group membership shifts the first ``n_proxies`` features, and the outcome
    is logistic in all features, so base rates differ by group and a model
    that leans on the proxies is imbalanced. With ``deterministic`` the
    outcome is the sign of the linear index instead of a Bernoulli draw.
    """

    n: int = 20_000
    seed: int = 0
    n_features: int = 6
    n_proxies: int = 2
    group_rate: float = 0.4
    group_shift: float = 1.0
    deterministic: bool = False


def gen_experiment_data(spec: ExperimentSpec = ExperimentSpec()) -> dict[str, np.ndarray]:
    """Streams, in order: ``g``, ``x``, ``y``. Returns ``x``, ``y``, ``g`` and ``coef``."""
    if spec.n_features < 1 or not 0 <= spec.n_proxies <= spec.n_features:
        raise ValidationError("need n_features >= 1 and 0 <= n_proxies <= n_features")
    rng = column_streams(spec.seed, ("g", "x", "y"))
    g = (rng["g"].random(spec.n) < spec.group_rate).astype(np.float64)
    x = rng["x"].standard_normal((spec.n, spec.n_features))
    x[:, : spec.n_proxies] += spec.group_shift * g[:, None]
    # decreasing signal strength so longer prefixes keep adding accuracy
    coef = 1.5 / np.arange(1, spec.n_features + 1)
    index = x @ coef - spec.group_shift * spec.group_rate * coef[: spec.n_proxies].sum()
    if spec.deterministic:
        y = (index > 0).astype(np.float64)
    else:
        y = (rng["y"].random(spec.n) < 1.0 / (1.0 + np.exp(-index))).astype(np.float64)
    return {"x": x, "y": y, "g": g, "coef": coef}


__all__ = [
    "BRUTE_FORCE_MAX_ROWS",
    "BinaryPopSpec",
    "CounterexampleSpec",
    "ExperimentSpec",
    "SufficientConditionsReport",
    "brute_force_report",
    "check_sufficient_conditions",
    "column_streams",
    "gen_binary_population",
    "gen_counterexample",
    "gen_experiment_data",
    "random_discrete_table",
]
