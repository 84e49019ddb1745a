import math
import warnings

import numpy as np
import pytest

from unfairness_ledger.calibration import recalibrate_empirical
from unfairness_ledger.core import BinningSpec, fixture_t4, validate_table
from unfairness_ledger.errors import DegenerateOutcome, NotMonotone, ValidationError
from unfairness_ledger.identity import (
    CalibrationWarning,
    budget_bound,
    decompose_binary,
    decompose_general,
    impossibility_diagnostic,
    signed_covariance_oracle,
)
from unfairness_ledger.synth import CounterexampleSpec, gen_counterexample, random_discrete_table

FIELDS = ("delta_c", "delta_b", "budget", "mse", "base_rate_gap", "general_budget",
          "between_outcome_variance", "within_outcome_variance", "calibration_residual")


def test_t4_binary_report():
    r = decompose_binary(fixture_t4())
    assert r.delta_c == 0.125
    assert r.delta_b == 0.0
    assert r.mse == 0.125
    assert r.base_rate_gap == 1.0
    assert r.budget == 0.125
    assert abs(r.residual) <= 1e-12
    assert r.lhs == r.delta_c + r.delta_b
    assert r.budget == r.mse * r.base_rate_gap


def test_t4_general_matches_binary():
    a, b = decompose_binary(fixture_t4()), decompose_general(fixture_t4())
    for f in FIELDS:
        assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-12)


def test_oracle_table_all_zero():
    t = validate_table({"y": [0, 1, 1, 0, 1], "g": [0, 1, 0, 1, 1], "z": [0, 1, 1, 0, 1]})
    r = decompose_binary(t)
    for f in ("delta_c", "delta_b", "budget", "mse", "residual"):
        assert getattr(r, f) == 0.0
    b = budget_bound(t)
    assert (b.lhs_abs, b.bound_between, b.bound_mse) == (0.0, 0.0, 0.0)
    assert impossibility_diagnostic(t).oracle


def test_constant_score_independent_group_all_zero():
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1.0])
    g = np.array([0, 0, 1, 1, 0, 0, 1, 1.0])
    t = validate_table({"y": y, "g": g, "z": np.full(8, 0.5)})
    r = decompose_general(t)
    assert r.delta_c == 0.0 and r.delta_b == 0.0 and r.budget == pytest.approx(0.0, abs=1e-15)


def test_miscalibrated_input_warns_and_notes():
    t = validate_table({"y": [0, 1, 0, 1], "g": [0, 1, 1, 0], "z": [0.9, 0.1, 0.8, 0.2]})
    with pytest.warns(CalibrationWarning):
        r = decompose_binary(t)
    assert any("calibrat" in n for n in r.notes)
    assert r.calibration_residual > 1e-6


def test_degenerate_outcome_propagates():
    t = validate_table({"y": [1, 1], "g": [0, 1], "z": [1.0, 1.0]})
    with pytest.raises(DegenerateOutcome):
        decompose_binary(t)


def test_binary_requires_binary_kind():
    t = validate_table({"y": [0.2, 0.4], "g": [0, 1], "z": [0.3, 0.3]}, outcome_kind="continuous")
    with pytest.raises(ValidationError):
        decompose_binary(t)


@pytest.mark.parametrize("seed", range(25))
def test_exactness_and_specialisation(seed):
    t = recalibrate_empirical(random_discrete_table(np.random.default_rng(seed)))
    with warnings.catch_warnings():
        warnings.simplefilter("error", CalibrationWarning)
        a = decompose_binary(t)
        b = decompose_general(t)
    assert abs(a.residual) <= 1e-10
    assert abs(b.residual) <= 1e-10
    for f in FIELDS:
        assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-12)
    bb = budget_bound(t)
    assert bb.holds


@pytest.mark.parametrize("seed", range(10))
def test_accuracy_budget_complementarity(seed):
    rng = np.random.default_rng(seed)
    t = random_discrete_table(rng)
    coarse = recalibrate_empirical(t.with_scores(np.round(t.z * 2) / 2), "bin-mean")
    fine = recalibrate_empirical(t, "bin-mean")
    a, b = decompose_binary(fine), decompose_binary(coarse)
    lo, hi = (a, b) if a.mse < b.mse else (b, a)
    assert abs(lo.budget) <= abs(hi.budget) + 1e-15


def test_report_serialisation_round_trip():
    d = decompose_binary(fixture_t4()).to_dict()
    assert d["delta_c"] == 0.125
    assert d["delta_b_by_class"]["1.0"]["delta"] is None
    assert len(d["curves"]["miscalibration"]) == 3


def test_counterexample_general_decomposition():
    spec = CounterexampleSpec(n=200_000, seed=0)
    t = gen_counterexample(spec)
    r = decompose_general(t, spec.outcome_binning())
    assert abs(r.delta_c) <= 0.005
    assert abs(r.delta_b) <= 0.005
    assert abs(r.budget) <= 0.005
    b = budget_bound(t, spec.outcome_binning())
    assert b.holds
    assert b.bound_mse == pytest.approx(0.4 * math.sqrt(1 / 48), abs=0.002)


def test_counterexample_diagnostic():
    spec = CounterexampleSpec(n=200_000, seed=0)
    v = impossibility_diagnostic(gen_counterexample(spec), spec.outcome_binning())
    assert v.pi_monotone
    assert not v.m_lipschitz
    assert v.pointwise_fair
    assert not v.g_indep_y
    assert not v.inconsistent
    assert "possibility regime" in v.verdict
    assert "heuristic" in v.verdict


def test_independent_group_diagnostic():
    rng = np.random.default_rng(4)
    n = 20_000
    y = (rng.random(n) < 0.4).astype(float)
    g = (rng.random(n) < 0.5).astype(float)
    t = validate_table({"y": y, "g": g, "z": np.full(n, y.mean())})
    assert impossibility_diagnostic(t).g_indep_y


def test_diagnostic_flags_unfair_calibrated_score():
    # binary y: pi is monotone and m is 1-Lipschitz on two cells, G depends on Y
    t = recalibrate_empirical(random_discrete_table(np.random.default_rng(11), n=5000))
    v = impossibility_diagnostic(t)
    assert v.pi_monotone and v.m_lipschitz
    assert not v.inconsistent
    if not v.g_indep_y:
        assert not v.pointwise_fair or v.oracle


def test_sign_certificate():
    x = np.linspace(0, 1, 11)
    up = signed_covariance_oracle(x, x)
    assert up.holds and up.covariance > 0 and up.expected_sign == 1
    down = signed_covariance_oracle(x, -x**2)
    assert down.holds and down.covariance < 0
    flat = signed_covariance_oracle(np.full(11, 3.0), x)
    assert flat.covariance == 0.0 and flat.holds
    with pytest.raises(NotMonotone):
        signed_covariance_oracle([0, 1, 0], [0, 1, 2])


def test_sign_certificate_matches_plain_covariance():
    rng = np.random.default_rng(0)
    f = np.sort(rng.random(30))
    g = np.sort(rng.random(30))[::-1]
    w = rng.random(30)
    c = signed_covariance_oracle(f, g, w)
    w = w / w.sum()
    plain = np.dot(w, f * g) - np.dot(w, f) * np.dot(w, g)
    assert c.covariance == pytest.approx(plain, abs=1e-14)


def test_binned_outcomes_note_approximation():
    rng = np.random.default_rng(0)
    y = rng.random(3000)
    g = (rng.random(3000) < 0.3 + 0.4 * y).astype(float)
    t = validate_table({"y": y, "g": g, "z": np.full(3000, y.mean())}, outcome_kind="continuous")
    r = decompose_general(t, BinningSpec("equal-frequency", 10, "outcome"))
    assert any("binning" in n for n in r.notes)
