import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unfairness_ledger.calibration import calibration_residual, pava_isotonic, recalibrate_empirical
from unfairness_ledger.core import fixture_t4, validate_table
from unfairness_ledger.errors import EmptyInput, ValidationError
from unfairness_ledger.estimators import mse
from unfairness_ledger.synth import random_discrete_table


def brute_force_isotonic_sse(t, w):
    """Smallest weighted SSE over all contiguous block partitions whose block means increase."""
    t, w = list(map(float, t)), list(map(float, w))
    n = len(t)
    sw, swt = [0.0], [0.0]
    for ti, wi in zip(t, w):
        sw.append(sw[-1] + wi)
        swt.append(swt[-1] + wi * ti)
    best = float("inf")
    for mask in range(1 << (n - 1)):
        cuts = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        prev = -float("inf")
        sse = 0.0
        ok = True
        for a, b in zip(cuts, cuts[1:]):
            m = (swt[b] - swt[a]) / (sw[b] - sw[a])
            if m < prev - 1e-15:
                ok = False
                break
            prev = m
            sse += sum(w[i] * (t[i] - m) ** 2 for i in range(a, b))
        if ok:
            best = min(best, sse)
    return best


def fitted_sse(t, w):
    fit = pava_isotonic(np.arange(len(t)), t, w)
    f = fit.predict(np.arange(len(t)))
    return float(np.dot(w, (t - f) ** 2)), f


def test_worked_example():
    fit = pava_isotonic([0.1, 0.2, 0.3, 0.4], [1, 0, 0, 1])
    np.testing.assert_allclose(fit.predict([0.1, 0.2, 0.3, 0.4]), [1 / 3, 1 / 3, 1 / 3, 1], atol=1e-15)
    assert fit.n_blocks == 2


def test_monotone_targets_unchanged():
    t = np.array([0.0, 0.2, 0.2, 0.5, 0.9])
    fit = pava_isotonic(np.arange(5), t)
    np.testing.assert_array_equal(fit.predict(np.arange(5)), t)


def test_constant_targets_single_block():
    fit = pava_isotonic([3, 1, 2], [0.4, 0.4, 0.4])
    assert fit.n_blocks == 1
    assert fit.values[0] == pytest.approx(0.4, abs=1e-15)


def test_prediction_is_stepwise_and_clamped():
    fit = pava_isotonic([0.1, 0.2, 0.3, 0.4], [1, 0, 0, 1])
    assert fit.predict([-5.0, 0.35, 0.4, 9.0]).tolist() == pytest.approx([1 / 3, 1 / 3, 1.0, 1.0])


def test_ties_are_pooled():
    fit = pava_isotonic([0.5, 0.5, 0.2], [1, 0, 1])
    p = fit.predict([0.5, 0.5])
    assert p[0] == p[1]


def test_errors():
    with pytest.raises(EmptyInput):
        pava_isotonic([], [])
    with pytest.raises(ValidationError):
        pava_isotonic([1, 2], [1])
    with pytest.raises(ValidationError):
        pava_isotonic([1, 2], [1, 0], [1, 0])


def test_exhaustive_oracle_small_inputs():
    """All target vectors over {0, 1/2, 1} with n <= 8 and unit weights, plus mixed weights."""
    levels = (0.0, 0.5, 1.0)
    checked = 0
    for n in range(1, 9):
        for t in itertools.product(levels, repeat=n):
            t = np.array(t)
            for w in (np.ones(n), 1.0 + np.arange(n) % 3):
                sse, f = fitted_sse(t, w)
                assert np.all(np.diff(f) >= 0)
                assert abs(sse - brute_force_isotonic_sse(t, w)) <= 1e-12
                checked += 1
    assert checked == 2 * sum(3 ** n for n in range(1, 9))


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 1), st.floats(-2, 2), st.floats(0.1, 5)), min_size=1, max_size=60)
)
def test_monotone_and_mean_preserving(rows):
    s, t, w = (np.array(c) for c in zip(*rows))
    fit = pava_isotonic(s, t, w)
    f = fit.predict(s)
    assert np.all(np.diff(fit.values) > 0)
    assert abs(np.dot(w, f) / w.sum() - np.dot(w, t) / w.sum()) <= 1e-12 * max(1.0, np.abs(t).max())
    # each block value is the weighted mean of its members
    for k in range(fit.n_blocks):
        rows_k = (s >= fit.breakpoints[k]) & (s <= fit.upper[k])
        assert fit.values[k] == pytest.approx(np.dot(w[rows_k], t[rows_k]) / w[rows_k].sum(), abs=1e-12)


def test_recalibrate_fixture_is_fixed_point():
    t = fixture_t4()
    for mode in ("isotonic", "bin-mean"):
        assert recalibrate_empirical(t, mode).z.tolist() == t.z.tolist()


def test_recalibrate_worked_example():
    t = validate_table({"y": [1, 0, 0, 1], "g": [0, 1, 0, 1], "z": [0.1, 0.2, 0.3, 0.4]})
    np.testing.assert_allclose(recalibrate_empirical(t).z, [1 / 3, 1 / 3, 1 / 3, 1], atol=1e-15)


def test_unknown_mode():
    with pytest.raises(ValidationError):
        recalibrate_empirical(fixture_t4(), "platt")


def test_calibration_residual_examples():
    assert calibration_residual(fixture_t4()) == 0.0
    y = np.linspace(0, 1, 11)
    t = validate_table({"y": y, "g": np.arange(11) % 2, "z": y + 0.1}, outcome_kind="continuous")
    assert calibration_residual(t) == pytest.approx(0.1, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("mode", ["isotonic", "bin-mean"])
def test_recalibration_properties(seed, mode):
    t = random_discrete_table(np.random.default_rng(seed))
    r = recalibrate_empirical(t, mode)
    assert calibration_residual(r) <= 1e-12
    assert mse(r) <= mse(t) + 1e-12
    np.testing.assert_allclose(recalibrate_empirical(r, mode).z, r.z, atol=1e-12)
