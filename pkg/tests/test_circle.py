import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpf.circle import (
    CircleInterval,
    ConfigError,
    DiophantineSpec,
    GOLDEN_MEAN,
    circle_dist,
    interval_dist,
    merge_intervals,
    signed_diff,
    union_measure,
    verify_diophantine,
    wrap,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
shift = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
unit = st.floats(min_value=0.0, max_value=1.0, exclude_max=True, allow_nan=False)


def test_wrap_basics():
    assert wrap(1.25) == pytest.approx(0.25)
    assert wrap(-0.1) == pytest.approx(0.9)
    assert wrap(0.0) == 0.0
    assert wrap(-1e-18) < 1.0  # no landing exactly on 1


def test_wrap_rejects_nonfinite():
    with pytest.raises(ConfigError):
        wrap(float("nan"))
    with pytest.raises(ConfigError):
        wrap(np.array([0.1, np.inf]))


@given(finite)
def test_wrap_idempotent(x):
    assert wrap(wrap(x)) == wrap(x)
    assert 0.0 <= wrap(x) < 1.0


def test_circle_dist_examples():
    assert circle_dist(0.3, 0.9) == pytest.approx(0.4)
    assert circle_dist(0.123, 0.123) == 0.0
    assert circle_dist(0.1, 0.95) == pytest.approx(0.15)


@settings(max_examples=200)
@given(unit, unit, unit)
def test_circle_dist_is_metric(a, b, c):
    assert circle_dist(a, b) == pytest.approx(circle_dist(b, a))
    assert circle_dist(a, b) <= 0.5 + 1e-15
    assert circle_dist(a, c) <= circle_dist(a, b) + circle_dist(b, c) + 1e-12


@settings(max_examples=200)
@given(unit, unit, shift)
def test_shift_invariance(a, b, c):
    assert circle_dist(wrap(a + c), wrap(b + c)) == pytest.approx(circle_dist(a, b), abs=1e-12)


def test_interval_dist_examples():
    assert interval_dist(CircleInterval(0.1, 0.1), CircleInterval(0.4, 0.1)) == pytest.approx(0.2)
    assert interval_dist(CircleInterval(0.1, 0.2), CircleInterval(0.2, 0.2)) == 0.0
    assert interval_dist(CircleInterval(0.0, 0.1), CircleInterval(0.85, 0.1)) == pytest.approx(0.05)


@settings(max_examples=200)
@given(unit, st.floats(0, 0.4), unit, st.floats(0, 0.4), shift)
def test_interval_dist_shift_invariance(l1, w1, l2, w2, c):
    I, J = CircleInterval(l1, w1), CircleInterval(l2, w2)
    assert interval_dist(I.shifted(c), J.shifted(c)) == pytest.approx(interval_dist(I, J), abs=1e-12)


def test_interval_membership_shift_consistency():
    iv = CircleInterval(0.9, 0.2)  # wraps through 0
    assert iv.contains(0.95) and iv.contains(0.05) and not iv.contains(0.5)
    assert iv.midpoint == pytest.approx(0.0, abs=1e-12)
    shifted = iv.shifted(0.3)
    assert shifted.contains(wrap(0.95 + 0.3))


def test_interval_contains_interval():
    big = CircleInterval(0.8, 0.4)
    assert big.contains_interval(CircleInterval(0.9, 0.2))
    assert not big.contains_interval(CircleInterval(0.1, 0.2))
    assert CircleInterval(0.0, 1.0).contains_interval(big)


def test_merge_and_measure():
    ivs = [CircleInterval(0.1, 0.2), CircleInterval(0.25, 0.1), CircleInterval(0.9, 0.15)]
    merged = merge_intervals(ivs)
    assert len(merged) == 2
    assert union_measure(ivs) == pytest.approx(0.25 + 0.15)


def test_diophantine_golden_true():
    rep = verify_diophantine(DiophantineSpec.golden(gamma=0.38, nu=1.0), 10**6)
    assert rep.ok
    # n = 1 minimises d(n w, 0) * n for the golden mean: d(w, 0) = 1 - w = 0.3819...
    assert rep.worst_n == 1
    assert rep.worst_dist == pytest.approx(1 - GOLDEN_MEAN)


def test_diophantine_rational_fails_at_denominator():
    rep = verify_diophantine(DiophantineSpec(0.5, gamma=0.1, nu=1.0), 10)
    assert not rep.ok
    assert rep.worst_n == 2
    assert rep.worst_dist == pytest.approx(0.0)


def test_diophantine_golden_gamma_too_large():
    rep = verify_diophantine(DiophantineSpec.golden(gamma=0.5, nu=1.0), 10**4)
    assert not rep.ok
    # offending n is a Fibonacci denominator
    fib = {1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233, 377, 610, 987, 1597, 2584, 4181, 6765}
    assert rep.worst_n in fib


def test_golden_mean_value():
    assert GOLDEN_MEAN == pytest.approx((np.sqrt(5) - 1) / 2)
    assert signed_diff(0.1, 0.9) == pytest.approx(0.2)
