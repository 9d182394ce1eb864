"""Nonparametric survival estimators against exact rational oracles."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survmiss import DataError, kaplan_meier, loglog_curve, logrank_test, nelson_aalen
from survmiss.survcore import StepFunction

# Eight subjects, risk sets sized 8 / 4 / 2 at the death times, so every
# KM factor and NA increment is a dyadic rational and float arithmetic is exact:
#   t=1: d=2, r=8 -> KM 3/4,        NA 1/4
#   t=2: d=1, r=4 -> KM 9/16,       NA 1/2
#   t=3: d=1, r=2 -> KM 9/32,       NA 1
DYADIC_TIMES = np.array([1.0, 1.0, 1.5, 1.5, 2.0, 2.5, 3.0, 3.0])
DYADIC_EVENTS = np.array([1, 1, 0, 0, 1, 0, 1, 0])


def rational_km_na(times, events):
    """Exact product-limit and cumulative-hazard tables via Fractions."""
    times = np.asarray(times, float)
    events = np.asarray(events, int)
    dts = sorted(set(times[events == 1]))
    km, na, surv, cum = [], [], Fraction(1), Fraction(0)
    for t in dts:
        d = int(((times == t) & (events == 1)).sum())
        r = int((times >= t).sum())
        surv *= Fraction(r - d, r)
        cum += Fraction(d, r)
        km.append(surv)
        na.append(cum)
    return dts, km, na


def test_km_dyadic_fixture_exact():
    km = kaplan_meier(DYADIC_TIMES, DYADIC_EVENTS)
    np.testing.assert_array_equal(km.knots, [1.0, 2.0, 3.0])
    assert km.values.tolist() == [0.75, 0.5625, 0.28125]
    dts, exact_km, _ = rational_km_na(DYADIC_TIMES, DYADIC_EVENTS)
    assert [Fraction(v) for v in km.values] == exact_km
    assert km(0.0) == 1.0
    assert km(0.999) == 1.0
    assert km(1.0) == 0.75       # right-continuous: knot takes the post-jump value
    assert km(2.7) == 0.5625
    assert km(100.0) == 0.28125


def test_na_dyadic_fixture_exact():
    na = nelson_aalen(DYADIC_TIMES, DYADIC_EVENTS)
    assert na.values.tolist() == [0.25, 0.5, 1.0]
    _, _, exact_na = rational_km_na(DYADIC_TIMES, DYADIC_EVENTS)
    assert [Fraction(v) for v in na.values] == exact_na
    assert na(0.5) == 0.0
    assert na(3.0) == 1.0


def test_zero_events_curves_flat():
    km = kaplan_meier([1.0, 2.0, 3.0], [0, 0, 0])
    na = nelson_aalen([1.0, 2.0, 3.0], [0, 0, 0])
    assert km(0.0) == km(10.0) == 1.0
    assert na(0.0) == na(10.0) == 0.0


def test_km_hits_zero_when_last_subject_dies():
    km = kaplan_meier([1.0, 2.0], [1, 1])
    assert km.values.tolist() == [0.5, 0.0]


def test_step_function_validation():
    with pytest.raises(DataError):
        StepFunction(np.array([1.0, 1.0]), np.array([0.5, 0.25]), 1.0)
    with pytest.raises(DataError):
        StepFunction(np.array([1.0]), np.array([0.5, 0.25]), 1.0)


def test_step_function_vector_call():
    f = StepFunction(np.array([1.0, 2.0]), np.array([0.5, 0.25]), 1.0)
    np.testing.assert_array_equal(f(np.array([0.0, 1.0, 1.5, 2.0, 9.0])),
                                  [1.0, 0.5, 0.5, 0.25, 0.25])
    assert isinstance(f(1.5), float)


def test_event_table_input_checks():
    with pytest.raises(DataError):
        kaplan_meier([], [])
    with pytest.raises(DataError):
        kaplan_meier([1.0, -2.0], [1, 1])
    with pytest.raises(DataError):
        kaplan_meier([1.0, np.inf], [1, 1])


def rational_logrank(times, events, group):
    """Two-group log-rank statistic in exact arithmetic."""
    times = np.asarray(times, float)
    events = np.asarray(events, int)
    group = np.asarray(group, int)
    obs, exp, var = Fraction(0), Fraction(0), Fraction(0)
    for t in sorted(set(times[events == 1])):
        at_risk = times >= t
        n = int(at_risk.sum())
        n1 = int((at_risk & (group == 1)).sum())
        d = int(((times == t) & (events == 1)).sum())
        d1 = int(((times == t) & (events == 1) & (group == 1)).sum())
        obs += d1
        exp += Fraction(d * n1, n)
        if n > 1:
            var += Fraction(d * n1 * (n - n1) * (n - d), n * n * (n - 1))
    chi = (obs - exp) ** 2 / var
    return float(chi)


def test_logrank_hand_fixture():
    times = [1.0, 2.0, 3.0, 4.0, 1.0, 3.0, 5.0, 6.0]
    events = [1, 1, 0, 1, 1, 1, 0, 1]
    group = [0, 0, 0, 0, 1, 1, 1, 1]
    chi, df, p = logrank_test(times, events, group)
    assert df == 1
    assert chi == pytest.approx(rational_logrank(times, events, group), rel=1e-12)
    assert 0.0 <= p <= 1.0


def test_logrank_identical_groups_is_exact_zero():
    times = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
    events = [1, 0, 1, 1, 0, 1]
    group = [0, 0, 0, 1, 1, 1]
    chi, _, p = logrank_test(times, events, group)
    assert chi == pytest.approx(0.0, abs=1e-12)
    assert p == pytest.approx(1.0, abs=1e-9)


def test_loglog_curve_matches_transform():
    km = kaplan_meier(DYADIC_TIMES, DYADIC_EVENTS)
    pts = loglog_curve(km)
    keep = (km.values > 0) & (km.values < 1)
    np.testing.assert_allclose(pts[:, 1], np.log(-np.log(km.values[keep])), rtol=1e-12)


survival_data = st.lists(
    st.tuples(st.floats(0.01, 50.0, allow_nan=False), st.booleans()),
    min_size=1, max_size=60,
)


@settings(max_examples=60, deadline=None)
@given(survival_data)
def test_km_monotone_and_bounded(data):
    times = [t for t, _ in data]
    events = [int(e) for _, e in data]
    km = kaplan_meier(times, events)
    vals = np.concatenate(([1.0], km.values))
    assert np.all(np.diff(vals) <= 0)
    assert np.all((km.values >= 0) & (km.values <= 1))


@settings(max_examples=60, deadline=None)
@given(survival_data)
def test_na_monotone_and_dominates_km_hazard(data):
    times = [t for t, _ in data]
    events = [int(e) for _, e in data]
    na = nelson_aalen(times, events)
    vals = np.concatenate(([0.0], na.values))
    assert np.all(np.diff(vals) >= 0)
    km = kaplan_meier(times, events)
    # -log KM >= NA pointwise (log(1-x) <= -x)
    with np.errstate(divide="ignore"):
        assert np.all(-np.log(km.values) >= na.values - 1e-12)
