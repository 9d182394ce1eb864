"""Nonparametric survival estimators: Kaplan-Meier, Nelson-Aalen, log-rank.

Conventions: estimates jump at distinct event times only; censorings shrink
later risk sets without a jump. When an event and a censoring share a time,
the censored subject still counts in the risk set at that time (events are
processed first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataError


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: value at an exact knot is the post-jump value."""

    knots: np.ndarray
    values: np.ndarray
    value_at_zero: float

    def __post_init__(self):
        self.knots.flags.writeable = False
        self.values.flags.writeable = False
        if len(self.knots) != len(self.values):
            raise DataError("knots and values length mismatch")
        if len(self.knots) > 1 and not np.all(np.diff(self.knots) > 0):
            raise DataError("knots must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        padded = np.concatenate(([self.value_at_zero], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)


def _event_table(times, events):
    """Distinct event times with event counts and risk-set sizes."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.size == 0:
        raise DataError("empty input")
    if times.shape != events.shape:
        raise DataError("times and events length mismatch")
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise DataError("times must be finite and >= 0")
    event_times = np.unique(times[events == 1])
    sorted_times = np.sort(times)
    # at risk just before t: everyone with observed time >= t
    n_at_risk = len(times) - np.searchsorted(sorted_times, event_times, side="left")
    d = np.array([np.sum((times == t) & (events == 1)) for t in event_times], dtype=float)
    return event_times, d, n_at_risk.astype(float)


def kaplan_meier(times, events) -> StepFunction:
    """Product-limit survival estimate with knots at distinct event times."""
    event_times, d, n = _event_table(times, events)
    surv = np.cumprod(1.0 - d / n)
    return StepFunction(event_times, surv, 1.0)


def nelson_aalen(times, events) -> StepFunction:
    """Cumulative-hazard estimate accumulating d_i / n_i at each event time."""
    event_times, d, n = _event_table(times, events)
    cumhaz = np.cumsum(d / n)
    return StepFunction(event_times, cumhaz, 0.0)


def logrank_test(times, events, group):
    """K-sample log-rank test.

    Returns (chi_square, df, p_value) with df = #groups - 1. Uses the
    hypergeometric variance without continuity correction.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    group = np.asarray(group)
    labels = np.unique(group)
    if len(labels) < 2:
        raise DataError("log-rank test needs at least 2 groups")

    event_times = np.unique(times[events == 1])
    k = len(labels)
    observed = np.zeros(k)
    expected = np.zeros(k)
    cov = np.zeros((k, k))
    at_risk = np.vstack([(group == lab) for lab in labels])

    for t in event_times:
        in_risk = times >= t
        n_i = float(in_risk.sum())
        d_i = float(np.sum((times == t) & (events == 1)))
        n_ig = at_risk[:, in_risk].sum(axis=1).astype(float)
        d_ig = np.array([np.sum((times == t) & (events == 1) & (group == lab)) for lab in labels], dtype=float)
        observed += d_ig
        expected += d_i * n_ig / n_i
        if n_i > 1:
            frac = n_ig / n_i
            hyper = d_i * (n_i - d_i) / (n_i - 1.0)
            cov += hyper * (np.diag(frac) - np.outer(frac, frac))

    z = (observed - expected)[:-1]
    v = cov[:-1, :-1]
    try:
        stat = float(z @ np.linalg.solve(v, z))
    except np.linalg.LinAlgError:
        stat = float(z @ np.linalg.pinv(v) @ z)
    stat = max(stat, 0.0)
    df = k - 1
    p = float(stats.chi2.sf(stat, df))
    return stat, df, p


def loglog_curve(km: StepFunction) -> np.ndarray:
    """Plot-ready (log t, log(-log S(t))) pairs at knots where 0 < S < 1.

    Knots where the transform is undefined (S in {0, 1}, or t = 0) are dropped;
    the result may be empty.
    """
    rows = []
    for t, s in zip(km.knots, km.values):
        if 0.0 < s < 1.0 and t > 0.0:
            rows.append((np.log(t), np.log(-np.log(s))))
    return np.array(rows).reshape(-1, 2)
