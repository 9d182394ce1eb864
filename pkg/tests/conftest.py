"""Shared test fixtures and dataset builders."""

import numpy as np
import pytest

from survmiss import AmputationPlan, Dataset, ampute_mar, generate_synthetic

TRUE_BETA = {"grp:b": 0.4, "grp:c": -0.3, "z1": 0.5, "z2": -0.5}


def build_dataset(times, events, cont=None, cat=None, levels=None, missing=None):
    """Assemble a Dataset from plain arrays.

    cont: {name: values}, cat: {name: integer codes}, levels: {name: labels},
    missing: {name: bool mask} for any column that has holes.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    columns = [("time", "time"), ("event", "event")]
    values = {"time": times, "event": events}
    n = len(times)
    for name, vals in (cont or {}).items():
        columns.append((name, "continuous"))
        values[name] = np.asarray(vals, dtype=float)
    for name, codes in (cat or {}).items():
        columns.append((name, "categorical"))
        values[name] = np.asarray(codes, dtype=np.int64)
    miss = {name: np.zeros(n, dtype=bool) for name, _ in columns}
    for name, mask in (missing or {}).items():
        miss[name] = np.asarray(mask, dtype=bool)
    return Dataset(tuple(columns), values, miss, dict(levels or {}))


@pytest.fixture(scope="session")
def amputed_dataset():
    """Synthetic survival data with 30% MAR missingness on the group column."""
    rng = np.random.default_rng(314)
    full = generate_synthetic(400, TRUE_BETA, 0.33, rng)
    plan = AmputationPlan("grp", ("event", "z1"), 0.3, (1.0, 1.0))
    return ampute_mar(full, plan, np.random.default_rng(315))


@pytest.fixture(scope="session")
def complete_dataset():
    return generate_synthetic(400, TRUE_BETA, 0.33, np.random.default_rng(314))


@pytest.fixture(scope="session")
def signal_dataset():
    """Three-level target nearly determined by one continuous predictor.

    Half the target cells are masked; the pre-mask codes travel along for
    accuracy scoring.
    """
    rng = np.random.default_rng(77)
    n = 2500
    z = rng.standard_normal(n) * 1.5
    lev = np.where(z < -0.9, 0, np.where(z < 0.9, 1, 2)).astype(np.int64)
    flip = rng.random(n) < 0.04
    lev[flip] = rng.integers(0, 3, flip.sum())
    tt = rng.exponential(size=n)
    dd = (rng.random(n) < 0.7).astype(float)
    ds = build_dataset(tt, dd, cont={"z1": z}, cat={"grp": lev},
                       levels={"grp": ("a", "b", "c")})
    amp = ampute_mar(ds, AmputationPlan("grp", ("z1",), 0.5, (0.0,)),
                     np.random.default_rng(5))
    return amp, lev
