"""MAR amputation, propensity estimation, and analysis-weight construction.

A single categorical covariate is made missing at random: each subject's
missingness probability is a logistic function of a standardized score over
fully observed predictor columns, with the intercept solved so the expected
missing fraction hits the requested rate. Downstream, the observation
indicator R feeds a logistic propensity model whose fitted probabilities
drive inverse-probability weights and the kappa-compromise hybrid weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataio import Dataset
from .errors import DataError
from .mi_engine import build_predictors, find_target
from .regressors import fit_logistic, predict_proba

TRUNCATION = (0.01, 0.99)
NUMERIC_KINDS = ("time", "event", "continuous")


@dataclass(frozen=True)
class AmputationPlan:
    """Recipe for making one categorical column missing at random.

    `score_weights` set the relative pull of each predictor on the
    missingness probability; they default to 1 each. A zero weight vector
    degenerates to MCAR.
    """

    target: str
    predictors: tuple[str, ...]
    rate: float
    score_weights: tuple[float, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.score_weights is not None:
            object.__setattr__(self, "score_weights", tuple(float(v) for v in self.score_weights))
            if len(self.score_weights) != len(self.predictors):
                raise DataError("one score weight per predictor required")
        if not 0.0 <= float(self.rate) <= 1.0:
            raise DataError("missingness rate must lie in [0, 1]")
        if self.target in self.predictors:
            raise DataError("amputation predictors must exclude the target")
        if len(self.predictors) == 0:
            raise DataError("at least one amputation predictor required")


@dataclass(frozen=True)
class WeightVector:
    """Per-subject observation probabilities and analysis weights.

    For pure IPW, `w` is defined only where R = 1 (NaN elsewhere, those rows
    are excluded from analysis). For hybrid weighting, `w` is defined
    everywhere and `kappa` records the compromise parameter.
    """

    pi: np.ndarray
    w: np.ndarray
    kappa: float | None
    truncation_count: int

    def __post_init__(self):
        self.pi.flags.writeable = False
        self.w.flags.writeable = False
        if np.any(self.pi <= 0.0) or np.any(self.pi >= 1.0):
            raise DataError("pi must lie strictly inside (0, 1)")
        defined = ~np.isnan(self.w)
        if not np.all(self.w[defined] > 0) or not np.all(np.isfinite(self.w[defined])):
            raise DataError("weights must be positive and finite where defined")


def _standardized_score(dataset: Dataset, plan: AmputationPlan) -> np.ndarray:
    weights = plan.score_weights or (1.0,) * len(plan.predictors)
    score = np.zeros(dataset.n_rows)
    for name, wt in zip(plan.predictors, weights):
        kind = dataset.kind_of(name)
        if kind not in NUMERIC_KINDS:
            raise DataError(
                f"amputation predictor {name!r} must be numeric (time, event, or continuous)"
            )
        if dataset.missing[name].any():
            raise DataError(f"amputation predictor {name!r} has missing cells")
        v = dataset.values[name].astype(float)
        sd = v.std()
        if sd > 0:
            score += wt * (v - v.mean()) / sd
    return score


def _solve_intercept(score: np.ndarray, rate: float) -> float:
    """Bisection for a with mean(expit(a + score)) = rate."""
    span = float(np.max(np.abs(score))) if len(score) else 0.0
    lo, hi = -37.0 - span, 37.0 + span
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if float(expit(mid + score).mean()) < rate:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def ampute_mar(dataset: Dataset, plan: AmputationPlan, rng: np.random.Generator | None = None) -> Dataset:
    """Make the plan's target column missing at random at the requested rate.

    The observation indicator is recoverable as the complement of the
    returned dataset's missing mask on the target column.
    """
    if dataset.kind_of(plan.target) != "categorical":
        raise DataError(f"amputation target {plan.target!r} must be categorical")
    if dataset.missing[plan.target].any():
        raise DataError(f"target {plan.target!r} already has missing cells")
    if rng is None:
        rng = np.random.default_rng(plan.seed)
    score = _standardized_score(dataset, plan)
    n = dataset.n_rows
    if plan.rate == 0.0:
        return dataset
    if plan.rate == 1.0:
        miss = np.ones(n, dtype=bool)
    else:
        prob = expit(_solve_intercept(score, plan.rate) + score)
        miss = rng.random(n) < prob
    codes = dataset.values[plan.target].copy()
    codes[miss] = -1
    return dataset.replace_column(plan.target, codes, miss)


def estimate_propensity(
    dataset: Dataset,
    predictors: tuple[str, ...] | None = None,
    truncation: tuple[float, float] = TRUNCATION,
) -> WeightVector:
    """Pure IPW weights from a logistic model of the observation indicator.

    The default predictor set mirrors the imputation recipe: every fully
    observed covariate plus the event indicator and the Nelson-Aalen
    cumulative hazard at the subject's own time. Fitted probabilities are
    truncated to `truncation` before inversion; weights are NaN on rows with
    the target missing (those rows drop out under pure IPW).
    """
    target = find_target(dataset)
    if target is None:
        raise DataError("no missingness to model")
    r = dataset.observed_mask(target)
    if r.all():
        raise DataError("no missingness to model")
    if not r.any():
        raise DataError("target column is entirely missing")
    design = build_predictors(dataset, covariates=predictors)
    fit = fit_logistic(design.matrix, r.astype(float))
    pi = predict_proba(fit, design.matrix)[:, 1]
    lo, hi = truncation
    if not 0.0 < lo < hi < 1.0:
        raise DataError("truncation bounds must satisfy 0 < lo < hi < 1")
    clipped = np.clip(pi, lo, hi)
    truncated = int(np.sum((pi < lo) | (pi > hi)))
    w = np.where(r, 1.0 / clipped, np.nan)
    return WeightVector(clipped, w, None, truncated)


def hybrid_weights(
    pi: np.ndarray,
    r: np.ndarray,
    kappa: float,
    truncation: tuple[float, float] = TRUNCATION,
) -> WeightVector:
    """Compromise weights: 1/pi on observed rows, kappa-blended on imputed.

    An R=0 subject gets kappa * 1 + (1 - kappa) / (1 - pi): at kappa = 1 the
    imputed row counts once (pure-MI weighting), at kappa = 0 it stands in
    for all the unobserved subjects at its propensity level.
    """
    pi = np.asarray(pi, dtype=float)
    r = np.asarray(r)
    if not np.all(np.isin(r, (0, 1))):
        raise DataError("R must be a 0/1 indicator")
    r = r.astype(bool)
    if len(pi) != len(r):
        raise DataError("pi and R length mismatch")
    if not 0.0 <= float(kappa) <= 1.0:
        raise DataError("kappa must lie in [0, 1]")
    lo, hi = truncation
    if np.any(pi < lo - 1e-12) or np.any(pi > hi + 1e-12):
        raise DataError("pi outside the truncated range; truncate before weighting")
    w = np.where(r, 1.0 / pi, kappa + (1.0 - kappa) / (1.0 - pi))
    return WeightVector(pi, w, float(kappa), 0)
