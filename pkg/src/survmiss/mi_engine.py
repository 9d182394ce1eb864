"""Multiple imputation of one categorical column, plus Rubin pooling.

Two engines complete the data M times. The parametric engine fits a
multinomial logit on the complete rows and, per imputation, perturbs the
coefficients by a draw from their asymptotic posterior before sampling
levels. The nonparametric engine grows a fresh bagged-tree ensemble per
imputation and samples levels from routed leaves. Both condition on the same
predictor recipe: every fully observed covariate, the event indicator, and
the Nelson-Aalen cumulative hazard at the subject's own time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataio import Dataset, DesignMatrix, encode
from .errors import DataError
from .regressors import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MIN_LEAF,
    DEFAULT_TREES,
    draw_class,
    draw_coefficients,
    fit_multinomial,
    fit_trees,
    softmax_probs,
)
from .survcore import nelson_aalen

PARAMETRIC = "parametric"
NONPARAMETRIC = "nonparametric"


@dataclass(frozen=True)
class ImputationSet:
    """M completed datasets with per-imputation provenance."""

    datasets: tuple[Dataset, ...]
    engines: tuple[str, ...]
    draw_seeds: tuple[int, ...]
    predictor_names: tuple[str, ...]
    target: str | None

    def __post_init__(self):
        if not (len(self.datasets) == len(self.engines) == len(self.draw_seeds)):
            raise DataError("imputation provenance length mismatch")

    @property
    def m(self) -> int:
        return len(self.datasets)

    def extend(self, other: "ImputationSet") -> "ImputationSet":
        """Concatenate two imputation sets over the same target and recipe."""
        if other.target != self.target or other.predictor_names != self.predictor_names:
            raise DataError("cannot combine imputations with different recipes")
        if self.datasets and other.datasets and (
                other.datasets[0].n_rows != self.datasets[0].n_rows):
            raise DataError("cannot combine imputations of different datasets")
        return ImputationSet(
            self.datasets + other.datasets,
            self.engines + other.engines,
            self.draw_seeds + other.draw_seeds,
            self.predictor_names,
            self.target,
        )


@dataclass(frozen=True)
class PooledResult:
    """Rubin-pooled estimates: T = W̄ + (1 + 1/M)·B per coefficient."""

    q_bar: np.ndarray
    w_bar: np.ndarray
    b: np.ndarray
    t: np.ndarray
    df: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    m: int

    def __post_init__(self):
        for arr in (self.q_bar, self.w_bar, self.b, self.t, self.df,
                    self.ci_low, self.ci_high):
            arr.flags.writeable = False


def find_target(dataset: Dataset) -> str | None:
    """The single partially observed categorical covariate, or None if complete."""
    partial = [n for n, _ in dataset.columns if dataset.missing[n].any()]
    if not partial:
        return None
    if len(partial) > 1:
        raise DataError(f"exactly one partially observed column supported, found {partial}")
    name = partial[0]
    if dataset.kind_of(name) != "categorical":
        raise DataError(f"partially observed column {name!r} must be categorical")
    return name


def build_predictors(dataset: Dataset, covariates=None) -> DesignMatrix:
    """Imputation/propensity design: covariates + event indicator + cumulative hazard.

    With `covariates=None`, every fully observed covariate enters (dummy
    expanded for categoricals); a partially observed target is therefore
    excluded automatically. The Nelson-Aalen hazard is evaluated at each
    subject's own observed time.
    """
    if covariates is None:
        covariates = [
            n for n in dataset.covariate_names() if not dataset.missing[n].any()
        ]
    base = encode(dataset, covariates)
    hazard = nelson_aalen(dataset.times, dataset.events)(dataset.times)
    matrix = np.column_stack([
        base.matrix,
        dataset.events.astype(float),
        np.atleast_1d(hazard).astype(float),
    ])
    names = base.names + ("event", "cumhaz")
    return DesignMatrix(matrix, names, dict(base.dummy_columns))


def _copies(dataset, m, engine, seeds, recipe):
    return ImputationSet((dataset,) * m, (engine,) * m, tuple(seeds), recipe, None)


def _complete(dataset, target, fill_codes, miss):
    codes = dataset.values[target].copy()
    codes[miss] = fill_codes
    return dataset.replace_column(target, codes, np.zeros(dataset.n_rows, dtype=bool))


def impute_parametric(dataset: Dataset, m: int, rng: np.random.Generator) -> ImputationSet:
    """M completions from a multinomial logit with posterior-perturbed coefficients."""
    return _impute(dataset, m, rng, PARAMETRIC, {})


def impute_nonparametric(
    dataset: Dataset,
    m: int,
    rng: np.random.Generator,
    n_trees: int = DEFAULT_TREES,
    min_leaf: int = DEFAULT_MIN_LEAF,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> ImputationSet:
    """M completions from per-imputation bagged-tree ensembles."""
    params = {"n_trees": n_trees, "min_leaf": min_leaf, "max_depth": max_depth}
    return _impute(dataset, m, rng, NONPARAMETRIC, params)


def _impute(dataset, m, rng, engine, tree_params) -> ImputationSet:
    if m < 1:
        raise DataError("at least one imputation required")
    seeds = [int(s) for s in rng.integers(0, 2**63 - 1, size=m)]
    target = find_target(dataset)
    design = build_predictors(dataset)
    if target is None:
        return _copies(dataset, m, engine, seeds, design.names)
    obs = dataset.observed_mask(target)
    miss = ~obs
    codes = dataset.values[target]
    observed_levels = np.unique(codes[obs])
    compact = np.searchsorted(observed_levels, codes[obs])
    x_obs = design.matrix[obs]
    x_miss = design.matrix[miss]

    datasets = []
    if engine == PARAMETRIC and len(observed_levels) == 1:
        # degenerate fit: fall back to the (point-mass) empirical distribution
        fill = np.full(int(miss.sum()), observed_levels[0])
        for _ in range(m):
            datasets.append(_complete(dataset, target, fill, miss))
    elif engine == PARAMETRIC:
        fit = fit_multinomial(x_obs, compact, n_levels=len(observed_levels))
        for seed in seeds:
            rng_m = np.random.default_rng(seed)
            coef = draw_coefficients(fit, rng_m)
            probs = softmax_probs(coef, x_miss)
            picks = _sample_rows(probs, rng_m)
            datasets.append(_complete(dataset, target, observed_levels[picks], miss))
    else:
        for seed in seeds:
            rng_m = np.random.default_rng(seed)
            ensemble = fit_trees(x_obs, compact, rng=rng_m, **tree_params)
            picks = np.array(
                [draw_class(ensemble, row, rng_m) for row in x_miss], dtype=np.int64
            )
            datasets.append(_complete(dataset, target, observed_levels[picks], miss))
    return ImputationSet(tuple(datasets), (engine,) * m, tuple(seeds), design.names, target)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a probability matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    picks = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(picks, probs.shape[1] - 1)


def rubin_pool(estimates: np.ndarray, variances: np.ndarray) -> PooledResult:
    """Pool M per-imputation estimates and variances by Rubin's rules.

    Between-imputation variance uses the M-1 divisor; degrees of freedom are
    (M-1)(1 + W̄/((1+1/M)B))², with B = 0 collapsing to the normal quantile.
    """
    estimates = np.asarray(estimates, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if estimates.ndim == 1:
        estimates = estimates[:, None]
    if variances.ndim == 1:
        variances = variances[:, None]
    if estimates.shape != variances.shape:
        raise DataError("estimates and variances must have matching shape")
    m = estimates.shape[0]
    if m < 2:
        raise DataError("pooling requires at least 2 imputations")
    if np.any(variances < 0):
        raise DataError("variances must be non-negative")
    q_bar = estimates.mean(axis=0)
    w_bar = variances.mean(axis=0)
    b = estimates.var(axis=0, ddof=1)
    t = w_bar + (1.0 + 1.0 / m) * b
    with np.errstate(divide="ignore"):
        df = np.where(
            b > 0,
            (m - 1) * (1.0 + w_bar / ((1.0 + 1.0 / m) * np.where(b > 0, b, 1.0))) ** 2,
            np.inf,
        )
    half = stats.t.ppf(0.975, df) * np.sqrt(t)
    return PooledResult(q_bar, w_bar, b, t, df, q_bar - half, q_bar + half, m)
