"""The eight analysis strategies for a partially observed categorical covariate.

CC drops incomplete rows. IPW drops them too but reweights the rest by
inverse observation probability. MI_P and MI_NP analyze M completed datasets
(parametric or tree-based engine) and pool with Rubin's rules. The hybrids
combine the two ideas: H1 mixes both engines' imputations in one pool; H2-H4
keep every row, weighting observed rows by 1/pi and imputed rows by the
kappa compromise, with a sandwich variance inside each pooled fit.

Per-method RNG streams derive from (seed, kind), so results for one method
never move when another method is added to a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .coxfit import fit_cox
from .dataio import Dataset, encode
from .errors import DataError, SurvmissError
from .mi_engine import (
    ImputationSet,
    find_target,
    impute_nonparametric,
    impute_parametric,
    rubin_pool,
)
from .missingness import TRUNCATION, estimate_propensity, hybrid_weights

KINDS = ("CC", "IPW", "MI_P", "MI_NP", "H1", "H2", "H3", "H4")
_KIND_INDEX = {kind: i for i, kind in enumerate(KINDS)}
_MI_KINDS = ("MI_P", "MI_NP", "H1", "H2", "H3", "H4")
_KAPPA_KINDS = ("H2", "H3", "H4")
DEFAULT_M = 10
DEFAULT_KAPPAS = (0.0, 0.3, 0.5, 1.0)


def _half_split(m: int) -> tuple[int, int]:
    return (math.ceil(m / 2), m // 2)


@dataclass(frozen=True)
class MethodSpec:
    """Validated description of one analysis strategy.

    `kappa` must be present exactly for H2/H3/H4. `split` applies to H1
    (any M1 + M2 = M) and is fixed to halves for H4, parametric side rounded
    up on odd M.
    """

    kind: str
    m: int = DEFAULT_M
    kappa: float | None = None
    split: tuple[int, int] | None = None
    propensity_predictors: tuple[str, ...] | None = None
    ties: str = "efron"
    robust: bool | None = None
    truncation: tuple[float, float] = TRUNCATION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown method kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in _KAPPA_KINDS:
            if self.kappa is None:
                raise DataError(f"kappa required for {self.kind}")
            if not 0.0 <= float(self.kappa) <= 1.0:
                raise DataError("kappa must lie in [0, 1]")
        elif self.kappa is not None:
            raise DataError(f"kappa not applicable to {self.kind}")
        if self.kind in _MI_KINDS and self.m < 2:
            raise DataError("MI and hybrid methods need at least 2 imputations")
        if self.split is not None:
            if self.kind == "H1":
                m1, m2 = self.split
                if m1 < 1 or m2 < 1 or m1 + m2 != self.m:
                    raise DataError("H1 split must be positive and sum to M")
            elif self.kind == "H4":
                if tuple(self.split) != _half_split(self.m):
                    raise DataError("H4 split is fixed to halves (parametric side rounded up)")
            else:
                raise DataError(f"split not applicable to {self.kind}")

    def engine_split(self) -> tuple[int, int]:
        """(parametric count, nonparametric count) for the two-engine hybrids."""
        if self.split is not None:
            return self.split
        return _half_split(self.m)


@dataclass(frozen=True)
class MethodResult:
    """Coefficient-level output of one strategy on one dataset."""

    kind: str
    kappa: float | None
    m: int | None
    names: tuple[str, ...]
    estimates: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    trace_estimates: np.ndarray | None = None
    trace_variances: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.estimates, self.se, self.ci_low, self.ci_high,
                    self.trace_estimates, self.trace_variances):
            if arr is not None:
                arr.flags.writeable = False
        if np.any(self.ci_low > self.ci_high):
            raise DataError("confidence bounds out of order")


def hazard_ratios(result: MethodResult):
    """Rows of (name, HR, CI low, CI high) on the hazard-ratio scale."""
    return [
        (name, float(np.exp(est)), float(np.exp(lo)), float(np.exp(hi)))
        for name, est, lo, hi in zip(
            result.names, result.estimates, result.ci_low, result.ci_high
        )
    ]


def _rng_for(seed: int, kind: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), _KIND_INDEX[kind]]))


def _wald_result(spec, fit, m=None, trace=None) -> MethodResult:
    se = fit.standard_errors()
    z = stats.norm.ppf(0.975)
    est = fit.beta_hat
    te, tv = (None, None) if trace is None else trace
    return MethodResult(
        spec.kind, spec.kappa, m, fit.names, est.copy(), se,
        est - z * se, est + z * se, te, tv,
    )


def _impute_for(dataset: Dataset, spec: MethodSpec, rng) -> ImputationSet:
    if spec.kind in ("MI_P", "H2"):
        return impute_parametric(dataset, spec.m, rng)
    if spec.kind in ("MI_NP", "H3"):
        return impute_nonparametric(dataset, spec.m, rng)
    m1, m2 = spec.engine_split()
    first = impute_parametric(dataset, m1, rng)
    return first.extend(impute_nonparametric(dataset, m2, rng))


def _weights_for(dataset: Dataset, spec: MethodSpec):
    """Kappa-hybrid weights, or None when the dataset has nothing missing."""
    target = find_target(dataset)
    if target is None:
        return None
    wv = estimate_propensity(dataset, spec.propensity_predictors, spec.truncation)
    r = dataset.observed_mask(target).astype(int)
    return hybrid_weights(wv.pi, r, spec.kappa, spec.truncation).w


def _pool_fits(imputations: ImputationSet, spec: MethodSpec, weights) -> MethodResult:
    covariates = None
    names = None
    est_rows, var_rows = [], []
    for i, completed in enumerate(imputations.datasets):
        if covariates is None:
            covariates = completed.covariate_names()
        design = encode(completed, covariates)
        names = design.names
        try:
            fit = fit_cox(
                design, completed.times, completed.events,
                weights=weights, ties=spec.ties, robust=spec.robust,
            )
        except SurvmissError as exc:
            raise type(exc)(f"imputation {i + 1} of {imputations.m}: {exc}") from exc
        est_rows.append(fit.beta_hat)
        var_rows.append(np.diag(fit.covariance))
    estimates = np.array(est_rows)
    variances = np.array(var_rows)
    pooled = rubin_pool(estimates, variances)
    return MethodResult(
        spec.kind, spec.kappa, imputations.m, names,
        pooled.q_bar.copy(), np.sqrt(pooled.t), pooled.ci_low.copy(),
        pooled.ci_high.copy(), estimates, variances,
    )


def _run_with_rng(dataset: Dataset, spec: MethodSpec, rng) -> MethodResult:
    target = find_target(dataset)
    covariates = dataset.covariate_names()

    if spec.kind == "CC":
        keep = dataset.complete_mask(covariates)
        sub = dataset.take(keep)
        design = encode(sub, covariates)
        fit = fit_cox(design, sub.times, sub.events, ties=spec.ties, robust=spec.robust)
        return _wald_result(spec, fit)

    if spec.kind == "IPW":
        if target is None:
            design = encode(dataset, covariates)
            fit = fit_cox(design, dataset.times, dataset.events,
                          ties=spec.ties, robust=spec.robust)
            return _wald_result(spec, fit)
        wv = estimate_propensity(dataset, spec.propensity_predictors, spec.truncation)
        keep = dataset.observed_mask(target)
        sub = dataset.take(keep)
        design = encode(sub, covariates)
        fit = fit_cox(design, sub.times, sub.events, weights=wv.w[keep],
                      ties=spec.ties, robust=spec.robust)
        return _wald_result(spec, fit)

    # MI and hybrid kinds: impute first (all RNG use happens here), then weight
    imputations = _impute_for(dataset, spec, rng)
    weights = _weights_for(dataset, spec) if spec.kind in _KAPPA_KINDS else None
    return _pool_fits(imputations, spec, weights)


def run_method(dataset: Dataset, spec: MethodSpec, seed: int) -> MethodResult:
    """Run one strategy end to end with a (seed, kind)-derived RNG stream.

    A dataset with nothing missing degenerates every strategy to the
    full-data fit: imputation returns M identical copies (so B = 0) and the
    hybrid weighting is skipped.
    """
    return _run_with_rng(dataset, spec, _rng_for(seed, spec.kind))


def run_kappa_grid(
    dataset: Dataset,
    kinds,
    kappas,
    seed: int,
    m: int = DEFAULT_M,
    ties: str = "efron",
    propensity_predictors=None,
    robust: bool | None = None,
    truncation: tuple[float, float] = TRUNCATION,
):
    """Every requested (kind, kappa) cell, sharing imputations across kappa.

    Returns (results, failures): `results` maps (kind, kappa) to a
    MethodResult, with kappa = None for the kappa-free kinds; `failures`
    maps the same keys to error messages. Sharing is sound because kappa
    never touches the RNG stream: each cell equals a standalone run_method
    call with the same seed.
    """
    results: dict = {}
    failures: dict = {}
    for kind in kinds:
        if kind not in KINDS:
            raise DataError(f"unknown method kind {kind!r}")
        base_kwargs = dict(
            m=m, ties=ties, propensity_predictors=propensity_predictors,
            robust=robust, truncation=truncation,
        )
        if kind not in _KAPPA_KINDS:
            spec = MethodSpec(kind, **base_kwargs)
            try:
                results[(kind, None)] = run_method(dataset, spec, seed)
            except SurvmissError as exc:
                failures[(kind, None)] = str(exc)
            continue
        rng = _rng_for(seed, kind)
        spec0 = MethodSpec(kind, kappa=float(kappas[0]), **base_kwargs)
        try:
            imputations = _impute_for(dataset, spec0, rng)
        except SurvmissError as exc:
            for kappa in kappas:
                failures[(kind, float(kappa))] = str(exc)
            continue
        for kappa in kappas:
            spec = MethodSpec(kind, kappa=float(kappa), **base_kwargs)
            try:
                weights = _weights_for(dataset, spec)
                results[(kind, float(kappa))] = _pool_fits(imputations, spec, weights)
            except SurvmissError as exc:
                failures[(kind, float(kappa))] = str(exc)
    return results, failures
