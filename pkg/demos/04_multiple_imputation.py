"""
Multiple imputation of a categorical covariate with Rubin pooling
=================================================================

Fill the holes M times with either a multinomial-logit draw or a bagged
classification tree, fit the Cox model per completed copy, and pool.
"""

import numpy as np

from survmiss import (
    AmputationPlan,
    ampute_mar,
    build_predictors,
    encode,
    fit_cox,
    generate_synthetic,
    impute_nonparametric,
    impute_parametric,
    rubin_pool,
)

truth = {"grp:b": 0.4, "grp:c": -0.3, "z1": 0.5, "z2": -0.5}
rng = np.random.default_rng(3)
ds = generate_synthetic(700, truth, censoring_rate_target=0.33, rng=rng)
plan = AmputationPlan("grp", ("event", "z1"), 0.3, (1.0, 0.8))
amputed = ampute_mar(ds, plan, np.random.default_rng(4))
print(f"{int(amputed.missing['grp'].sum())} of {ds.n_rows} grp values missing")

# the imputation model sees every fully observed covariate plus the event
# indicator and the Nelson-Aalen cumulative hazard at the subject's time
design = build_predictors(amputed)
print(f"imputation predictors: {design.names}")


def pooled_fit(imputations):
    est, var = [], []
    for completed in imputations.datasets:
        d = encode(completed, completed.covariate_names())
        fit = fit_cox(d, completed.times, completed.events)
        est.append(fit.beta_hat)
        var.append(np.diag(fit.model_covariance))
    return d.names, rubin_pool(np.array(est), np.array(var))


for label, engine in (("multinomial logit", impute_parametric),
                      ("bagged trees", impute_nonparametric)):
    imp = engine(amputed, m=10, rng=np.random.default_rng(99))
    names, pooled = pooled_fit(imp)
    print(f"\n{label}, M = {imp.m}")
    print("  term     pooled   95% CI             B/W     df      truth")
    for j, name in enumerate(names):
        ratio = pooled.b[j] / pooled.w_bar[j]
        print(f"  {name:<7}  {pooled.q_bar[j]:+.3f}   "
              f"[{pooled.ci_low[j]:+.3f}, {pooled.ci_high[j]:+.3f}]   "
              f"{ratio:5.2f}  {pooled.df[j]:7.1f}  {truth[name]:+.1f}")

print("\nB/W is the between- to within-imputation variance ratio: the two"
      "\ncovariates without holes show almost no between-imputation spread")
