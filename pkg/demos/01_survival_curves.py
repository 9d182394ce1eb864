"""
Kaplan-Meier and Nelson-Aalen curves, plus a log-rank comparison
================================================================

Estimate survival and cumulative hazard from right-censored data and
compare two groups with the log-rank test.
"""

import numpy as np

from survmiss import generate_synthetic, kaplan_meier, loglog_curve, logrank_test, nelson_aalen

# simulate a small cohort with a known data-generating process
truth = {"grp:b": 0.4, "grp:c": -0.3, "z1": 0.5, "z2": -0.5}
rng = np.random.default_rng(42)
ds = generate_synthetic(400, truth, censoring_rate_target=0.33, rng=rng)
print(f"{ds.n_rows} subjects, {int(ds.events.sum())} events")

# the Kaplan-Meier estimate is a right-continuous step function; evaluate it
# anywhere, not just at the observed event times
km = kaplan_meier(ds.times, ds.events)
na = nelson_aalen(ds.times, ds.events)
grid = np.quantile(ds.times, [0.1, 0.25, 0.5, 0.75, 0.9])
print("\n  t        S(t)     H(t)   -log S(t)")
for t, s, h in zip(grid, km(grid), na(grid)):
    print(f"  {t:7.3f}  {s:.4f}  {h:.4f}  {-np.log(s):.4f}")

# a log-log transform of S(t) is handy for eyeballing proportional hazards:
# parallel curves across groups support the assumption
curve = loglog_curve(km)
print(f"\nlog(-log S) curve has {len(curve)} knots, "
      f"y-range [{curve[:, 1].min():.2f}, {curve[:, 1].max():.2f}]")

# compare survival across the three levels of the group covariate
chi2, df, p = logrank_test(ds.times, ds.events, ds.values["grp"])
print(f"\nlog-rank across grp levels: chi2 = {chi2:.3f} (df={df}), p = {p:.4f}")
print("(true log-hazard ratios against level a: b = +0.4, c = -0.3)")
