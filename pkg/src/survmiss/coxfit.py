"""Weighted Cox proportional-hazards estimation, robust variance, diagnostics.

The partial likelihood, score, and information share one accumulation over
distinct event times. Efron and Breslow tie handling differ only in the
fractions applied to the tied-death sums (l/d for Efron, 0 for Breslow), so
they share code and agree exactly when no two deaths are tied. Weights enter
both outside the event terms and inside the risk-set sums, which is the form
the inverse-probability and hybrid weighting schemes require.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataio import DesignMatrix
from .errors import DataError, RankDeficiencyError
from .regressors import _newton
from .survcore import kaplan_meier

MAX_ITER = 50
TIES = ("efron", "breslow")
TRANSFORMS = ("km", "identity", "rank")


@dataclass(frozen=True)
class CoxFit:
    beta_hat: np.ndarray
    model_covariance: np.ndarray
    robust_covariance: np.ndarray | None
    log_partial_likelihood: float
    ties: str
    converged: bool
    iterations: int
    weights: np.ndarray | None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.beta_hat.flags.writeable = False
        self.model_covariance.flags.writeable = False
        if self.robust_covariance is not None:
            self.robust_covariance.flags.writeable = False

    @property
    def covariance(self) -> np.ndarray:
        """Covariance used for inference: robust when available, else model."""
        if self.robust_covariance is not None:
            return self.robust_covariance
        return self.model_covariance

    def standard_errors(self, robust: bool | None = None) -> np.ndarray:
        cov = self.covariance if robust is None else (
            self.robust_covariance if robust else self.model_covariance
        )
        if cov is None:
            raise DataError("no robust covariance on this fit")
        return np.sqrt(np.diag(cov))


@dataclass(frozen=True)
class ResidualSet:
    """Martingale residuals per subject plus Schoenfeld residuals per event.

    `martingale` follows the input subject order. `schoenfeld` rows are
    ordered by `event_times` (ascending); under weights each row is scaled by
    the subject's weight so columns still sum to zero at the fitted
    coefficients. `times` and `events` are carried along so time transforms
    for the proportional-hazards test need no extra arguments.
    """

    martingale: np.ndarray
    schoenfeld: np.ndarray
    event_times: np.ndarray
    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        for arr in (self.martingale, self.schoenfeld, self.event_times,
                    self.times, self.events):
            arr.flags.writeable = False


def _validate(x, times, events, weights):
    x = x.matrix if isinstance(x, DesignMatrix) else np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    n = len(times)
    if x.shape[0] != n or len(events) != n:
        raise DataError("design, times, and events must have equal length")
    if not np.all(np.isfinite(x)):
        raise DataError("design matrix contains non-finite values")
    if not np.all(np.isfinite(times)) or np.any(times < 0):
        raise DataError("times must be finite and non-negative")
    if not np.all(np.isin(events, (0, 1))):
        raise DataError("events must be 0 or 1")
    events = events.astype(int)
    if events.sum() == 0:
        raise DataError("no events in data")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if len(w) != n or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DataError("weights must be positive and finite")
    return x, times, events, w


def _check_ties(ties):
    if ties not in TIES:
        raise DataError(f"ties must be one of {TIES}")


class _SortedData:
    """Inputs sorted by time ascending, with death groupings precomputed."""

    def __init__(self, x, times, events, weights):
        order = np.argsort(times, kind="stable")
        self.order = order
        self.x = np.ascontiguousarray(x[order])
        self.t = times[order]
        self.ev = events[order]
        self.w = weights[order]
        self.death_idx = np.flatnonzero(self.ev == 1)
        dt = self.t[self.death_idx]
        self.risk_start = np.searchsorted(self.t, dt, side="left")
        # slice boundaries of tied-death groups within death_idx
        cuts = np.flatnonzero(np.r_[True, dt[1:] != dt[:-1]])
        self.group_bounds = np.r_[cuts, len(dt)]
        self.tied = len(dt) > len(cuts)


def _accumulate(sd: _SortedData, beta, ties):
    """Log partial likelihood, score, and information in one pass."""
    xs, ws = sd.x, sd.w
    eta = xs @ beta
    shift = float(eta.max())  # keeps exp finite; cancels exactly in every term
    phi = ws * np.exp(eta - shift)
    phix = phi[:, None] * xs
    s0 = np.cumsum(phi[::-1])[::-1]
    s1 = np.cumsum(phix[::-1], axis=0)[::-1]
    phixx = phix[:, :, None] * xs[:, None, :]
    s2 = np.cumsum(phixx[::-1], axis=0)[::-1]

    di, rs = sd.death_idx, sd.risk_start
    if not sd.tied:
        wd = ws[di]
        denom = s0[rs]
        e = s1[rs] / denom[:, None]
        ll = float(wd @ (eta[di] - shift) - wd @ np.log(denom))
        grad = wd @ xs[di] - (wd[:, None] * e).sum(axis=0)
        v = s2[rs] / denom[:, None, None] - e[:, :, None] * e[:, None, :]
        info = np.tensordot(wd, v, axes=1)
        return ll, grad, info

    p = xs.shape[1]
    ll, grad, info = 0.0, np.zeros(p), np.zeros((p, p))
    gb = sd.group_bounds
    for g0, g1 in zip(gb[:-1], gb[1:]):
        members = di[g0:g1]
        d = g1 - g0
        start = rs[g0]
        wd = ws[members]
        wbar = wd.sum() / d
        frac = np.arange(d) / d if ties == "efron" else np.zeros(d)
        tie0 = phi[members].sum()
        tie1 = phix[members].sum(axis=0)
        tie2 = phixx[members].sum(axis=0)
        denom = s0[start] - frac * tie0
        e = (s1[start] - frac[:, None] * tie1) / denom[:, None]
        ll += float(wd @ (eta[members] - shift)) - wbar * float(np.log(denom).sum())
        grad += wd @ xs[members] - wbar * e.sum(axis=0)
        v = (s2[start] - frac[:, None, None] * tie2) / denom[:, None, None]
        info += wbar * (v - e[:, :, None] * e[:, None, :]).sum(axis=0)
    return ll, grad, info


def log_partial_likelihood(beta, x, times, events, weights=None, ties="efron") -> float:
    """Weighted log partial likelihood with Efron or Breslow tie correction."""
    _check_ties(ties)
    x, times, events, w = _validate(x, times, events, weights)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    ll, _, _ = _accumulate(_SortedData(x, times, events, w), beta, ties)
    return ll


def score(beta, x, times, events, weights=None, ties="efron") -> np.ndarray:
    """Analytic gradient of the weighted log partial likelihood."""
    _check_ties(ties)
    x, times, events, w = _validate(x, times, events, weights)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    _, grad, _ = _accumulate(_SortedData(x, times, events, w), beta, ties)
    return grad


def information(beta, x, times, events, weights=None, ties="efron") -> np.ndarray:
    """Observed information (negative Hessian) of the log partial likelihood."""
    _check_ties(ties)
    x, times, events, w = _validate(x, times, events, weights)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    _, _, info = _accumulate(_SortedData(x, times, events, w), beta, ties)
    return info


def fit_cox(
    x,
    times,
    events,
    weights=None,
    ties: str = "efron",
    robust: bool | None = None,
    names: tuple[str, ...] | None = None,
) -> CoxFit:
    """Newton-Raphson maximizer of the weighted partial likelihood from β = 0.

    `robust=None` computes the sandwich covariance exactly when weights are
    supplied, which is when the model covariance stops being trustworthy.
    """
    _check_ties(ties)
    if names is None and isinstance(x, DesignMatrix):
        names = x.names
    x, times, events, w = _validate(x, times, events, weights)
    centered = x - x.mean(axis=0)
    if np.linalg.matrix_rank(centered) < x.shape[1]:
        raise RankDeficiencyError("design has constant or collinear columns")
    sd = _SortedData(x, times, events, w)

    def objective(beta):
        return _accumulate(sd, beta, ties)

    beta, ll, _, info, it = _newton(
        np.zeros(x.shape[1]), objective, "cox fit", max_iter=MAX_ITER
    )
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("information matrix singular at the maximizer") from None
    cov = (cov + cov.T) / 2.0
    if robust is None:
        robust = weights is not None
    fit = CoxFit(beta, cov, None, ll, ties, True, it, None if weights is None else w.copy(), names)
    if robust:
        rob = robust_variance(fit, x, times, events, weights)
        fit = CoxFit(beta, cov, rob, ll, ties, True, it, fit.weights, names)
    return fit


def _score_residuals(fit, sd: _SortedData):
    """Per-subject score residuals (sorted order), risk-set means by Breslow.

    resid_i = δ_i (x_i − x̄(t_i)) − e^{η_i} Σ_{t_k ≤ t_i} dĤ₀(t_k) (x_i − x̄(t_k))
    where dĤ₀ is the weighted Breslow baseline increment. Weighted rows sum to
    the score, which vanishes at β̂ (exactly so without tied deaths).
    """
    xs, ws = sd.x, sd.w
    eta = xs @ fit.beta_hat
    shift = float(eta.max())
    phi = ws * np.exp(eta - shift)
    s0 = np.cumsum(phi[::-1])[::-1]
    s1 = np.cumsum((phi[:, None] * xs)[::-1], axis=0)[::-1]

    di, rs = sd.death_idx, sd.risk_start
    gb = sd.group_bounds
    starts = rs[gb[:-1]]                       # risk-set start per distinct death time
    dt = sd.t[di[gb[:-1]]]                     # distinct death times
    wd_group = np.add.reduceat(ws[di], gb[:-1])
    denom = s0[starts]
    xbar = s1[starts] / denom[:, None]
    dh0 = wd_group / denom                     # baseline increment, shift-scaled
    cum_h = np.cumsum(dh0)
    cum_hx = np.cumsum(dh0[:, None] * xbar, axis=0)

    # number of distinct death times at or before each subject's time
    k = np.searchsorted(dt, sd.t, side="right")
    expect = np.zeros_like(xs)
    pos = k > 0
    ki = k[pos] - 1
    rate = np.exp(eta[pos] - shift)
    expect[pos] = rate[:, None] * (cum_h[ki, None] * xs[pos] - cum_hx[ki])
    observed = np.zeros_like(xs)
    observed[di] = xs[di] - xbar[np.searchsorted(dt, sd.t[di])]
    return observed - expect, dh0, dt, cum_h, k


def robust_variance(fit: CoxFit, x, times, events, weights=None) -> np.ndarray:
    """Sandwich covariance A⁻¹ B A⁻¹ from weighted per-subject score residuals."""
    if not fit.converged:
        raise DataError("robust variance requires a converged fit")
    x, times, events, w = _validate(x, times, events, weights)
    sd = _SortedData(x, times, events, w)
    resid, *_ = _score_residuals(fit, sd)
    scaled = sd.w[:, None] * resid
    b = scaled.T @ scaled
    _, _, info = _accumulate(sd, fit.beta_hat, fit.ties)
    try:
        a_inv = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("information matrix singular in sandwich") from None
    out = a_inv @ b @ a_inv
    return (out + out.T) / 2.0


def residuals(fit: CoxFit, x, times, events, weights=None) -> ResidualSet:
    """Martingale residuals (Breslow baseline) and per-event Schoenfeld rows."""
    if not fit.converged:
        raise DataError("residuals require a converged fit")
    x, times, events, w = _validate(x, times, events, weights)
    sd = _SortedData(x, times, events, w)
    xs, ws = sd.x, sd.w
    eta = xs @ fit.beta_hat
    shift = float(eta.max())
    phi = ws * np.exp(eta - shift)
    phix = phi[:, None] * xs
    s0 = np.cumsum(phi[::-1])[::-1]
    s1 = np.cumsum(phix[::-1], axis=0)[::-1]

    di, rs = sd.death_idx, sd.risk_start
    gb = sd.group_bounds
    starts = rs[gb[:-1]]
    dt = sd.t[di[gb[:-1]]]
    wd_group = np.add.reduceat(ws[di], gb[:-1])
    cum_h = np.cumsum(wd_group / s0[starts])
    k = np.searchsorted(dt, sd.t, side="right")
    h0 = np.where(k > 0, cum_h[np.maximum(k - 1, 0)], 0.0)
    mart_sorted = sd.ev - h0 * np.exp(eta - shift)
    martingale = np.empty_like(mart_sorted)
    martingale[sd.order] = mart_sorted

    # Schoenfeld rows: deviation from the tie-averaged risk-set mean, scaled
    # by the subject weight so columns sum to zero under weighting too
    scho = np.empty((len(di), xs.shape[1]))
    for g0, g1 in zip(gb[:-1], gb[1:]):
        members = di[g0:g1]
        d = g1 - g0
        start = rs[g0]
        frac = np.arange(d) / d if fit.ties == "efron" else np.zeros(d)
        tie0 = phi[members].sum()
        tie1 = phix[members].sum(axis=0)
        denom = s0[start] - frac * tie0
        e_mean = ((s1[start] - frac[:, None] * tie1) / denom[:, None]).mean(axis=0)
        scho[g0:g1] = ws[members, None] * (xs[members] - e_mean)
    return ResidualSet(martingale, scho, sd.t[di].copy(), times.copy(), np.asarray(events, dtype=int).copy())


def ph_test(fit: CoxFit, resid: ResidualSet, transform: str = "km"):
    """Score test for non-proportionality: slope of Schoenfeld rows on g(t).

    Returns (per_covariate, global_test) where per_covariate is a list of
    (chi_square, df, p) with df = 1 and global_test aggregates all
    coefficients with df = p. `transform` is one of "km" (1 − KM survival at
    the event time, the default), "identity", or "rank".
    """
    if transform not in TRANSFORMS:
        raise DataError(f"transform must be one of {TRANSFORMS}")
    n_events = resid.schoenfeld.shape[0]
    p = len(fit.beta_hat)
    if n_events < 2:
        raise DataError("proportional-hazards test needs at least 2 events")
    if n_events < p:
        raise DataError("fewer events than coefficients")
    if transform == "km":
        km = kaplan_meier(resid.times, resid.events)
        g = 1.0 - km(resid.event_times)
    elif transform == "identity":
        g = resid.event_times.astype(float)
    else:
        g = np.argsort(np.argsort(resid.event_times, kind="stable"), kind="stable") + 1.0
    g = g - g.mean()
    gss = float(g @ g)
    if gss <= 0:
        raise DataError("degenerate time transform (all event times map equal)")
    u = resid.schoenfeld.T @ g
    vbar = _info_at(fit) / n_events
    per = []
    for j in range(p):
        chi = float(u[j] ** 2 / (gss * vbar[j, j]))
        per.append((chi, 1, float(stats.chi2.sf(chi, 1))))
    try:
        sol = np.linalg.solve(vbar, u)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("singular information in global test") from None
    chi_g = float(u @ sol / gss)
    return per, (chi_g, p, float(stats.chi2.sf(chi_g, p)))


def _info_at(fit: CoxFit) -> np.ndarray:
    inv = np.linalg.inv(fit.model_covariance)
    return (inv + inv.T) / 2.0
