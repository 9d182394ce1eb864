"""Supporting learners: logistic and multinomial regression, bagged trees.

These back the missing-data machinery: logistic fits model the probability of
a cell being observed, multinomial fits are the parametric imputation engine,
and bagged classification trees the nonparametric one. Both regressions add
an intercept column internally and use reference-level (first level)
parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import DesignMatrix
from .errors import ConvergenceError, DataError, RankDeficiencyError, SeparationError

MAX_ITER = 100
LL_RTOL = 1e-10
SCORE_TOL = 1e-8
RUNAWAY_NORM = 1e3
# a Newton step still this large while the likelihood has plateaued means the
# maximizer is walking to infinity, not converging
PLATEAU_STEP = 1e-2


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, DesignMatrix):
        return x.matrix
    xa = np.asarray(x, dtype=float)
    if xa.ndim == 1:
        xa = xa[:, None]
    return xa


def _check_design(xa: np.ndarray) -> None:
    if not np.all(np.isfinite(xa)):
        raise DataError("design matrix contains non-finite values")
    if np.linalg.matrix_rank(xa) < xa.shape[1]:
        raise RankDeficiencyError("design matrix (with intercept) is rank deficient")


@dataclass(frozen=True)
class GlmFit:
    """Maximum-likelihood fit of a binary or multinomial logit model.

    ``coefficients`` has shape (p+1,) for binary fits and (K-1, p+1) for
    multinomial fits (one block per non-reference level); index 0 of each
    block is the intercept. ``covariance`` is the inverse observed information
    over the flattened coefficient vector.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    n_levels: int

    def __post_init__(self):
        self.coefficients.flags.writeable = False
        self.covariance.flags.writeable = False


def _newton(beta0, loglik_score_info, what: str, max_iter: int = MAX_ITER):
    """Maximize via Newton-Raphson with step halving and separation detection."""
    beta = beta0
    ll, score, info = loglik_score_info(beta)
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError(f"{what}: singular information matrix") from None
        new_beta, new_ll = beta + step, -np.inf
        # accept-threshold and score tolerance scale with |ll|: near the
        # optimum of a large problem, round-off noise in the log-likelihood
        # is proportional to its magnitude
        for _ in range(20):
            new_ll, new_score, new_info = loglik_score_info(new_beta)
            if np.isfinite(new_ll) and new_ll >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            step = step / 2.0
            new_beta = beta + step
        if not np.isfinite(new_ll):
            raise ConvergenceError(f"{what}: step halving failed to recover")
        gain = new_ll - ll
        beta, ll, score, info = new_beta, new_ll, new_score, new_info
        plateaued = abs(gain) < LL_RTOL * (abs(ll) + 1.0)
        step_norm = float(np.linalg.norm(step))
        if plateaued and np.linalg.norm(beta) > RUNAWAY_NORM:
            raise SeparationError(f"{what}: monotone likelihood (coefficients diverge)")
        if plateaued and step_norm > PLATEAU_STEP * (1.0 + np.linalg.norm(beta)):
            raise SeparationError(
                f"{what}: monotone likelihood (log-likelihood plateaued while the "
                "maximizer keeps moving)"
            )
        if plateaued and np.max(np.abs(score)) < SCORE_TOL * (1.0 + abs(ll)):
            return beta, ll, score, info, it
    raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations")


def fit_logistic(x, y, weights=None) -> GlmFit:
    """Fit a weighted binary logistic regression by Newton-Raphson.

    `y` must be 0/1; an intercept column is prepended to `x`. The covariance
    is the inverse observed information at the maximizer.
    """
    x = _as_matrix(x)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("binary response must take values in {0, 1}")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise DataError("weights must be positive")
    xa = np.hstack([np.ones((x.shape[0], 1)), x])
    _check_design(xa)

    def objective(beta):
        eta = xa @ beta
        p = _expit(eta)
        ll = float(np.sum(w * (y * _log_expit(eta) + (1 - y) * _log_expit(-eta))))
        score = xa.T @ (w * (y - p))
        info = (xa * (w * p * (1 - p))[:, None]).T @ xa
        return ll, score, info

    beta, ll, _, info, it = _newton(np.zeros(xa.shape[1]), objective, "logistic fit")
    cov = np.linalg.inv(info)
    cov = (cov + cov.T) / 2.0
    return GlmFit(beta, cov, True, it, ll, 2)


def fit_multinomial(x, y, weights=None, n_levels=None) -> GlmFit:
    """Fit a weighted multinomial logit with level 0 as the reference.

    `y` holds integer level codes 0..K-1. The fit carries K-1 coefficient
    blocks; probabilities follow the softmax over the reference-anchored
    linear predictors.
    """
    x = _as_matrix(x)
    y = np.asarray(y, dtype=int)
    if np.any(y < 0):
        raise DataError("level codes must be non-negative")
    k = int(n_levels) if n_levels is not None else int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise SeparationError("multinomial fit: response is constant at one level")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise DataError("weights must be positive")
    xa = np.hstack([np.ones((x.shape[0], 1)), x])
    _check_design(xa)
    q = xa.shape[1]
    indicators = np.stack([(y == lev).astype(float) for lev in range(1, k)], axis=1)

    def objective(beta_flat):
        b = beta_flat.reshape(k - 1, q)
        eta = xa @ b.T                                  # (n, K-1)
        eta_full = np.hstack([np.zeros((len(y), 1)), eta])
        eta_full -= eta_full.max(axis=1, keepdims=True)
        expe = np.exp(eta_full)
        probs = expe / expe.sum(axis=1, keepdims=True)  # (n, K)
        ll = float(np.sum(w * np.log(probs[np.arange(len(y)), y])))
        resid = indicators - probs[:, 1:]               # (n, K-1)
        score = (xa.T @ (w[:, None] * resid)).T.ravel()
        info = np.empty(((k - 1) * q, (k - 1) * q))
        for a in range(k - 1):
            for bidx in range(k - 1):
                pa, pb = probs[:, a + 1], probs[:, bidx + 1]
                wab = w * (pa * ((a == bidx) - pb))
                info[a * q:(a + 1) * q, bidx * q:(bidx + 1) * q] = (xa * wab[:, None]).T @ xa
        return ll, score, info

    beta, ll, _, info, it = _newton(np.zeros((k - 1) * q), objective, "multinomial fit")
    cov = np.linalg.inv(info)
    cov = (cov + cov.T) / 2.0
    return GlmFit(beta.reshape(k - 1, q), cov, True, it, ll, k)


def softmax_probs(coefficients: np.ndarray, x) -> np.ndarray:
    """Class probabilities for reference-anchored logit coefficients.

    `coefficients` has shape (K-1, p+1) with the intercept first in each
    block; level 0 is the anchored reference. Works for fitted or drawn
    coefficient values alike.
    """
    x = _as_matrix(x)
    xa = np.hstack([np.ones((x.shape[0], 1)), x])
    coefficients = np.atleast_2d(coefficients)
    eta = np.hstack([np.zeros((x.shape[0], 1)), xa @ coefficients.T])
    eta -= eta.max(axis=1, keepdims=True)
    expe = np.exp(eta)
    return expe / expe.sum(axis=1, keepdims=True)


def predict_proba(fit: GlmFit, x) -> np.ndarray:
    """Class probabilities under a fitted logit model, shape (n, K)."""
    if fit.n_levels == 2 and fit.coefficients.ndim == 1:
        x = _as_matrix(x)
        xa = np.hstack([np.ones((x.shape[0], 1)), x])
        p1 = _expit(xa @ fit.coefficients)
        return np.column_stack([1 - p1, p1])
    return softmax_probs(fit.coefficients, x)


def draw_coefficients(fit: GlmFit, rng: np.random.Generator) -> np.ndarray:
    """One draw from the asymptotic-normal posterior of the coefficients.

    Uses a symmetric square root of the covariance, so a zero covariance
    returns the point estimate exactly.
    """
    if not fit.converged:
        raise ConvergenceError("cannot draw coefficients from a non-converged fit")
    flat = fit.coefficients.ravel()
    eigval, eigvec = np.linalg.eigh(fit.covariance)
    if np.any(eigval < -1e-8 * max(1.0, float(eigval.max(initial=0.0)))):
        raise RankDeficiencyError("covariance factorization failure: negative eigenvalue")
    root = eigvec @ np.diag(np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.T
    draw = flat + root @ rng.standard_normal(len(flat))
    return draw.reshape(fit.coefficients.shape)


def _expit(eta):
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_expit(eta):
    # log(1/(1+e^-eta)) computed without overflow
    out = np.where(eta >= 0, -np.log1p(np.exp(-np.abs(eta))), eta - np.log1p(np.exp(-np.abs(eta))))
    return out


# ---------------------------------------------------------------------------
# Bagged classification trees
# ---------------------------------------------------------------------------

DEFAULT_TREES = 10
DEFAULT_MIN_LEAF = 5
DEFAULT_MAX_DEPTH = 30


@dataclass(frozen=True)
class TreeNode:
    feature: int
    threshold: float
    left: "TreeNode | Leaf"
    right: "TreeNode | Leaf"


@dataclass(frozen=True)
class Leaf:
    counts: np.ndarray  # per-class training counts; sums to the leaf's sample size

    def __post_init__(self):
        self.counts.flags.writeable = False


@dataclass(frozen=True)
class TreeEnsemble:
    """Bagged CART classifiers whose leaves keep raw class counts."""

    trees: tuple
    bootstrap_seeds: tuple[int, ...]
    n_levels: int
    min_leaf: int
    max_depth: int


def _best_split(x, y, k, min_leaf):
    """Scan all (feature, threshold) pairs for the largest Gini decrease."""
    n = len(y)
    total = np.bincount(y, minlength=k).astype(float)
    parent_ss = float(np.sum(total**2))
    best = None  # (weighted_child_gini_cost, feature, threshold)
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        ys = y[order]
        onehot = np.zeros((n, k))
        onehot[np.arange(n), ys] = 1.0
        left = np.cumsum(onehot, axis=0)            # counts in first i rows, row i-1
        sizes = np.arange(1, n + 1, dtype=float)
        i = sizes[:-1]
        valid = (i >= min_leaf) & (n - i >= min_leaf) & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        left_ss = np.sum(left[:-1] ** 2, axis=1)
        right_ss = np.sum((total - left[:-1]) ** 2, axis=1)
        # n_L*g_L + n_R*g_R = n - left_ss/n_L - right_ss/n_R, up to the constant n
        cost = -(left_ss / i) - (right_ss / (n - i))
        cost[~valid] = np.inf
        pos = int(np.argmin(cost))
        if cost[pos] < np.inf and (best is None or cost[pos] < best[0] - 1e-12):
            best = (float(cost[pos]), j, float((xs[pos] + xs[pos + 1]) / 2.0))
    if best is None:
        return None
    # require a strict impurity decrease over the unsplit node
    if -best[0] <= parent_ss / n + 1e-12:
        return None
    return best[1], best[2]


def _grow(x, y, k, min_leaf, max_depth, depth):
    counts = np.bincount(y, minlength=k).astype(float)
    if depth >= max_depth or len(y) < 2 * min_leaf or np.count_nonzero(counts) <= 1:
        return Leaf(counts)
    split = _best_split(x, y, k, min_leaf)
    if split is None:
        return Leaf(counts)
    j, thr = split
    go_left = x[:, j] <= thr
    return TreeNode(
        j,
        thr,
        _grow(x[go_left], y[go_left], k, min_leaf, max_depth, depth + 1),
        _grow(x[~go_left], y[~go_left], k, min_leaf, max_depth, depth + 1),
    )


def fit_trees(
    x,
    y,
    n_trees: int = DEFAULT_TREES,
    min_leaf: int = DEFAULT_MIN_LEAF,
    max_depth: int = DEFAULT_MAX_DEPTH,
    rng: np.random.Generator | None = None,
) -> TreeEnsemble:
    """Bag `n_trees` Gini-grown classification trees on bootstrap resamples."""
    x = _as_matrix(x)
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise DataError("empty training data")
    if n_trees < 1 or min_leaf < 1:
        raise DataError("n_trees and min_leaf must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    k = int(y.max()) + 1
    seeds = tuple(int(s) for s in rng.integers(0, 2**63 - 1, size=n_trees))
    trees = []
    for seed in seeds:
        boot = np.random.default_rng(seed).integers(0, len(y), size=len(y))
        trees.append(_grow(x[boot], y[boot], k, min_leaf, max_depth, 0))
    return TreeEnsemble(tuple(trees), seeds, k, min_leaf, max_depth)


def _route(node, row):
    while isinstance(node, TreeNode):
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node


def draw_class(ensemble: TreeEnsemble, x_row, rng: np.random.Generator) -> int:
    """Sample a level: pick a tree uniformly, route the row, draw from its leaf.

    The tree choice and leaf draw are the imputation-uncertainty mechanism;
    the result is a level code, not a majority vote.
    """
    row = np.asarray(x_row, dtype=float)
    tree = ensemble.trees[int(rng.integers(len(ensemble.trees)))]
    counts = _route(tree, row).counts
    cdf = np.cumsum(counts / counts.sum())
    return int(np.searchsorted(cdf, rng.random(), side="right"))
