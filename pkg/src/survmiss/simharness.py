"""Monte-Carlo evaluation of the analysis strategies.

Replicates are generated (synthetic exponential-hazard data with known
coefficients) or subsampled without replacement from a reference table, then
amputed and pushed through every requested (method, kappa) cell. Aggregation
reports absolute/relative bias, mean CI width, and coverage per coefficient.

Determinism contract: all per-replicate randomness derives from
(master seed, replicate index), so the output tables are byte-identical for
any worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .coxfit import fit_cox
from .dataio import Dataset, encode
from .errors import ConvergenceError, DataError
from .methods import DEFAULT_KAPPAS, DEFAULT_M, KINDS, run_kappa_grid
from .missingness import TRUNCATION, AmputationPlan, ampute_mar

SOURCES = ("synthetic", "reference")
SYNTHETIC_COLUMNS = (
    ("time", "time"), ("event", "event"), ("grp", "categorical"),
    ("z1", "continuous"), ("z2", "continuous"),
)
SYNTHETIC_LEVELS = ("a", "b", "c")
SYNTHETIC_NAMES = ("grp:b", "grp:c", "z1", "z2")
# multinomial-logit slope tying the categorical to z1; large enough that the
# category stays well imputable from the observed columns
GRP_SLOPE = 1.5
MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one simulation study.

    `true_beta` is the benchmark the estimates are scored against. When
    `dgp_beta` is also given, synthetic replicates are generated from it
    instead; that separates the generating hazard from the target values,
    which is how a deliberately misspecified working model is scored against
    its own large-sample (pseudo-true) coefficients.
    """

    source: str
    n: int
    replicates: int
    true_beta: dict[str, float] | None = None
    dgp_beta: dict[str, float] | None = None
    censoring_target: float = 0.33
    reference: Dataset | None = None
    reference_path: str | None = None
    amputation: AmputationPlan | None = None
    kinds: tuple[str, ...] = KINDS
    kappas: tuple[float, ...] = DEFAULT_KAPPAS
    m: int = DEFAULT_M
    ties: str = "efron"
    propensity_predictors: tuple[str, ...] | None = None
    truncation: tuple[float, float] = TRUNCATION
    master_seed: int = 0
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DataError(f"source must be one of {SOURCES}")
        if self.replicates < 1:
            raise DataError("at least one replicate required")
        if self.n < 20:
            raise DataError("replicate size must be at least 20")
        if any(not 0.0 <= k <= 1.0 for k in self.kappas):
            raise DataError("kappa values must lie in [0, 1]")
        if self.master_seed < 0:
            raise DataError("master seed must be non-negative")
        if self.workers < 1:
            raise DataError("worker count must be at least 1")
        if self.source == "synthetic":
            if self.true_beta is None:
                raise DataError("synthetic source requires true_beta")
            missing = [k for k in SYNTHETIC_NAMES if k not in self.true_beta]
            if missing:
                raise DataError(f"true_beta missing coefficients {missing}")
            if self.dgp_beta is not None:
                missing = [k for k in SYNTHETIC_NAMES if k not in self.dgp_beta]
                if missing:
                    raise DataError(f"dgp_beta missing coefficients {missing}")
        else:
            if self.reference is None:
                raise DataError("reference source requires a reference dataset")
            if self.n > self.reference.n_rows:
                raise DataError("replicate size exceeds the reference table")
            if not all(~m.any() for m in self.reference.missing.values()):
                raise DataError("reference table must be fully observed")
        for kind in self.kinds:
            if kind not in KINDS:
                raise DataError(f"unknown method kind {kind!r}")


@dataclass(frozen=True)
class MetricsRow:
    method: str
    kappa: float | None
    coefficient: str
    abs_bias: float
    rel_bias_pct: float | None
    mean_ci_width: float
    coverage_pct: float
    n_used: int
    n_failed: int


def generate_synthetic(n, true_beta, censoring_rate_target, rng) -> Dataset:
    """Exponential-hazard data: 3-level categorical tied to z1, two normals.

    Event times follow rate exp(beta' X) against a unit baseline; independent
    exponential censoring has its rate solved by bisection so the expected
    censored fraction matches the target.

    An optional "z1^2" entry in `true_beta` adds a centered quadratic in z1
    to the log hazard. The analysis model stays linear, so a nonzero value
    generates data the working model is deliberately misspecified for; the
    coefficients a full-data fit converges to then differ from the named
    entries and should be calibrated separately.
    """
    if not 0.0 < censoring_rate_target < 1.0:
        raise DataError("censoring target must lie strictly inside (0, 1)")
    missing = [k for k in SYNTHETIC_NAMES if k not in true_beta]
    if missing:
        raise DataError(f"true_beta missing coefficients {missing}")
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    u = rng.random(n)
    raw_t = rng.exponential(size=n)
    raw_c = rng.exponential(size=n)

    eta = np.column_stack([np.zeros(n), GRP_SLOPE * z1, -GRP_SLOPE * z1])
    eta -= eta.max(axis=1, keepdims=True)
    probs = np.exp(eta)
    probs /= probs.sum(axis=1, keepdims=True)
    grp = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1).astype(np.int64)

    lp = (
        true_beta["grp:b"] * (grp == 1)
        + true_beta["grp:c"] * (grp == 2)
        + true_beta["z1"] * z1
        + true_beta["z2"] * z2
        + true_beta.get("z1^2", 0.0) * (z1 * z1 - 1.0)
    )
    rate = np.exp(lp)
    t_event = raw_t / rate

    scale = float(np.median(rate))
    lo, hi = np.log(scale * 1e-12), np.log(scale * 1e12)

    def censored_fraction(log_c):
        c = np.exp(log_c)
        return float(np.mean(c / (c + rate)))

    if not censored_fraction(lo) < censoring_rate_target < censored_fraction(hi):
        raise ConvergenceError("censoring-rate bisection failed to bracket the target")
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if censored_fraction(mid) < censoring_rate_target:
            lo = mid
        else:
            hi = mid
    c_rate = np.exp((lo + hi) / 2.0)
    t_cens = raw_c / c_rate

    time = np.minimum(t_event, t_cens)
    event = (t_event <= t_cens).astype(float)
    values = {"time": time, "event": event, "grp": grp, "z1": z1, "z2": z2}
    flags = {name: np.zeros(n, dtype=bool) for name, _ in SYNTHETIC_COLUMNS}
    return Dataset(SYNTHETIC_COLUMNS, values, flags, {"grp": SYNTHETIC_LEVELS})


def subsample_replicates(reference: Dataset, n: int, count: int, rng):
    """Yield `count` uniform without-replacement row samples of size n."""
    if n > reference.n_rows:
        raise DataError("subsample size exceeds the reference table")
    for _ in range(count):
        idx = rng.choice(reference.n_rows, size=n, replace=False)
        yield reference.take(idx)


def _replicate_dataset(config: SimConfig, r: int) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, r, 0]))
    if config.source == "synthetic":
        beta = config.dgp_beta if config.dgp_beta is not None else config.true_beta
        return generate_synthetic(config.n, beta, config.censoring_target, rng)
    idx = rng.choice(config.reference.n_rows, size=config.n, replace=False)
    return config.reference.take(idx)


def _run_one(config: SimConfig, r: int):
    """All (method, kappa) cells for one replicate; returns JSON-able records."""
    data = _replicate_dataset(config, r)
    if config.amputation is not None:
        amp_rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, r, 1]))
        data = ampute_mar(data, config.amputation, amp_rng)
    method_seed = int(np.random.SeedSequence([config.master_seed, r, 2]).generate_state(1)[0])
    results, failures = run_kappa_grid(
        data, config.kinds, config.kappas, method_seed,
        m=config.m, ties=config.ties,
        propensity_predictors=config.propensity_predictors,
        truncation=config.truncation,
    )
    records = []
    for kind in config.kinds:
        kappa_values = [None] if (kind, None) in results or (kind, None) in failures \
            else [float(k) for k in config.kappas]
        for kappa in kappa_values:
            key = (kind, kappa)
            rec = {"replicate": r, "method_seed": method_seed, "method": kind, "kappa": kappa}
            if key in results:
                res = results[key]
                rec.update(
                    names=list(res.names),
                    estimates=[float(v) for v in res.estimates],
                    ci_low=[float(v) for v in res.ci_low],
                    ci_high=[float(v) for v in res.ci_high],
                    error=None,
                )
            else:
                rec.update(names=None, estimates=None, ci_low=None, ci_high=None,
                           error=failures[key])
            records.append(rec)
    return records


def _reference_truth(config: SimConfig):
    covariates = config.reference.covariate_names()
    design = encode(config.reference, covariates)
    fit = fit_cox(design, config.reference.times, config.reference.events, ties=config.ties)
    return design.names, fit.beta_hat


def _aggregate(config: SimConfig, names, truth, all_records):
    by_cell: dict = {}
    for rec in all_records:
        by_cell.setdefault((rec["method"], rec["kappa"]), []).append(rec)
    rows = []
    for (kind, kappa), recs in by_cell.items():
        ok = [r for r in recs if r["error"] is None]
        n_failed = len(recs) - len(ok)
        if n_failed / config.replicates > MAX_FAILURE_FRACTION:
            raise ConvergenceError(
                f"{kind} kappa={kappa}: {n_failed} of {config.replicates} replicates "
                "failed (above the 5% abort threshold)"
            )
        if not ok:
            continue
        for r in ok:
            if tuple(r["names"]) != tuple(names):
                raise DataError("coefficient names differ across replicates")
        est = np.array([r["estimates"] for r in ok])
        low = np.array([r["ci_low"] for r in ok])
        high = np.array([r["ci_high"] for r in ok])
        for j, name in enumerate(names):
            tj = truth[j]
            abs_bias = float(est[:, j].mean() - tj)
            rel = float(100.0 * abs_bias / tj) if tj != 0 else None
            width = float((high[:, j] - low[:, j]).mean())
            cover = float(100.0 * np.mean((low[:, j] <= tj) & (tj <= high[:, j])))
            rows.append(MetricsRow(kind, kappa, name, abs_bias, rel, width,
                                   cover, len(ok), n_failed))
    return rows


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def write_metrics(rows, path) -> None:
    """Fixed 6-decimal CSV so identical runs are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,kappa,coefficient,abs_bias,rel_bias_pct,"
                 "mean_ci_width,coverage_pct,n_used,n_failed\n")
        for row in rows:
            fh.write(",".join([
                row.method,
                _fmt(row.kappa),
                row.coefficient,
                _fmt(row.abs_bias),
                _fmt(row.rel_bias_pct),
                _fmt(row.mean_ci_width),
                _fmt(row.coverage_pct),
                str(row.n_used),
                str(row.n_failed),
            ]) + "\n")


def _round6(values):
    if values is None:
        return None
    return [round(float(v), 6) for v in values]


def write_trace(all_records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for rec in all_records:
            out = dict(rec)
            for key in ("estimates", "ci_low", "ci_high"):
                out[key] = _round6(out[key])
            fh.write(json.dumps(out, sort_keys=True) + "\n")


def _manifest_payload(config: SimConfig) -> dict:
    # worker count and output paths are excluded: they must not affect results
    plan = config.amputation
    return {
        "source": config.source,
        "n": config.n,
        "replicates": config.replicates,
        "true_beta": config.true_beta,
        "dgp_beta": config.dgp_beta,
        "censoring_target": config.censoring_target,
        "reference_path": config.reference_path,
        "amputation": None if plan is None else {
            "target": plan.target,
            "predictors": list(plan.predictors),
            "rate": plan.rate,
            "score_weights": None if plan.score_weights is None else list(plan.score_weights),
        },
        "kinds": list(config.kinds),
        "kappas": list(config.kappas),
        "m": config.m,
        "ties": config.ties,
        "propensity_predictors": None if config.propensity_predictors is None
        else list(config.propensity_predictors),
        "truncation": list(config.truncation),
        "master_seed": config.master_seed,
    }


def run_simulation(config: SimConfig):
    """Run every replicate, aggregate metrics, and write the output files.

    Returns the list of MetricsRow. With `output_dir` set, writes
    metrics.csv, trace.jsonl, and manifest.json there.
    """
    if config.source == "synthetic":
        names = SYNTHETIC_NAMES
        truth = np.array([config.true_beta[k] for k in names])
    else:
        names, truth = _reference_truth(config)

    worker = partial(_run_one, config)
    indices = range(config.replicates)
    if config.workers == 1:
        per_replicate = [worker(r) for r in indices]
    else:
        chunk = max(1, config.replicates // (config.workers * 8))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_replicate = list(pool.map(worker, indices, chunksize=chunk))
    all_records = [rec for records in per_replicate for rec in records]

    rows = _aggregate(config, names, truth, all_records)
    if config.output_dir is not None:
        os.makedirs(config.output_dir, exist_ok=True)
        write_metrics(rows, os.path.join(config.output_dir, "metrics.csv"))
        write_trace(all_records, os.path.join(config.output_dir, "trace.jsonl"))
        from . import __version__

        manifest = {
            "version": __version__,
            "seed": config.master_seed,
            "config": _manifest_payload(config),
        }
        with open(os.path.join(config.output_dir, "manifest.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return rows
