"""Command-line interface: fit, ampute, impute, analyze, diagnose, simulate.

Exit codes: 0 success, 1 usage error (bad flags, invalid combinations,
unreadable inputs), 2 numerical failure (non-convergence, separation, rank
deficiency). Every run prints its effective seed and resolved configuration,
and every output is accompanied by a JSON manifest, so any result can be
reproduced from its log alone. Tables use fixed 6-decimal formatting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from scipy import stats

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .coxfit import fit_cox, ph_test, residuals
from .dataio import load_dataset, load_schema, write_dataset
from .errors import DataError, SurvmissError
from .methods import DEFAULT_KAPPAS, DEFAULT_M, KINDS, MethodSpec, run_method
from .mi_engine import impute_nonparametric, impute_parametric
from .missingness import TRUNCATION, AmputationPlan, ampute_mar
from .simharness import SimConfig, run_simulation


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def _resolve_seed(seed) -> int:
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    return int(seed)


def _echo(seed: int, config: dict) -> None:
    print(f"seed: {seed}")
    print(f"config: {json.dumps(config, sort_keys=True)}")


def _write_manifest(output_path: str, seed: int, config: dict) -> None:
    """Sibling manifest for a file output, or manifest.json inside a directory."""
    if os.path.isdir(output_path):
        path = os.path.join(output_path, "manifest.json")
    else:
        path = output_path + ".manifest.json"
    payload = {"version": __version__, "seed": seed, "config": config}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_inputs(args):
    try:
        schema = load_schema(args.schema)
        return load_dataset(args.input, schema)
    except (OSError, SurvmissError) as exc:
        raise _UsageError(str(exc)) from exc


def _csv_list(text: str) -> tuple[str, ...]:
    items = tuple(part.strip() for part in text.split(",") if part.strip())
    if not items:
        raise _UsageError(f"empty list argument {text!r}")
    return items


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in _csv_list(text))
    except ValueError as exc:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _weights_from(dataset, column):
    if column is None:
        return None
    try:
        kind = dataset.kind_of(column)
    except SurvmissError as exc:
        raise _UsageError(str(exc)) from exc
    if kind not in ("continuous", "auxiliary"):
        raise _UsageError(f"weights column {column!r} must be numeric")
    if dataset.missing[column].any():
        raise _UsageError(f"weights column {column!r} has missing cells")
    return dataset.values[column]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    dataset = _load_inputs(args)
    weights = _weights_from(dataset, args.weights_column)
    covariates = dataset.covariate_names()
    keep = dataset.complete_mask(covariates)
    sub = dataset.take(keep)
    w = None if weights is None else weights[keep]
    dropped = int(dataset.n_rows - sub.n_rows)
    robust = {"auto": None, "on": True, "off": False}[args.robust]
    config = {
        "command": "fit", "input": args.input, "schema": args.schema,
        "output": args.output, "ties": args.ties, "robust": args.robust,
        "weights_column": args.weights_column, "dropped_incomplete_rows": dropped,
    }
    seed = 0  # fitting is deterministic; recorded for manifest uniformity
    _echo(seed, config)

    from .dataio import encode

    design = encode(sub, covariates)
    fit = fit_cox(design, sub.times, sub.events, weights=w, ties=args.ties, robust=robust)
    se_model = np.sqrt(np.diag(fit.model_covariance))
    se_rob = None if fit.robust_covariance is None else np.sqrt(np.diag(fit.robust_covariance))
    se_used = se_model if se_rob is None else se_rob
    z = stats.norm.ppf(0.975)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,beta,hr,se,robust_se,ci_low,ci_high,p\n")
        for j, name in enumerate(design.names):
            beta = fit.beta_hat[j]
            p = 2.0 * stats.norm.sf(abs(beta) / se_used[j])
            fh.write(",".join([
                name, _fmt(beta), _fmt(float(np.exp(beta))), _fmt(se_model[j]),
                _fmt(None if se_rob is None else se_rob[j]),
                _fmt(beta - z * se_used[j]), _fmt(beta + z * se_used[j]), _fmt(p),
            ]) + "\n")
    _write_manifest(args.output, seed, config)
    print(f"wrote {args.output}")
    return 0


def _cmd_ampute(args) -> int:
    dataset = _load_inputs(args)
    seed = _resolve_seed(args.seed)
    try:
        plan = AmputationPlan(
            target=args.target,
            predictors=_csv_list(args.predictors),
            rate=args.rate,
            score_weights=None if args.score_weights is None else _float_list(args.score_weights),
            seed=seed,
        )
    except SurvmissError as exc:
        raise _UsageError(str(exc)) from exc
    config = {
        "command": "ampute", "input": args.input, "schema": args.schema,
        "output": args.output, "target": plan.target,
        "predictors": list(plan.predictors), "rate": plan.rate,
        "score_weights": None if plan.score_weights is None else list(plan.score_weights),
    }
    _echo(seed, config)
    amputed = ampute_mar(dataset, plan, np.random.default_rng(seed))
    r = amputed.observed_mask(plan.target).astype(float)
    write_dataset(amputed, args.output, extra={"R": r})
    _write_manifest(args.output, seed, config)
    print(f"wrote {args.output} (missing rate {1.0 - r.mean():.4f}; reload with "
          f"the original schema plus \"R\": \"auxiliary\")")
    return 0


def _cmd_impute(args) -> int:
    dataset = _load_inputs(args)
    seed = _resolve_seed(args.seed)
    config = {
        "command": "impute", "input": args.input, "schema": args.schema,
        "outdir": args.outdir, "engine": args.engine, "m": args.m,
    }
    _echo(seed, config)
    rng = np.random.default_rng(seed)
    if args.engine == "parametric":
        imputations = impute_parametric(dataset, args.m, rng)
    else:
        imputations = impute_nonparametric(dataset, args.m, rng)
    os.makedirs(args.outdir, exist_ok=True)
    width = len(str(args.m))
    files = []
    for i, completed in enumerate(imputations.datasets, start=1):
        path = os.path.join(args.outdir, f"imputed_{i:0{width}d}.csv")
        write_dataset(completed, path)
        files.append(os.path.basename(path))
    config["provenance"] = {
        "target": imputations.target,
        "predictors": list(imputations.predictor_names),
        "engines": list(imputations.engines),
        "draw_seeds": list(imputations.draw_seeds),
        "files": files,
    }
    _write_manifest(args.outdir, seed, config)
    print(f"wrote {len(files)} files to {args.outdir}")
    return 0


def _cmd_analyze(args) -> int:
    dataset = _load_inputs(args)
    seed = _resolve_seed(args.seed)
    try:
        spec = MethodSpec(
            kind=args.method,
            m=args.m,
            kappa=args.kappa,
            split=None if args.split is None else tuple(int(v) for v in _float_list(args.split)),
            propensity_predictors=None if args.propensity_predictors is None
            else _csv_list(args.propensity_predictors),
            ties=args.ties,
            robust={"auto": None, "on": True, "off": False}[args.robust],
            truncation=tuple(args.truncation),
        )
    except SurvmissError as exc:
        raise _UsageError(str(exc)) from exc
    config = {
        "command": "analyze", "input": args.input, "schema": args.schema,
        "output": args.output, "method": spec.kind, "kappa": spec.kappa,
        "m": spec.m, "split": None if spec.split is None else list(spec.split),
        "ties": spec.ties, "robust": args.robust,
        "truncation": list(spec.truncation),
        "propensity_predictors": None if spec.propensity_predictors is None
        else list(spec.propensity_predictors),
    }
    _echo(seed, config)
    result = run_method(dataset, spec, seed)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write("method,kappa,m,name,estimate,se,ci_low,ci_high,hr,hr_ci_low,hr_ci_high\n")
        for j, name in enumerate(result.names):
            fh.write(",".join([
                result.kind,
                _fmt(result.kappa),
                "" if result.m is None else str(result.m),
                name,
                _fmt(result.estimates[j]),
                _fmt(result.se[j]),
                _fmt(result.ci_low[j]),
                _fmt(result.ci_high[j]),
                _fmt(float(np.exp(result.estimates[j]))),
                _fmt(float(np.exp(result.ci_low[j]))),
                _fmt(float(np.exp(result.ci_high[j]))),
            ]) + "\n")
    _write_manifest(args.output, seed, config)
    print(f"wrote {args.output}")
    return 0


def _cmd_diagnose(args) -> int:
    dataset = _load_inputs(args)
    weights = _weights_from(dataset, args.weights_column)
    covariates = dataset.covariate_names()
    keep = dataset.complete_mask(covariates)
    sub = dataset.take(keep)
    w = None if weights is None else weights[keep]
    config = {
        "command": "diagnose", "input": args.input, "schema": args.schema,
        "outdir": args.outdir, "ties": args.ties, "transform": args.transform,
        "weights_column": args.weights_column,
        "dropped_incomplete_rows": int(dataset.n_rows - sub.n_rows),
    }
    seed = 0
    _echo(seed, config)

    from .dataio import encode

    design = encode(sub, covariates)
    fit = fit_cox(design, sub.times, sub.events, weights=w, ties=args.ties)
    resid = residuals(fit, design, sub.times, sub.events, weights=w)
    per, global_test = ph_test(fit, resid, transform=args.transform)

    os.makedirs(args.outdir, exist_ok=True)
    ph_path = os.path.join(args.outdir, "ph_test.csv")
    with open(ph_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,chi_square,df,p\n")
        for name, (chi, df, p) in zip(design.names, per):
            fh.write(f"{name},{_fmt(chi)},{df},{_fmt(p)}\n")
        chi, df, p = global_test
        fh.write(f"GLOBAL,{_fmt(chi)},{df},{_fmt(p)}\n")
    mart_path = os.path.join(args.outdir, "residuals.csv")
    with open(mart_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("time,event,martingale\n")
        for t, e, m in zip(sub.times, sub.events, resid.martingale):
            fh.write(f"{_fmt(t)},{int(e)},{_fmt(m)}\n")
    scho_path = os.path.join(args.outdir, "schoenfeld.csv")
    with open(scho_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("event_time," + ",".join(design.names) + "\n")
        for t, row in zip(resid.event_times, resid.schoenfeld):
            fh.write(_fmt(t) + "," + ",".join(_fmt(v) for v in row) + "\n")
    _write_manifest(args.outdir, seed, config)
    print(f"wrote {ph_path}, {mart_path}, {scho_path}")
    return 0


def _sim_config_from(args) -> SimConfig:
    try:
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise _UsageError(str(exc)) from exc
    except tomllib.TOMLDecodeError as exc:
        raise _UsageError(f"{args.config}: {exc}") from exc

    data = raw.get("data", {})
    methods = raw.get("methods", {})
    run = raw.get("run", {})
    amp = raw.get("amputation")
    truth = raw.get("truth")
    dgp = raw.get("dgp")

    source = data.get("source", "synthetic")
    reference = None
    reference_path = data.get("reference")
    if source == "reference":
        if reference_path is None or "schema" not in data:
            raise _UsageError("reference source needs data.reference and data.schema paths")
        try:
            reference = load_dataset(reference_path, load_schema(data["schema"]))
        except (OSError, SurvmissError) as exc:
            raise _UsageError(str(exc)) from exc

    plan = None
    if amp is not None:
        try:
            plan = AmputationPlan(
                target=amp["target"],
                predictors=tuple(amp["predictors"]),
                rate=amp["rate"],
                score_weights=tuple(amp["score_weights"]) if "score_weights" in amp else None,
            )
        except (KeyError, SurvmissError) as exc:
            raise _UsageError(f"bad [amputation] section: {exc}") from exc

    seed = args.seed if args.seed is not None else run.get("seed")
    workers = args.workers if args.workers is not None else run.get("workers", 1)
    outdir = args.outdir if args.outdir is not None else run.get("outdir")
    if outdir is None:
        raise _UsageError("output directory required (run.outdir or --outdir)")

    try:
        return SimConfig(
            source=source,
            n=data.get("n", 500),
            replicates=data.get("replicates", 300),
            true_beta=None if truth is None else {k: float(v) for k, v in truth.items()},
            dgp_beta=None if dgp is None else {k: float(v) for k, v in dgp.items()},
            censoring_target=data.get("censoring_target", 0.33),
            reference=reference,
            reference_path=reference_path,
            amputation=plan,
            kinds=tuple(methods.get("kinds", KINDS)),
            kappas=tuple(methods.get("kappas", DEFAULT_KAPPAS)),
            m=methods.get("m", DEFAULT_M),
            ties=methods.get("ties", "efron"),
            propensity_predictors=tuple(methods["propensity_predictors"])
            if "propensity_predictors" in methods else None,
            truncation=tuple(methods.get("truncation", TRUNCATION)),
            master_seed=_resolve_seed(seed),
            workers=int(workers),
            output_dir=outdir,
        )
    except SurvmissError as exc:
        raise _UsageError(str(exc)) from exc


def _cmd_simulate(args) -> int:
    config = _sim_config_from(args)
    from .simharness import _manifest_payload

    echo = dict(_manifest_payload(config))
    echo.update(command="simulate", workers=config.workers, outdir=config.output_dir)
    _echo(config.master_seed, echo)
    rows = run_simulation(config)
    n_failed = sum(row.n_failed for row in rows)
    print(f"wrote {os.path.join(config.output_dir, 'metrics.csv')} "
          f"({len(rows)} rows; {n_failed} failed cell fits)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survmiss", description=__doc__)
    parser.add_argument("--version", action="version", version=f"survmiss {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_io(p, output_flag="--output"):
        p.add_argument("--input", required=True, help="input CSV path")
        p.add_argument("--schema", required=True, help="JSON column-kind schema path")
        p.add_argument(output_flag, required=True)

    p = sub.add_parser("fit", help="Cox model fit on complete rows")
    add_io(p)
    p.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    p.add_argument("--robust", choices=("auto", "on", "off"), default="auto",
                   help="sandwich variance (auto: only when weighted)")
    p.add_argument("--weights-column", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("ampute", help="make a categorical column missing at random")
    add_io(p)
    p.add_argument("--target", required=True)
    p.add_argument("--predictors", required=True, help="comma-separated column names")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--score-weights", default=None, help="comma-separated, one per predictor")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_ampute)

    p = sub.add_parser("impute", help="write M completed datasets")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--engine", choices=("parametric", "trees"), required=True)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("analyze", help="run one missing-data strategy end to end")
    add_io(p)
    p.add_argument("--method", choices=KINDS, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--split", default=None, help="M1,M2 engine split (H1 only)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    p.add_argument("--robust", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--truncation", type=float, nargs=2, default=list(TRUNCATION),
                   metavar=("LO", "HI"))
    p.add_argument("--propensity-predictors", default=None,
                   help="comma-separated covariate names")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("diagnose", help="residuals and proportional-hazards test")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    p.add_argument("--transform", choices=("km", "identity", "rank"), default="km")
    p.add_argument("--weights-column", default=None)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte-Carlo study from a TOML config")
    p.add_argument("--config", required=True, help="TOML config path")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        # computation-stage data problems are numerical failures, not usage
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SurvmissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
