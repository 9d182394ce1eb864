"""End-to-end coverage of every subcommand through main()."""

import json
import subprocess

import numpy as np
import pytest

from survmiss import generate_synthetic, load_dataset, load_schema, write_dataset
from survmiss.cli import main

from conftest import TRUE_BETA, build_dataset

SCHEMA = {"time": "time", "event": "event", "grp": "categorical",
          "z1": "continuous", "z2": "continuous"}


@pytest.fixture()
def workdir(tmp_path):
    ds = generate_synthetic(150, TRUE_BETA, 0.33, np.random.default_rng(21))
    csv = tmp_path / "data.csv"
    schema = tmp_path / "schema.json"
    write_dataset(ds, csv)
    schema.write_text(json.dumps(SCHEMA))
    return tmp_path, str(csv), str(schema)


def test_fit_writes_table_and_manifest(workdir, capsys):
    tmp, csv, schema = workdir
    out = str(tmp / "fit.csv")
    assert main(["fit", "--input", csv, "--schema", schema,
                 "--output", out]) == 0
    lines = (tmp / "fit.csv").read_text().splitlines()
    assert lines[0] == "name,beta,hr,se,robust_se,ci_low,ci_high,p"
    names = [ln.split(",")[0] for ln in lines[1:]]
    assert names == ["grp:b", "grp:c", "z1", "z2"]
    manifest = json.loads((tmp / "fit.csv.manifest.json").read_text())
    assert manifest["config"]["command"] == "fit"
    echo = capsys.readouterr().out
    assert "seed: 0" in echo and "config:" in echo


def test_fit_weights_column_must_exist(workdir):
    tmp, csv, schema = workdir
    code = main(["fit", "--input", csv, "--schema", schema,
                 "--output", str(tmp / "x.csv"), "--weights-column", "nope"])
    assert code == 1


def test_ampute_roundtrip_with_indicator(workdir, capsys):
    tmp, csv, schema = workdir
    out = str(tmp / "amputed.csv")
    code = main(["ampute", "--input", csv, "--schema", schema, "--output", out,
                 "--target", "grp", "--predictors", "time,z1",
                 "--rate", "0.3", "--seed", "99"])
    assert code == 0
    assert "seed: 99" in capsys.readouterr().out
    with_r = dict(SCHEMA, R="auxiliary")
    (tmp / "schema_r.json").write_text(json.dumps(with_r))
    reloaded = load_dataset(out, load_schema(str(tmp / "schema_r.json")))
    miss = reloaded.missing["grp"]
    assert 0.15 < miss.mean() < 0.45
    np.testing.assert_array_equal(reloaded.values["R"], (~miss).astype(float))


def amputed_inputs(tmp, csv, schema):
    """Ampute grp and return (amputed csv, schema extended with R)."""
    amp = str(tmp / "amputed.csv")
    main(["ampute", "--input", csv, "--schema", schema, "--output", amp,
          "--target", "grp", "--predictors", "time,z1", "--rate", "0.3",
          "--seed", "7"])
    schema_r = tmp / "schema_r.json"
    schema_r.write_text(json.dumps(dict(SCHEMA, R="auxiliary")))
    return amp, str(schema_r)


def test_impute_writes_numbered_files(workdir):
    tmp, csv, schema = workdir
    amp, schema_r = amputed_inputs(tmp, csv, schema)
    outdir = tmp / "imp"
    code = main(["impute", "--input", amp, "--schema", schema_r,
                 "--outdir", str(outdir), "--engine", "parametric",
                 "--m", "3", "--seed", "8"])
    assert code == 0
    files = sorted(p.name for p in outdir.glob("imputed_*.csv"))
    assert files == ["imputed_1.csv", "imputed_2.csv", "imputed_3.csv"]
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["config"]["provenance"]["files"] == files
    completed = load_dataset(outdir / "imputed_1.csv", load_schema(schema_r))
    assert not completed.missing["grp"].any()


def test_analyze_happy_path_and_kappa_rules(workdir):
    tmp, csv, schema = workdir
    amp, schema_r = amputed_inputs(tmp, csv, schema)
    out = str(tmp / "h2.csv")
    code = main(["analyze", "--input", amp, "--schema", schema_r, "--output", out,
                 "--method", "H2", "--kappa", "0.5", "--m", "3", "--seed", "5"])
    assert code == 0
    lines = (tmp / "h2.csv").read_text().splitlines()
    assert lines[0].startswith("method,kappa,m,name,estimate")
    assert lines[1].split(",")[:2] == ["H2", "0.500000"]
    # kappa is meaningless for complete-case analysis
    assert main(["analyze", "--input", amp, "--schema", schema_r,
                 "--output", out, "--method", "CC", "--kappa", "0.5"]) == 1


def test_diagnose_writes_three_tables(workdir):
    tmp, csv, schema = workdir
    outdir = tmp / "diag"
    code = main(["diagnose", "--input", csv, "--schema", schema,
                 "--outdir", str(outdir)])
    assert code == 0
    ph = (outdir / "ph_test.csv").read_text().splitlines()
    assert ph[0] == "name,chi_square,df,p"
    assert ph[-1].startswith("GLOBAL,")
    res = (outdir / "residuals.csv").read_text().splitlines()
    assert res[0] == "time,event,martingale" and len(res) == 151
    scho = (outdir / "schoenfeld.csv").read_text().splitlines()
    assert scho[0] == "event_time,grp:b,grp:c,z1,z2"
    assert (outdir / "manifest.json").exists()


def test_missing_input_is_usage_error(workdir):
    tmp, csv, schema = workdir
    assert main(["fit", "--input", str(tmp / "absent.csv"),
                 "--schema", schema, "--output", str(tmp / "o.csv")]) == 1


def test_unknown_flag_is_usage_error(workdir):
    tmp, csv, schema = workdir
    assert main(["fit", "--input", csv, "--schema", schema,
                 "--output", str(tmp / "o.csv"), "--frobnicate"]) == 1


def test_numerical_failure_exits_2(tmp_path):
    rng = np.random.default_rng(3)
    ds = build_dataset(rng.exponential(size=40) + 0.1,
                       np.ones(40), cont={"z": np.full(40, 2.5)})
    csv = tmp_path / "flat.csv"
    write_dataset(ds, csv)
    (tmp_path / "schema.json").write_text(
        json.dumps({"time": "time", "event": "event", "z": "continuous"}))
    code = main(["fit", "--input", str(csv),
                 "--schema", str(tmp_path / "schema.json"),
                 "--output", str(tmp_path / "o.csv")])
    assert code == 2


SIM_TOML = """
[data]
source = "synthetic"
n = 120
replicates = 3
censoring_target = 0.33

[truth]
"grp:b" = 0.4
"grp:c" = -0.3
z1 = 0.5
z2 = -0.5

[amputation]
target = "grp"
predictors = ["time", "z1"]
rate = 0.25
score_weights = [1.0, 1.0]

[methods]
kinds = ["CC", "MI_P"]
kappas = [0.3]
m = 3

[run]
seed = 11
workers = 1
"""


def test_simulate_from_toml_workers_agree(tmp_path, capsys):
    cfg = tmp_path / "study.toml"
    cfg.write_text(SIM_TOML)
    d1, d2 = tmp_path / "w1", tmp_path / "w2"
    assert main(["simulate", "--config", str(cfg), "--outdir", str(d1)]) == 0
    assert main(["simulate", "--config", str(cfg), "--outdir", str(d2),
                 "--workers", "2"]) == 0
    for name in ("metrics.csv", "trace.jsonl", "manifest.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    assert "seed: 11" in capsys.readouterr().out


def test_simulate_requires_outdir(tmp_path):
    cfg = tmp_path / "study.toml"
    cfg.write_text(SIM_TOML)
    assert main(["simulate", "--config", str(cfg)]) == 1


def test_simulate_rejects_bad_toml(tmp_path):
    cfg = tmp_path / "study.toml"
    cfg.write_text("data = [unclosed")
    assert main(["simulate", "--config", str(cfg),
                 "--outdir", str(tmp_path / "o")]) == 1


def test_console_script_reports_version():
    proc = subprocess.run(["survmiss", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip().startswith("survmiss ")
