import json
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest

from mwlasso import DgpConfig, fit_pds, from_csv, generate, run_mc, to_csv
from mwlasso.cli import main
from mwlasso.data import ColumnSchema
from mwlasso.simulation import rep_seed
from mwlasso.variance import Flavor, all_reports

SCHEMA = json.loads(resources.files("mwlasso").joinpath("schema/mwlasso.v1.json").read_text())

FIT_ARGS = ["--y-col", "y", "--d-col", "d", "--cluster1-col", "cluster1",
            "--cluster2-col", "cluster2"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def sim_csv(tmp_path):
    path = tmp_path / "sim.csv"
    to_csv(generate(DgpConfig(12, 10, 15, seed=7)), path)
    return path


def test_fit_outputs_valid_json(capsys, sim_csv):
    code, out, err = run(capsys, "fit", "--data", str(sim_csv), *FIT_ARGS)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["kind"] == "fit" and doc["n1"] == 12 and doc["n2"] == 10 and doc["p"] == 14
    assert set(doc["variance"]) == {"2way", "1way1", "1way2", "0way"}
    assert out.count("\n") == 1


def test_fit_matches_library(capsys, sim_csv):
    code, out, _ = run(capsys, "fit", "--data", str(sim_csv), *FIT_ARGS)
    doc = json.loads(out)
    ds = from_csv(sim_csv, ColumnSchema("y", "d", "cluster1", "cluster2"))
    res = fit_pds(ds)
    reps = all_reports(ds, res.alpha_tilde, res.v_hat, res.eps_hat)
    assert doc["alpha_tilde"] == res.alpha_tilde
    assert doc["variance"]["2way"]["se"] == reps[Flavor.TWO_WAY].se
    assert doc["support"]["indices"] == [int(k) for k in res.support_union]


def test_fit_single_variance_flavor(capsys, sim_csv):
    code, out, _ = run(capsys, "fit", "--data", str(sim_csv), *FIT_ARGS, "--variance", "0way")
    assert code == 0 and list(json.loads(out)["variance"]) == ["0way"]


def test_fit_explicit_covariates(capsys, sim_csv):
    code, out, _ = run(capsys, "fit", "--data", str(sim_csv), *FIT_ARGS, "--x-cols", "x1,x2,x3")
    doc = json.loads(out)
    assert code == 0 and doc["p"] == 3
    assert set(doc["support"]["names"]) <= {"x1", "x2", "x3"}


def test_missing_required_column_flag_is_usage_error(capsys, sim_csv):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--data", str(sim_csv), "--y-col", "y",
              "--cluster1-col", "cluster1", "--cluster2-col", "cluster2"])
    assert exc.value.code == 2


def test_unknown_column_is_usage_error(capsys, sim_csv):
    code, out, err = run(capsys, "fit", "--data", str(sim_csv), "--y-col", "nope",
                         "--d-col", "d", "--cluster1-col", "cluster1", "--cluster2-col", "cluster2")
    assert code == 2 and out == "" and "error" in err


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, out, err = run(capsys, "fit", "--data", str(tmp_path / "absent.csv"), *FIT_ARGS)
    assert code == 2 and out == ""


@pytest.mark.parametrize("c", ["1.0", "0.5"])
def test_penalty_constant_must_exceed_one(capsys, sim_csv, c):
    code, out, err = run(capsys, "fit", "--data", str(sim_csv), *FIT_ARGS, "--penalty-c", c)
    assert code == 2 and out == "" and "exceed 1" in err


def test_degenerate_treatment_exit_code(capsys, tmp_path):
    path = tmp_path / "deg.csv"
    rows = ["y,d,cluster1,cluster2,x1"]
    rng = np.random.default_rng(0)
    for i in range(4):
        for j in range(4):
            rows.append(f"{rng.normal()!r},0.0,{i},{j},{rng.normal()!r}")
    path.write_text("\n".join(rows) + "\n")
    code, out, err = run(capsys, "fit", "--data", str(path), *FIT_ARGS)
    assert code == 3 and out == "" and "error" in err


def test_simulate_json_and_schema(capsys):
    code, out, _ = run(capsys, "simulate", "--n1", "8", "--n2", "8", "--dim", "6",
                       "--reps", "4", "--seed", "3", "--threads", "1")
    doc = json.loads(out)
    assert code == 0
    jsonschema.validate(doc, SCHEMA)
    lib = run_mc(DgpConfig(8, 8, 6, seed=3), 4).to_dict()
    assert doc == json.loads(json.dumps(lib))


def test_simulate_table(capsys):
    code, out, _ = run(capsys, "simulate", "--n1", "8", "--n2", "8", "--dim", "6",
                       "--reps", "2", "--seed", "3", "--table", "--threads", "1")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 2
    assert lines[0].split()[:4] == ["N", "M", "Dim", "Avg"]
    assert lines[1].split()[:3] == ["8", "8", "6"]


def test_simulate_rejects_zero_reps(capsys):
    code, _, err = run(capsys, "simulate", "--n1", "8", "--n2", "8", "--dim", "6",
                       "--reps", "0", "--seed", "3")
    assert code == 2


def test_simulate_rejects_bad_omega(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--n1", "8", "--n2", "8", "--dim", "6", "--reps", "1",
              "--seed", "3", "--omega-x", "0.5"])
    assert exc.value.code == 2
    code, _, _ = run(capsys, "simulate", "--n1", "8", "--n2", "8", "--dim", "6",
                     "--reps", "1", "--seed", "3", "--omega-x", "0.8,0.8")
    assert code == 2


def test_emit_csv_reproduces_in_process_estimate(capsys, tmp_path):
    path = tmp_path / "rep0.csv"
    code, _, _ = run(capsys, "simulate", "--n1", "10", "--n2", "9", "--dim", "12",
                     "--reps", "1", "--seed", "5", "--emit-csv", str(path), "--threads", "1")
    assert code == 0
    code, out, _ = run(capsys, "fit", "--data", str(path), *FIT_ARGS)
    direct = fit_pds(generate(DgpConfig(10, 9, 12, seed=rep_seed(5, 0))))
    assert abs(json.loads(out)["alpha_tilde"] - direct.alpha_tilde) <= 1e-12


def test_replicate_smoke(capsys):
    code, out, _ = run(capsys, "replicate-table1", "--reps", "1", "--rows", "20x20x100",
                       "--threads", "1")
    doc = json.loads(out)
    assert code == 0
    jsonschema.validate(doc, SCHEMA)
    assert len(doc["rows"]) == 1 and doc["rows"][0]["published"]["sd"] == 0.076


def test_replicate_unknown_row(capsys):
    code, out, err = run(capsys, "replicate-table1", "--reps", "1", "--rows", "3x3x3")
    assert code == 2 and out == ""


def test_subprocess_streams_and_determinism(tmp_path):
    cmd = [sys.executable, "-m", "mwlasso", "simulate", "--n1", "8", "--n2", "8",
           "--dim", "5", "--reps", "3", "--seed", "11"]
    first = subprocess.run(cmd + ["--threads", "1"], capture_output=True, check=True)
    second = subprocess.run(cmd + ["--threads", "2"], capture_output=True, check=True)
    assert first.stdout == second.stdout
    assert first.stderr == b""
    json.loads(first.stdout)


def test_help_documents_exit_codes():
    out = subprocess.run([sys.executable, "-m", "mwlasso", "fit", "--help"],
                         capture_output=True, text=True, check=True).stdout
    assert "exit codes" in out and "degenerate" in out
