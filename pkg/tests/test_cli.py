import json
import subprocess
import sys

import numpy as np
import pytest

from conformal_ocm.cli import main
from conformal_ocm.datasets import Dataset, DatasetError, emit, ingest, load_bundled


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def records(out):
    return [json.loads(line) for line in out.splitlines()]


# -- ingestion ---------------------------------------------------------------


def test_bundled_fixtures():
    cz = load_bundled("czuber.csv")
    assert len(cz) == 19 and cz.y[0] == 17 and cz.y[-1] == 17 and cz.grid_step == 1
    assert load_bundled("czuber20.csv").y[-1] == 16
    iris = load_bundled("iris25.csv")
    assert iris.X.shape == (25, 1) and iris.label_space == ("s", "v")
    reg = load_bundled("iris25.csv", label_column="petal")
    assert reg.label_kind == "real" and reg.grid_step == 0.1 and reg.features == ("sepal",)


@pytest.mark.parametrize(
    "text, match",
    [
        ("", "empty file"),
        ("a,b\n", "no rows"),
        ("a,b\n1,2\n3\n", "row 3 has 1 fields"),
        ("a,b\n1,2\n3,x\n", "row 3, column 2 .*mixed label kinds"),
        ("a,b\n1,x\nq,y\n", r"row 3, column 1 \(a\): not a number"),
        ("a,a\n1,2\n", "duplicate"),
    ],
)
def test_ingest_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DatasetError, match=match):
        ingest(p)


def test_ingest_missing_file():
    with pytest.raises(DatasetError, match="no such file"):
        ingest("nope.csv")


def test_emit_ingest_round_trip(tmp_path):
    for ds in (load_bundled("iris25.csv"), load_bundled("iris25.csv", label_column="petal"), load_bundled("czuber.csv")):
        back = ingest(emit(ds, tmp_path / "copy.csv"))
        assert back == ds
    rng = np.random.default_rng(0)
    ds = Dataset(("u", "v"), "lab", rng.normal(size=(7, 2)), rng.normal(size=7), "real", 0.01)
    assert ingest(emit(ds, tmp_path / "r.csv")) == ds


# -- subcommands -------------------------------------------------------------


def test_fisher_command(capsys):
    code, out, _ = run(capsys, "fisher", "--data", "czuber.csv", "--epsilon", "0.05", "--grid", "1", "--format", "json-lines")
    assert code == 0
    region = [r for r in records(out) if r["record"] == "region"][0]
    assert region["lattice"] == "10..23"
    lo, hi = region["intervals"][0]
    assert (lo, hi) == pytest.approx((9.40, 23.65), abs=0.01)


def test_predict_old_command(capsys):
    code, out, _ = run(capsys, "predict-old", "--data", "czuber.csv", "--epsilon", "0.05", "--format", "json-lines")
    assert code == 0
    region = [r for r in records(out) if r["record"] == "region"][0]
    assert region["intervals"][0] == pytest.approx([10, 214 / 9], abs=1e-9)
    assert region["lattice"] == "10..23"


def test_predict_class_command(capsys):
    code, out, _ = run(capsys, "predict-class", "--data", "iris25.csv", "--epsilon", "0.08", "--format", "json-lines")
    assert code == 0
    recs = records(out)
    assert {r["label"]: r["p"] for r in recs if r["record"] == "p-value"} == {"s": "2/25", "v": "8/25"}
    assert [r["labels"] for r in recs if r["record"] == "region"] == [["v"]]
    assert recs[0] == {"record": "run", "command": "predict-class", "data": "iris25.csv",
                       "epsilon": [0.08], "format": "json-lines"}


def test_predict_class_with_x(capsys):
    code, out, _ = run(capsys, "predict-class", "--data", "iris25.csv", "--x", "5.0", "--measure", "label-mean",
                       "--model", "within-label")
    assert code == 0 and "p-value" in out and "actual" not in out


def test_predict_reg_and_gaussian(capsys):
    code, out, _ = run(capsys, "predict-reg", "--data", "iris25.csv", "--label-column", "petal",
                       "--epsilon", "0.04", "--epsilon", "0.08", "--format", "json-lines")
    assert code == 0
    snapped = [r["snapped"] for r in records(out) if r["record"] == "region"]
    assert snapped == ["[1.0, 2.4]", "[1.0, 2.3]"]
    code, out, _ = run(capsys, "gaussian", "--data", "iris25.csv", "--label-column", "petal",
                       "--epsilon", "0.04", "--format", "json-lines")
    assert [r["snapped"] for r in records(out) if r["record"] == "region"] == ["[1.0, 2.3]"]


def test_evaluate_and_permute(capsys, tmp_path):
    curves = tmp_path / "curves.csv"
    code, out, _ = run(capsys, "evaluate", "--data", "iris25.csv", "--epsilon", "0.1", "--steps",
                       "--format", "json-lines", "--curves", str(curves))
    assert code == 0
    recs = records(out)
    steps = [r for r in recs if r["record"] == "step"]
    assert len(steps) == 25 and steps[0]["warmup"] and not steps[2]["warmup"]
    assert steps[-1]["pvalues"] == {"s": "2/25", "v": "8/25"}
    assert curves.read_text().startswith("trial,step,cumulative_errors,expected\n")
    code, out, _ = run(capsys, "permute", "--data", "iris25.csv", "--trials", "3", "--seed", "4")
    assert code == 0 and out.count("trial ") == 3
    code, out, _ = run(capsys, "evaluate", "--data", "czuber.csv", "--epsilon", "0.2")
    assert code == 0 and "fisher" in out


def test_bet_audit_command(capsys, tmp_path):
    p = tmp_path / "errors.csv"
    p.write_text("e\n" + "1\n" * 100)
    code, out, _ = run(capsys, "bet-audit", "--data", str(p), "--epsilon", "0.1", "--delta", "0.5",
                       "--format", "json-lines")
    assert code == 0
    audit = records(out)[-1]
    assert audit["final_capital"] >= 81 and audit["bound_holds"] and audit["frequency_bound_holds"]
    p.write_text("e\n0\n2\n")
    assert run(capsys, "bet-audit", "--data", str(p))[0] == 1
    p.write_text("e\n0\n1\n")
    assert run(capsys, "bet-audit", "--data", str(p), "--epsilon", "0.6")[0] == 1


def test_replicate(capsys):
    code, out, _ = run(capsys, "replicate", "iris-class", "--format", "json-lines")
    assert code == 0
    rows = {r["measure"]: r for r in records(out) if r["record"] == "classification"}
    assert rows["band"]["pvalues"] == {"s": "2/25", "v": "25/25"}
    assert (rows["label-mean"]["confidence"], rows["label-mean"]["credibility"]) == (0.96, 0.08)
    code, out, _ = run(capsys, "replicate", "iris-reg", "--format", "json-lines")
    intervals = {(r["method"], r["level"]): r["snapped"] for r in records(out) if r["record"] == "interval"}
    assert len(intervals) == 6
    assert intervals["textbook", "96%"] == "[1.0, 2.3]" and intervals["ls-conformal", "92%"] == "[1.0, 2.3]"
    code, out, _ = run(capsys, "replicate", "czuber")
    assert code == 0 and "lattice=10..23" in out
    assert run(capsys, "replicate", "iris-resample")[0] == 1


@pytest.mark.parametrize(
    "argv, message",
    [
        (["predict-class", "--data", "iris25.csv", "--measure", "bogus"], "knn-ratio"),
        (["evaluate", "--data", "iris25.csv", "--model", "bogus"], "exchangeability"),
        (["fisher", "--data", "missing.csv"], "no such file"),
        (["fisher", "--data", "czuber.csv", "--epsilon", "1.5"], "epsilon"),
        (["gaussian", "--data", "czuber.csv", "--no-intercept"], "no columns"),
        (["gaussian", "--data", "iris25.csv", "--label-column", "petal", "--x", "1,2"], "--x has 2"),
        (["predict-class"], "--data"),
    ],
)
def test_input_errors(capsys, argv, message):
    code, _, err = run(capsys, *argv)
    assert code == 1 and message in err


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "conformal_ocm", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 1


def test_byte_determinism():
    argv = [sys.executable, "-m", "conformal_ocm", "permute", "--data", "iris25.csv", "--trials", "2",
            "--seed", "7", "--format", "json-lines"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and a
