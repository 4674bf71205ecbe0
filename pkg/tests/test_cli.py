import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from ttanova.cli import run

MODELS = Path(__file__).resolve().parents[1] / "models"

SMALL_HIERARCHY = {
    "subsystems": [{"name": "amp", "count": 2,
                    "model": {"dimension": 2, "model": {"expr": "1 + 0.4*x1 + 0.3*x2^2 + 0.1*x1*x2"},
                              "distributions": [{"family": "gaussian", "params": [0, 1]},
                                                {"family": "uniform", "params": [-1, 1]}]}}],
    "h": "z1 + 0.5*z1*z2", "order": 2, "low_order": 2, "d_eff": 2, "sigma": 0.0, "points": 6,
}


def files(path: Path) -> dict:
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*"))
            if p.is_file() and p.name != "run_summary.json"}


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def ishigami_out(tmp_path):
    out = tmp_path / "ish"
    code = run(["extract", "--model", str(MODELS / "ishigami.json"), "-p", "6", "--deff", "3",
                "--sigma", "0", "--out", str(out)])
    assert code == 0
    return out


def test_extract_artifacts(ishigami_out):
    for name in ("surrogate.json", "report.json", "sensitivity.csv", "run_summary.json"):
        assert (ishigami_out / name).exists()
    report = json.loads((ishigami_out / "report.json").read_text())
    assert report["samples_used"] == report["sample_count_formula"]
    assert [lv["k"] for lv in report["levels"]] == [1, 2, 3]
    rows = read_csv(ishigami_out / "sensitivity.csv")
    assert rows[0] == ["param", "main", "total"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    summary = json.loads((ishigami_out / "run_summary.json").read_text())
    assert summary["subcommand"] == "extract" and summary["wall_time_s"] > 0


def test_reruns_are_byte_identical(ishigami_out, tmp_path):
    again = tmp_path / "again"
    assert run(["extract", "--model", str(MODELS / "ishigami.json"), "-p", "6", "--deff", "3",
                "--sigma", "0", "--out", str(again)]) == 0
    assert files(ishigami_out) == files(again)


def test_basis_sensitivity_and_sample(ishigami_out, tmp_path):
    surrogate = str(ishigami_out / "surrogate.json")
    out = tmp_path / "basis"
    assert run(["basis", "--surrogate", surrogate, "-p", "3", "--m", "8", "--out", str(out)]) == 0
    basis = json.loads((out / "basis.json").read_text())
    assert len(basis["kappa"]) == 4 and basis["scale"] > 0
    rows = read_csv(out / "quadrature.csv")
    assert len(rows) == 5
    assert abs(sum(float(r[1]) for r in rows[1:]) - 1) < 1e-12
    out = tmp_path / "sens"
    assert run(["sensitivity", "--surrogate", surrogate, "--out", str(out)]) == 0
    assert read_csv(out / "sensitivity.csv") == read_csv(ishigami_out / "sensitivity.csv")
    out = tmp_path / "sample"
    assert run(["sample", "--surrogate", surrogate, "--n", "2000", "--bins", "10", "--raw",
                "--out", str(out)]) == 0
    assert len(read_csv(out / "density.csv")) == 11
    assert len(read_csv(out / "samples.csv")) == 2001


def test_compose(tmp_path):
    spec = tmp_path / "h.json"
    spec.write_text(json.dumps(SMALL_HIERARCHY))
    out = tmp_path / "out"
    assert run(["compose", "--hierarchy", str(spec), "--n", "1000", "--out", str(out)]) == 0
    moments = json.loads((out / "moments.json").read_text())
    assert moments["alg1_runs"] == 1 and moments["alg2_runs"] == 1
    assert moments["testing_samples"] == 6
    assert (out / "groups" / "amp_basis.json").exists()
    assert (out / "high_level.json").exists() and (out / "density.csv").exists()
    # a surrogate from a hierarchy runs over custom families and cannot be sampled alone
    assert run(["sample", "--surrogate", str(out / "high_level.json"), "--out", str(out)]) == 1


def test_usage_errors(tmp_path, capsys):
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["extract"]) == 1
    assert run(["extract", "--model", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["extract", "--model", str(bad), "--out", str(tmp_path)]) == 1
    assert run(["extract", "--model", str(MODELS / "ishigami.json"), "--deff", "0",
                "--out", str(tmp_path)]) == 1
    spec = tmp_path / "h.json"
    spec.write_text(json.dumps(dict(SMALL_HIERARCHY, h="z1 +")))
    assert run(["compose", "--hierarchy", str(spec), "--out", str(tmp_path)]) == 1
    assert "ExprSyntaxError" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    code = run(["extract", "--model", str(MODELS / "constant.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "DegenerateOutput" in capsys.readouterr().err


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ttanova.cli", "sensitivity"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 1
    assert "--surrogate" in proc.stderr
