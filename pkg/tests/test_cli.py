import csv
import json

import pytest

from pqss import errors
from pqss.cli import STAGES, run

from configs import EX31_128, EX32_128, H3_COUNTER, MINIMAL, config_text


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def report(out):
    return json.loads((out / "report.json").read_text())


def test_solve_example31(tmp_path):
    out = tmp_path / "out"
    assert run(["solve", "--config", write(tmp_path, EX31_128), "--out", str(out)]) == 0
    rep = report(out)
    sol = rep["stages"]["solution"]
    assert min(sol["positivity_min"]) > 0 and max(sol["residuals"]) < 1e-8
    assert (out / "status").read_text() == "OK\n"
    assert set(rep["stages"]) == set(STAGES["solve"])
    assert "timings" not in rep and json.loads((out / "timings.json").read_text())
    with open(out / "fields" / "u.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["node", "x", "value"] and len(rows) == 129


def test_check_hypotheses_h3_failure(tmp_path):
    out = tmp_path / "out"
    code = run(["check-hypotheses", "--config", write(tmp_path, H3_COUNTER), "--out", str(out)])
    assert code == 2
    rep = report(out)
    assert rep["stages"]["hypotheses"]["h3"]["passed"] is False
    assert rep["status"]["condition"] == "(H1)-(H4)"
    assert (out / "status").read_text().strip() == "hypothesis"


def test_sweep_grid_and_resume(tmp_path, monkeypatch):
    monkeypatch.setenv("PQSS_THREADS", "2")
    out = tmp_path / "out"
    cfg = write(tmp_path, MINIMAL)
    assert run(["sweep", "--config", cfg, "--out", str(out), "--grid", "8x8"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 65
    rows = list(csv.DictReader(lines))
    assert {(int(r["i"]), int(r["j"])) for r in rows} == {(i, j) for i in range(8)
                                                          for j in range(8)}
    assert {"OK", "lambda-too-small"} >= {r["status"] for r in rows}
    assert any(r["status"] == "OK" for r in rows)
    # interrupted sweep: drop the tail and resume
    (out / "sweep.csv").write_text("\n".join(lines[:20]) + "\n")
    assert run(["sweep", "--config", cfg, "--out", str(out), "--grid", "8x8"]) == 0
    resumed = (out / "sweep.csv").read_text().splitlines()
    assert sorted(resumed[1:]) == sorted(lines[1:])
    assert report(out)["stages"]["summary"]["resumed"] == 19


def test_determinism(tmp_path):
    cfg = write(tmp_path, EX31_128)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert run(["solve", "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert report(a)["config"]["seed"] == 3


@pytest.mark.parametrize("command", ["eigen", "torsion", "construct"])
def test_stage_commands(tmp_path, command):
    out = tmp_path / command
    assert run([command, "--config", write(tmp_path, MINIMAL), "--out", str(out),
                "--dump-mesh"]) == 0
    rep = report(out)
    for name in STAGES[command]:
        stage = rep["stages"][name]
        assert not (isinstance(stage, dict) and "skipped" in stage)
    assert (out / "mesh.txt").exists() and any((out / "fields").iterdir())


def test_multiplicity_command(tmp_path):
    out = tmp_path / "out"
    assert run(["multiplicity", "--config", write(tmp_path, EX32_128), "--out", str(out)]) == 0
    rep = report(out)
    assert rep["stages"]["found"] is True and len(rep["stages"]["positive"]) >= 2


def test_multiplicity_flatness_exit(tmp_path):
    out = tmp_path / "out"
    assert run(["multiplicity", "--config", write(tmp_path, MINIMAL), "--out", str(out)]) == 2
    rep = report(out)
    assert rep["status"]["kind"] == "flatness-violation"
    assert all(isinstance(v, dict) and "skipped" in v for v in rep["stages"].values())


def test_lambda_too_small_exit(tmp_path):
    text = MINIMAL.replace('mode = "auto"', 'mode = "fixed"')
    out = tmp_path / "out"
    assert run(["solve", "--config", write(tmp_path, text), "--out", str(out)]) == 3
    rep = report(out)
    assert rep["status"]["condition"] == "(2.3)" and rep["status"]["stage"] == "subsolution"
    assert "(2.3)" in rep["status"]["message"]


def test_nonconvergence_exit(tmp_path):
    text = config_text(extra="[iteration]\nmax_iter = 2\n")
    out = tmp_path / "out"
    assert run(["solve", "--config", write(tmp_path, text), "--out", str(out)]) == 4
    assert (out / "status").read_text().strip() == "nonconvergence"


@pytest.mark.parametrize("argv", [[], ["frobnicate", "--config", "x"], ["solve"],
                                  ["sweep", "--config", "x", "--grid", "8by8"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1


def test_config_error_exit(tmp_path):
    out = tmp_path / "out"
    bad = write(tmp_path, MINIMAL.replace("p = 2\n", "p = 1.0\n"))
    assert run(["solve", "--config", bad, "--out", str(out)]) == 1
    assert (out / "status").read_text().strip() == "config"


def test_exit_code_table():
    table = {errors.ConfigError: 1, errors.HypothesisError: 2,
             errors.FlatnessViolationError: 2, errors.LambdaTooSmallError: 3,
             errors.ThresholdUnreachableError: 3, errors.NonconvergenceError: 4,
             errors.MonotonicityBreakdownError: 4, errors.DomainTooLargeError: 5}
    for cls, code in table.items():
        assert cls.exit_code == code
