import json

import pytest

from honestime.cli import run
from honestime.corpus import fixture
from honestime.scenario_io import scenario_to_dict


def run_json(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


def test_analyze_s1(capsys):
    code, rep = run_json(capsys, "analyze", "--fixture", "S1")
    assert code == 0 and rep["schema"] == 1
    assert rep["findings"]["honest"] is True
    assert rep["findings"]["condition_no_gtilde_one_above_gminus"] is False
    assert rep["findings"]["G"][1] == ["1/2", "1/2", 1, 1]
    assert all(c["paper_ref"] for c in rep["checks"])


def test_analyze_s3_witness(capsys):
    code, rep = run_json(capsys, "analyze", "--fixture", "S3")
    assert code == 0
    assert rep["findings"]["honesty"]["witness"] == {"n": 3, "atom": ["a", "b"], "outcomes": ["a", "b"], "tau": [1, 2]}


def test_decompose_s2(capsys):
    code, rep = run_json(capsys, "decompose", "--fixture", "S2", "--random-martingales", "100", "--seed", "7")
    assert code == 0 and rep["passed"]
    assert rep["findings"]["uniqueness_nullity"] == 0


def test_decompose_non_honest_fails(capsys):
    code, rep = run_json(capsys, "decompose", "--fixture", "S3")
    assert code == 1 and not rep["passed"]


def test_deflate_s2(capsys):
    code, rep = run_json(capsys, "deflate", "--fixture", "S2")
    assert code == 0
    assert rep["findings"]["candidates"][0]["verdict"] == "both"


def test_scenario_file_and_text_output(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(scenario_to_dict(fixture("S2"))))
    assert run(["analyze", "--scenario", str(path), "--format", "text"]) == 0
    assert capsys.readouterr().out.startswith("analyze S2: PASS")


def test_invalid_input_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"outcomes": [{"label": "a", "prob": 0.5}], "horizon": 1, "partitions": [], "tau": [0]}')
    assert run(["analyze", "--scenario", str(path)]) == 2
    assert "$.outcomes[0].prob" in capsys.readouterr().err
    assert run(["analyze", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert run(["analyze"]) == 2


def test_report_files(tmp_path, capsys):
    assert run(["analyze", "--fixture", "S1", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "analyze-S1.json").read_text()
    assert run(["analyze", "--fixture", "S1", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "analyze-S1.json").read_text() == first


def test_fixtures_command(tmp_path, capsys):
    assert run(["fixtures", "--out", str(tmp_path), "--count", "3", "--seed", "5"]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert {"S1.json", "S2.json", "S3.json"} <= set(files) and len(files) == 6
    for name in files:
        assert run(["analyze", "--scenario", str(tmp_path / name)]) == 0
        capsys.readouterr()


def test_mc_small(capsys):
    code, rep = run_json(capsys, "mc", "--paths", "4000", "--steps", "64", "--outer", "1000")
    assert code == 0 and rep["command"] == "mc"
    assert {c["name"] for c in rep["checks"]} >= {"t_a_W_zero_mean", "negative_control_wrong_psi_fails"}


def test_bad_seed(capsys):
    assert run(["analyze", "--fixture", "S1", "--seed", "-1"]) == 2
