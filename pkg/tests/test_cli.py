import json

import pytest

from pcmdl.cli import main

FAST = {"pc": {"sweeps": 3}, "bp": {"steps": 6}, "rate_trials": 1, "rate_sweeps": 10,
        "perturbation_trials": 20, "test_size": 20, "softplus_pc": {"sweeps": 3}}


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(FAST))
    return p


@pytest.mark.parametrize("cmd", ["compare", "perturb", "rates", "bounds", "gen-config"])
def test_subcommands_deterministic(tmp_path, cfg_file, cmd, capsys):
    for d in ("a", "b"):
        assert main([cmd, "--config", str(cfg_file), "--trials", "2", "--seed", "7", "--out-dir", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_compare_json_format(tmp_path, cfg_file):
    assert main(["compare", "--config", str(cfg_file), "--trials", "1", "--format", "json", "--out-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "compare_trajectories.json").read_text())
    assert {d["algo"] for d in data} == {"pc", "bp"}


def test_regress_scalar_text(capsys):
    assert main(["regress", "--scalar", "--iterations", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["t", "v", "w", "energy"]
    assert out[2].split()[:3] == ["1", "0.5", "0.25"]


def test_regress_vector_json(tmp_path, capsys):
    assert main(["regress", "--vector", "--x", "1,0", "--y", "1", "--format", "json", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "regress.json").read_text())
    assert doc["kind"] == "vector"
    assert doc["fixed_point"]["w"][0][0] == pytest.approx(1 / 3, abs=1e-15)
    assert json.loads(capsys.readouterr().out) == doc


def test_paper_defaults_config(capsys):
    assert main(["gen-config", "--paper-defaults"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["trials"] == 1000 and cfg["bp"]["steps"] == 200


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"N": 0}')
    assert main(["compare", "--config", str(bad)]) == 1
    bad.write_text("not json")
    assert main(["compare", "--config", str(bad)]) == 1
    assert main(["compare", "--config", str(tmp_path / "missing.json")]) == 3
    assert main(["regress", "--sigma2", "0"]) == 1
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["regress", "--out-dir", str(blocker / "x")]) == 3
    huge = tmp_path / "huge.json"
    huge.write_text(json.dumps({"init_std": 1e200, "trials": 1, "bp": {"steps": 3, "learning_rate": 1e6}}))
    assert main(["compare", "--config", str(huge), "--out-dir", str(tmp_path / "o")]) == 2
