"""Config validation, the run directory layout and the command-line front end."""
import hashlib
import json

import pytest
import yaml

from singmfg.cli import main
from singmfg.config import ExperimentConfig, config_from_dict, dump_config, load_config
from singmfg.errors import ConfigError
from singmfg.experiments import list_experiments, parse_params, run_experiment

EXPERIMENTS = ["chattering", "marcus-geometric", "path-independence-audit", "jumpcost-staircase",
               "theorem37-equality", "lipschitz-ladder", "mfg-toy", "mfg-crowd", "k-ladder"]


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ------------------------------------------------------------------- config

def test_catalogue():
    names = [n for n, _ in list_experiments()]
    assert names == EXPERIMENTS
    assert all(desc for _, desc in list_experiments())


def test_good_config_round_trips(tmp_path):
    data = {"schema_version": 1, "experiment": "marcus-geometric", "seed": 4, "params": {"x": 3.0}}
    cfg = load_config(_write(tmp_path, data))
    assert cfg.seed == 4 and cfg.resolved_params().x == 3.0
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg


@pytest.mark.parametrize("data", [
    {"schema_version": 1, "experiment": "chattering", "seed": 0, "colour": "red"},
    {"schema_version": 1, "experiment": "chattering", "seed": 0, "params": {"bogus": 1}},
    {"schema_version": 2, "experiment": "chattering", "seed": 0},
    {"schema_version": 1, "experiment": "chattering"},
    {"schema_version": 1, "experiment": "no-such-experiment", "seed": 0},
    {"schema_version": 1, "experiment": "mfg-crowd", "seed": 0,
     "params": {"problem": {"gamma": {"name": "no_such_gamma"}}}},
    {"schema_version": 1, "experiment": "mfg-crowd", "seed": 0,
     "params": {"lattice": {"n_t": 10, "x_min": 0, "x_max": 1, "n_x": 11, "extra": 1}}},
])
def test_bad_configs_are_rejected(tmp_path, data):
    with pytest.raises(ConfigError):
        config_from_dict(data)
    assert main(["validate-config", "--config", _write(tmp_path, data)]) == 2


def test_non_mapping_and_unreadable_configs(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_parse_params_rejects_wrong_types():
    with pytest.raises(ConfigError):
        parse_params("mfg-toy", {"M": -1})
    assert parse_params("mfg-toy", None).K == 1.0


def test_schema_fields():
    assert set(ExperimentConfig.model_fields) == {"schema_version", "experiment", "seed", "params", "output_dir"}


# ---------------------------------------------------------------------- CLI

def test_list_command(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 9 and out[-1].startswith("k-ladder")


def test_validate_command(tmp_path, capsys):
    path = _write(tmp_path, {"schema_version": 1, "experiment": "mfg-toy", "seed": 1})
    assert main(["validate-config", "--config", path]) == 0
    assert "ok: mfg-toy" in capsys.readouterr().out


def test_run_writes_run_directory(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "marcus-geometric", "--out", str(out), "--threads", "1"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["experiment"] == "marcus-geometric"
    assert "elapsed" not in json.dumps(summary)
    assert (out / "timing.json").exists()
    assert any((out / "tracks").iterdir()) and any((out / "paths").iterdir())
    assert "PASS  psi_equals_2e" in capsys.readouterr().out


def test_run_from_config_with_seed_override(tmp_path):
    path = _write(tmp_path, {"schema_version": 1, "experiment": "marcus-geometric", "seed": 1,
                             "output_dir": str(tmp_path / "from-config")})
    assert main(["run", "--config", path, "--seed-override", "7", "--threads", "1"]) == 0
    assert json.loads((tmp_path / "from-config" / "summary.json").read_text())["seed"] == 7
    assert main(["run", "chattering", "--config", path]) == 2


def test_failing_check_gives_exit_one(tmp_path, capsys):
    path = _write(tmp_path, {"schema_version": 1, "experiment": "marcus-geometric", "seed": 0,
                             "params": {"psi_tol": 1e-30}})
    assert main(["run", "--config", path, "--out", str(tmp_path / "r"), "--threads", "1"]) == 1
    assert "FAIL  psi_equals_2e" in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main(["run", "no-such-experiment"]) == 2
    assert main(["run"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_runs_are_bit_reproducible(tmp_path):
    a = run_experiment("chattering", {"ns": [10, 100]}, seed=3, out_dir=tmp_path / "a")
    b = run_experiment("chattering", {"ns": [10, 100]}, seed=3, out_dir=tmp_path / "b")
    assert a.summary() == b.summary()
    assert _digest(tmp_path / "a" / "summary.json") == _digest(tmp_path / "b" / "summary.json")
    for sub in ("tracks", "paths"):
        for f in (tmp_path / "a" / sub).iterdir():
            assert _digest(f) == _digest(tmp_path / "b" / sub / f.name)


def test_thread_count_does_not_change_results():
    a = run_experiment("path-independence-audit", {"n_samples": 4}, seed=1, threads=1)
    b = run_experiment("path-independence-audit", {"n_samples": 4}, seed=1, threads=4)
    assert a.summary() == b.summary()
