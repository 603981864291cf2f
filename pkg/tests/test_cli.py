import json

import pytest

from ciprecoding import __version__
from ciprecoding.cli import CONFIG_KEYS, ConfigError, build_config, load_config, main


def _config(tmp_path, **kw):
    cfg = {"n_tx": 4, "n_users": 3, "modulation": "qpsk", "gamma_db": [0, 10], "trials": 2, "seed": 1,
           "out_dir": str(tmp_path / "out")}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _files(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def test_powermin_twice_identical(tmp_path, capsys):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code = main(["powermin", "--config", str(cfg), "--set", "trials=1", "--set", "seed=7",
                     "--set", f"out_dir={out}", "--quiet"])
        assert code == 0
    for name in ("power_sweep.csv", "power_sweep_trials.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_unsupported_modulation_exit_2(tmp_path, capsys):
    code = main(["powermin", "--config", str(_config(tmp_path, modulation="16qam"))])
    assert code == 2
    assert "16qam" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_unknown_key_named(tmp_path, capsys):
    code = main(["powermin", "--config", str(_config(tmp_path)), "--set", "gama_db=3"])
    assert code == 2
    assert "gama_db" in capsys.readouterr().err


def test_missing_keys_listed(capsys):
    code = main(["robust", "--set", "trials=2"])
    assert code == 2
    err = capsys.readouterr().err
    for key in ("n_tx", "n_users", "out_dir", "gamma_db", "delta_sq"):
        assert key in err


def test_bad_values_rejected(tmp_path):
    with pytest.raises(ConfigError, match="trials"):
        build_config("powermin", {"n_tx": 2, "n_users": 2, "trials": 0, "out_dir": "x", "gamma_db": 1}, 1)
    with pytest.raises(ConfigError, match="nope"):
        build_config("powermin", {"n_tx": 2, "n_users": 2, "trials": 1, "out_dir": "x", "gamma_db": 1,
                                  "schemes": ["nope"]}, 1)
    with pytest.raises(ConfigError, match="delta_sq"):
        build_config("robust", {"n_tx": 2, "n_users": 2, "trials": 1, "out_dir": "x", "gamma_db": 1,
                                "delta_sq": [-1]}, 1)


def test_invalid_json_and_set_syntax(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(str(bad), [])
    with pytest.raises(ConfigError, match="key=value"):
        load_config(None, ["trials"])


def test_set_value_parsing():
    raw = load_config(None, ["gamma_db=[0,5]", "n_tx=3,4", "modulation=8psk", "trials=5"])
    assert raw == {"gamma_db": [0, 5], "n_tx": [3, 4], "modulation": "8psk", "trials": 5}


def test_argparse_errors_exit_2(capsys):
    assert main(["nosuchcommand"]) == 2
    assert main(["validate", "--only", "99"]) == 2


def test_manifest_contents(tmp_path, capsys):
    assert main(["powermin", "--config", str(_config(tmp_path))]) == 0
    out = tmp_path / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "powermin" and man["version"] == __version__ and man["seed"] == 1
    assert set(man["config"]) == set(CONFIG_KEYS)
    assert man["files"]["power_sweep"] == ["power_sweep.csv", "power_sweep_trials.csv"]
    assert man["status"]["power_sweep"] == "ok"
    assert "conic" in man["tolerances"] and "dual_gp" in man["tolerances"]
    assert man["wall_time_s"] > 0
    assert "scheme,modulation" in capsys.readouterr().out


@pytest.mark.parametrize("command,extra,csv_name", [
    ("feasibility", {}, "feasibility.csv"),
    ("balance", {"power_budget_db": [0, 10]}, "balance.csv"),
    ("robust", {"delta_sq": [0, 1e-4]}, "robust.csv"),
    ("ser", {}, "ser.csv"),
    ("bench", {}, "timing.csv"),
])
def test_every_sweep_writes_only_into_out_dir(tmp_path, monkeypatch, command, extra, csv_name):
    cwd = tmp_path / "cwd"
    cwd.mkdir()
    monkeypatch.chdir(cwd)
    cfg = _config(tmp_path, **extra)
    before = _files(tmp_path)
    assert main([command, "--config", str(cfg), "--quiet"]) == 0
    new = sorted(set(_files(tmp_path)) - set(before))
    assert all(p.startswith("out/") for p in new)
    assert f"out/{csv_name}" in new and "out/manifest.json" in new


def test_failed_sweep_still_writes_manifest(tmp_path, monkeypatch):
    from ciprecoding import cli

    def boom(cfg):
        raise RuntimeError("solver crashed")

    monkeypatch.setitem(cli.SWEEPS, "powermin", ("power_sweep", boom))
    assert main(["powermin", "--config", str(_config(tmp_path)), "--quiet"]) == 1
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["status"]["power_sweep"].startswith("failed")


def test_validate_subset(tmp_path, capsys):
    out = tmp_path / "val"
    code = main(["validate", "--only", "4,6", "--scale", "0.1", "--set", f"out_dir={out}"])
    text = capsys.readouterr().out
    assert code == 0
    assert "[PASS] criterion  4" in text and "[PASS] criterion  6" in text
    assert "2/2 criteria passed" in text
    report = json.loads((out / "validation.json").read_text())
    assert [r["criterion"] for r in report] == [4, 6]
    assert _files(out) == ["manifest.json", "validation.json"]


def test_validate_reports_failure_with_exit_1(capsys):
    # criterion 1 fails at the low-target end for structural reasons, see the README
    assert main(["validate", "--only", "1", "--scale", "0.02"]) == 1
    assert "[FAIL] criterion  1" in capsys.readouterr().out


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
