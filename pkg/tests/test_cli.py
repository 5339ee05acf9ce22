import subprocess
import sys

import pytest

from hqnet.cli import ConfigError, ParsedConfig, build_config, main, parse_config


def test_parse_sections_and_lists():
    p = parse_config("scenario = routing-cost\n# note\n[routing]\nalgorithms = cer, greedy\n"
                     "[sweep]\ntrials = 3  # inline\n")
    assert p.scenario == ("routing-cost", 1)
    assert p.values["algorithms"] == (("cer", "greedy"), 4)
    assert p.values["trials"] == (3, 6)


@pytest.mark.parametrize("text,line,fragment", [
    ("[sweep]\ntrials = 2\n[env]\nalgorithms = cer\n", 4, "belongs in [routing]"),
    ("[sweep]\ntrials = 2\ntrials = 3\n", 3, "duplicate key"),
    ("[sweep]\n\ntrials = many\n", 3, "bad value"),
    ("[weather]\n", 1, "unknown section"),
    ("trials = 2\n", 1, "inside a section"),
    ("[sweep]\ntrials\n", 2, "key = value"),
    ("[env]\ndephasing_std = 0.1,,0.2\n", 2, "empty list element"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "exp.cfg")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"exp.cfg:{line}:") and fragment in str(exc.value)


def test_key_not_used_by_scenario_points_at_line():
    p = parse_config("[sweep]\ntrials = 1\n[routing]\nalgorithms = cer\n")
    with pytest.raises(ConfigError) as exc:
        build_config(p, {}, "maintenance-cost", "exp.cfg")
    assert exc.value.line == 4


def test_invalid_value_points_at_line():
    p = parse_config("[sweep]\nseed = 3\ntrials = 0\n")
    with pytest.raises(ConfigError) as exc:
        build_config(p, {}, "routing-cost", "exp.cfg")
    assert exc.value.line == 3


def test_flags_override_file():
    p = parse_config("[sweep]\ntrials = 5\nseed = 1\n")
    cfg = build_config(p, {"trials": 2, "seed": None}, "routing-cost")
    assert cfg.trials == 2 and cfg.seed == 1


def test_missing_scenario():
    from hqnet.engine import ScenarioError
    with pytest.raises(ScenarioError):
        build_config(ParsedConfig(None, {}), {}, None)


def test_main_writes_csv(tmp_path, capsys):
    out = tmp_path / "cost.csv"
    assert main(["--scenario", "maintenance-cost", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("scenario,seed,param_name,param_value,fidelity_mean")
    assert len(lines) == 7


def test_main_same_seed_same_csv(capsys):
    args = ["--scenario", "routing-cost", "--trials", "1", "--sessions", "5", "--seed", "9"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_main_config_file(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("scenario = control-overhead\n[sweep]\nqps_values = 0, 1000\n")
    assert main(["--config", str(cfg)]) == 0
    assert capsys.readouterr().out.splitlines()[2].split(",")[3] == "1000"


@pytest.mark.parametrize("args", [["--scenario", "routing-cost", "--trials", "0"],
                                  ["--scenario", "nope"],
                                  ["--scenario", "maintenance-cost", "--sessions", "3"],
                                  ["--config", "/nonexistent.cfg"]])
def test_main_errors_exit_2(args, capsys):
    assert main(args) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[sweep]\ntrials = 1\ncolour = red\n")
    assert main(["--scenario", "routing-cost", "--config", str(cfg)]) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_list(capsys):
    assert main(["--list"]) == 0
    assert "env-importance" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hqnet", "--scenario", "maintenance-cost"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.count("\n") == 7
