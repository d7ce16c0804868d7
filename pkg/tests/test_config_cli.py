import io
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from netmpc import cli, presets
from netmpc.channels import BernoulliChannel
from netmpc.config import (ConfigError, ExperimentConfig, format_config, format_matrix,
                           parse_config, parse_matrix)
from netmpc.synthesis import OfflineMoments, moments_key


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture()
def small_config_file(tmp_path):
    exp = ExperimentConfig.from_sim_config(presets.base_config(4, seed=3))
    exp.T, exp.moment_samples = 12, 2000
    path = tmp_path / "small.ini"
    path.write_text(format_config(exp))
    return path


def test_matrix_text_round_trip():
    M = np.array([[1.0, -0.1], [1 / 3, 2e-17]])
    assert np.array_equal(parse_matrix(format_matrix(M)), M)
    assert parse_matrix("(0x3)").shape == (0, 3)
    with pytest.raises(ValueError):
        parse_matrix("(2x2) 1 2; 3")
    with pytest.raises(ValueError):
        parse_matrix("1 2; 3 4")


@pytest.mark.parametrize("name", cli.PRESET_NAMES)
def test_every_preset_round_trips_through_the_file_format(name):
    exp = cli._preset_config(name, 10, 1)
    back = parse_config(format_config(exp))
    assert back.model.fingerprint() == exp.model.fingerprint()
    assert moments_key(back.model, back.sensor, back.control, back.sat) == \
        moments_key(exp.model, exp.sensor, exp.control, exp.sat)
    assert format_config(back) == format_config(exp)


def test_unknown_and_missing_keys_name_the_location():
    text = format_config(ExperimentConfig.from_sim_config(presets.base_config(4)))
    with pytest.raises(ConfigError, match=r"\[horizon\] unknown key 'N_x'"):
        parse_config(text.replace("N_r = ", "N_x = "))
    with pytest.raises(ConfigError, match=r"\[bogus\] unknown section"):
        parse_config(text + "\n[bogus]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"\[cost\] missing required key 'R'"):
        parse_config("\n".join(l for l in text.splitlines() if not l.startswith("R =")))
    with pytest.raises(ConfigError, match=r"\[channels\]"):
        parse_config(text.replace("control_p = 0.8", "control_p = 1.5"))
    with pytest.raises(ConfigError, match=r"\[system\]"):
        parse_config(text.replace("B = (4x2)", "B = (4x2) ", 1).replace("C = (4x4)", "C = (3x4)", 1))


def test_help_lists_every_documented_flag():
    flags = ["--config", "--preset", "--policy", "--no-stability", "--paths", "--steps", "--seed",
             "--threads", "--out", "--emit-traces", "--generate-moments"]
    code, out, _ = run_cli("run", "--help")
    assert code == 0
    for f in flags:
        assert f in out
    code, out, _ = run_cli("sweep", "--help")
    assert "--param" in out and "--values" in out


def test_unknown_flag_is_a_usage_error():
    code, _, err = run_cli("run", "--preset", "four-state", "--frobnicate")
    assert code == cli.EXIT_USAGE and "frobnicate" in err


def test_moments_command_is_byte_identical_across_runs(small_config_file, tmp_path):
    a, b = tmp_path / "a.mom", tmp_path / "b.mom"
    assert run_cli("moments", "--config", str(small_config_file), "--out", str(a))[0] == 0
    assert run_cli("moments", "--config", str(small_config_file), "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_too_few_moment_samples_is_rejected(small_config_file, tmp_path):
    code, _, err = run_cli("moments", "--config", str(small_config_file),
                           "--out", str(tmp_path / "m"), "--samples", "10")
    assert code == cli.EXIT_USAGE and "sample count too small" in err


def test_reliable_control_channel_gives_identity_selection_mean(small_config_file, tmp_path):
    text = small_config_file.read_text().replace("control_p = 0.8", "control_p = 1.0")
    cfg = tmp_path / "pc1.ini"
    cfg.write_text(text)
    mom = tmp_path / "pc1.mom"
    assert run_cli("moments", "--config", str(cfg), "--out", str(mom))[0] == 0
    loaded = OfflineMoments.load(mom)
    np.testing.assert_array_equal(loaded.mu_G, np.eye(loaded.mu_G.shape[0]))
    code, out, _ = run_cli("inspect", str(mom))
    assert code == 0 and "mu_G" in out


def test_run_is_deterministic_and_honours_the_seed_variable(small_config_file, tmp_path, monkeypatch):
    args = ["run", "--config", str(small_config_file), "--generate-moments", "--paths", "1"]
    first = run_cli(*args, "--seed", "7")
    second = run_cli(*args, "--seed", "7")
    assert first[0] == second[0] == 0
    assert first[1] == second[1]
    header, row = first[1].strip().splitlines()
    assert header.startswith("param,value,variant,msb")
    monkeypatch.setenv("NETMPC_SEED", "7")
    assert run_cli(*args)[1] == first[1]
    monkeypatch.setenv("NETMPC_SEED", "8")
    assert run_cli(*args)[1] != first[1]


def test_run_writes_timing_next_to_the_output(small_config_file, tmp_path):
    out = tmp_path / "run.csv"
    traces = tmp_path / "traces.csv"
    code, _, _ = run_cli("run", "--config", str(small_config_file), "--generate-moments",
                         "--out", str(out), "--emit-traces", str(traces))
    assert code == 0
    assert "solver_time" not in out.read_text()
    assert (tmp_path / "run.timing.csv").exists()
    assert len(traces.read_text().strip().splitlines()) == 1 + 13


def test_moments_for_another_model_is_a_data_error(small_config_file, tmp_path):
    mom = tmp_path / "m.mom"
    assert run_cli("moments", "--config", str(small_config_file), "--out", str(mom))[0] == 0
    other = tmp_path / "other.ini"
    other.write_text(small_config_file.read_text().replace("sensor_p = 0.8", "sensor_p = 0.7"))
    code, _, err = run_cli("run", "--config", str(other), "--moments", str(mom))
    assert code == cli.EXIT_DATA and "different model" in err
    code, _, _ = run_cli("run", "--config", str(other), "--moments", str(tmp_path / "missing"))
    assert code == cli.EXIT_DATA


def test_sweep_emits_one_row_per_value_and_variant(small_config_file):
    code, out, _ = run_cli("sweep", "--config", str(small_config_file), "--generate-moments",
                           "--param", "u_max", "--values", "3,5", "--policy", "zero,fallback")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 1 + 4
    assert run_cli("sweep", "--config", str(small_config_file), "--param", "bogus",
                   "--values", "1")[0] == cli.EXIT_USAGE
    assert run_cli("sweep", "--config", str(small_config_file), "--param", "u_max",
                   "--values", "a,b")[0] == cli.EXIT_USAGE


def test_config_source_must_be_unique_and_valid(tmp_path):
    assert run_cli("run", "--generate-moments")[0] == cli.EXIT_USAGE
    assert run_cli("run", "--preset", "nope", "--generate-moments")[0] == cli.EXIT_USAGE
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nA = (1x1) 1\n")
    code, _, err = run_cli("run", "--config", str(bad), "--generate-moments")
    assert code == cli.EXIT_USAGE and "[system]" in err
    assert run_cli("reproduce", "fig99")[0] == cli.EXIT_USAGE


def test_config_command_writes_a_parseable_preset(tmp_path):
    out = tmp_path / "p.ini"
    assert run_cli("config", "--preset", "gilbert-elliott", "--out", str(out))[0] == 0
    exp = parse_config(out.read_text())
    assert not isinstance(exp.control, BernoulliChannel)
    code, text, _ = run_cli("inspect", str(out))
    assert code == 0 and "fingerprint" in text
