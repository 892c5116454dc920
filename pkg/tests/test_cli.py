import json
import subprocess
import sys

import numpy as np
import pytest

from chainqfi.cli import main
from chainqfi.config import ExperimentConfig, load_file, parse_grid, resolve
from chainqfi.errors import ConfigurationError
from chainqfi.report import read_csv

FAST = ["--restarts", "2", "--max-iterations", "30", "--slots", "6"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    config, columns, body = read_csv(path)
    return config, columns, body


def test_qfi_sweep(tmp_path, capsys):
    code, out, _ = run(capsys, "qfi-sweep", "--chain-length", 3, "--time-grid", "2,4", *FAST, "--output-dir", tmp_path)
    assert code == 0 and json.loads(out)["status"] == "ok"
    config, columns, body = rows(tmp_path / "qfi_sweep.csv")
    assert columns[:5] == ["T", "F_controlled", "F_uncontrolled", "rate_controlled", "rate_uncontrolled"]
    assert [float(r[0]) for r in body] == [2.0, 4.0]
    assert config["chain_length"] == 3 and config["slots"] == 6
    side = json.loads((tmp_path / "qfi_sweep.json").read_text())
    assert len(side["points"][0]["amplitudes"]) == 6


def test_sweep_is_byte_identical(tmp_path, capsys):
    snaps = []
    for _ in range(2):
        assert run(capsys, "qfi-sweep", "--chain-length", 2, "--time", 3, *FAST, "--output-dir", tmp_path)[0] == 0
        snaps.append([(tmp_path / n).read_bytes() for n in ("qfi_sweep.csv", "qfi_sweep.json")])
    assert snaps[0] == snaps[1]


def test_full_precision_output(tmp_path, capsys):
    run(capsys, "qfi-sweep", "--chain-length", 2, "--time", 3, *FAST, "--output-dir", tmp_path)
    _, _, body = rows(tmp_path / "qfi_sweep.csv")
    text = body[0][1]
    assert float(text) == float(format(float(text), ".17g"))
    assert len(text.replace(".", "").replace("-", "").lstrip("0").split("e")[0]) >= 15


def test_populations_optimised_then_reloaded(tmp_path, capsys):
    run(capsys, "qfi-sweep", "--chain-length", 3, "--time", 4, *FAST, "--output-dir", tmp_path / "s")
    code, _, _ = run(capsys, "populations", "--chain-length", 3, "--time", 4,
                     "--pulse-file", tmp_path / "s" / "qfi_sweep.json", "--output-dir", tmp_path / "p")
    assert code == 0
    _, columns, body = rows(tmp_path / "p" / "populations.csv")
    assert columns == ["t", "c", "p0", "p1", "p2", "p3", "norm"]
    data = np.array(body, dtype=float)
    assert len(data) == 6 * 10 + 1
    assert np.abs(data[:, -1] - 1).max() < 1e-9
    side = json.loads((tmp_path / "s" / "qfi_sweep.json").read_text())
    np.testing.assert_array_equal(np.unique(data[1:, 1]), np.unique(side["points"][0]["amplitudes"]))


def test_populations_uncontrolled_ground_state(tmp_path, capsys):
    code, _, _ = run(capsys, "populations", "--uncontrolled", "--theta", 0, "--phi", 0, "--chain-length", 4,
                     "--time", 5, "--slots", 3, "--output-dir", tmp_path)
    assert code == 0
    data = np.array(rows(tmp_path / "populations.csv")[2], dtype=float)
    assert np.abs(data[:, 2] - 1).max() < 1e-12
    assert np.all(data[:, 1] == 0)


def test_estimate(tmp_path, capsys):
    code, _, _ = run(capsys, "estimate", "--chain-length", 2, "--time", 4, "--runs", 3, "--epsilon", 0.05,
                     *FAST, "--output-dir", tmp_path)
    assert code == 0
    _, columns, body = rows(tmp_path / "estimate_runs.csv")
    assert columns[:3] == ["run", "arm", "seed"]
    assert sorted({r[1] for r in body}) == ["control", "free"] and len(body) == 6
    summary = json.loads((tmp_path / "estimate_summary.json").read_text())["summary"]
    assert summary["control"]["runs"] == 3
    # paired arms share the per-run seeds
    seeds = {arm: [r[2] for r in body if r[1] == arm] for arm in ("control", "free")}
    assert seeds["control"] == seeds["free"] and len(set(seeds["free"])) == 3


def test_estimate_single_arm_byte_identical(tmp_path, capsys):
    snaps = []
    for _ in range(2):
        run(capsys, "estimate", "--arm", "free", "--chain-length", 2, "--time", 4, "--runs", 2,
            "--epsilon", 0.05, "--seed", 9, "--output-dir", tmp_path)
        snaps.append([(tmp_path / n).read_bytes() for n in ("estimate_runs.csv", "estimate_summary.json")])
    assert snaps[0] == snaps[1]


def test_oracle(tmp_path, capsys):
    code, _, _ = run(capsys, "oracle", "--time", 10, "--output-dir", tmp_path)
    assert code == 0
    _, columns, body = rows(tmp_path / "oracle.csv")
    three = [r for r in body if r[0] == "three_step_qfi"][0]
    assert float(three[columns.index("rel_error")]) < 0.02


def test_bound_check(tmp_path, capsys):
    code, _, _ = run(capsys, "bound-check", "--samples", 20, "--output-dir", tmp_path)
    assert code == 0
    assert json.loads((tmp_path / "bound_check.json").read_text())["all_ok"] is True
    assert len(rows(tmp_path / "bound_check.csv")[2]) == 20


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text("chain_length = 3\nbound_samples = 7\nseed = 4\n")
    code, _, _ = run(capsys, "bound-check", "--config", cfg_file, "--seed", 5, "--output-dir", tmp_path)
    assert code == 0
    config, _, body = rows(tmp_path / "bound_check.csv")
    assert len(body) == 7 and config["seed"] == 5 and config["chain_length"] == 3


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CHAINQFI_OUTPUT_DIR", str(tmp_path / "env"))
    assert run(capsys, "bound-check", "--samples", 2)[0] == 0
    assert (tmp_path / "env" / "bound_check.csv").exists()
    assert run(capsys, "bound-check", "--samples", 2, "--output-dir", tmp_path / "flag")[0] == 0
    assert (tmp_path / "flag" / "bound_check.csv").exists()


@pytest.mark.parametrize("argv", [
    ["bound-check", "--chain-length", "1"],
    ["estimate", "--epsilon", "-1"],
    ["qfi-sweep", "--chain-length", "12"],
    ["qfi-sweep", "--time-grid", "1:x:2"],
])
def test_configuration_errors(argv, tmp_path, capsys):
    code, out, err = run(capsys, *argv, "--output-dir", tmp_path)
    assert code == 2 and out == ""
    record = json.loads(err.strip().splitlines()[-1])
    assert record["status"] == "error" and record["kind"] == "configuration"


def test_unknown_config_key(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("chain_lenght = 3\n")
    code, _, err = run(capsys, "bound-check", "--config", bad, "--output-dir", tmp_path)
    assert code == 2 and "chain_lenght" in json.loads(err)["message"]


def test_missing_pulse_file(tmp_path, capsys):
    code, _, err = run(capsys, "populations", "--pulse-file", tmp_path / "nope.json", "--output-dir", tmp_path)
    assert code == 2 and json.loads(err)["status"] == "error"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chainqfi", "bound-check", "--samples", "2", "--output-dir",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["mode"] == "bound-check"


def test_parse_grid():
    assert parse_grid("2,4, 8") == (2.0, 4.0, 8.0)
    assert parse_grid("2:4:0.5") == (2.0, 2.5, 3.0, 3.5, 4.0)
    with pytest.raises(ConfigurationError):
        parse_grid("4:2:1")


def test_resolve_and_load(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('time-grid = [1.0, 2.0]\nmode = "estimate"\n')
    values = load_file(f)
    cfg = resolve(values, {"runs": 4})
    assert cfg.times == (1.0, 2.0) and cfg.runs == 4 and cfg.mode == "estimate"
    assert resolve({}, {}).times == (ExperimentConfig().time,)
    with pytest.raises(ConfigurationError):
        resolve({"time": -1.0})


def test_extended_gate():
    with pytest.raises(ConfigurationError):
        resolve({"chain_length": 10})
    assert resolve({"chain_length": 10, "extended": True}).chain_length == 10


def test_plots_companion(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    from chainqfi import plots

    run(capsys, "qfi-sweep", "--chain-length", 2, "--time-grid", "2,3", *FAST, "--output-dir", tmp_path)
    run(capsys, "populations", "--uncontrolled", "--chain-length", 2, "--time", 3, "--theta", 1, "--phi", 0,
        "--output-dir", tmp_path)
    run(capsys, "estimate", "--arm", "free", "--chain-length", 2, "--time", 4, "--runs", 2, "--epsilon", 0.05,
        "--output-dir", tmp_path)
    made = plots.render(tmp_path)
    assert sorted(p.name for p in made) == ["estimate.png", "populations.png", "qfi_sweep.png"]
    assert all(p.stat().st_size > 1000 for p in made)
