from __future__ import annotations

import subprocess
import sys

import pytest

from atisim.cli import main
from atisim.harness import ExperimentConfig, dump_config


def test_train_eval_replay_consolidate(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--preset", "dark_single", "--laps", "20", "--out", str(out)]) == 0
    assert (out / "policy.csv").exists() and (out / "table.csv").exists()
    assert main(["eval", "--laps", "3", "--sensing-mode", "L1_L2_inference", "--policy",
                 str(out / "policy.csv"), "--out", str(out / "ev")]) == 0
    assert main(["replay", str(out / "ev" / "laps.csv"), "--tau-conf", "0.9"]) == 0
    assert main(["consolidate", str(out / "table.csv"), "-o", str(tmp_path / "p.csv"), "--min-visits", "1"]) == 0
    assert (tmp_path / "p.csv").read_text().startswith("motion_bin,light_bin,d_iso,d_exp,visits,q")
    assert "replay:" in capsys.readouterr().out


def test_grid_ablate_dynamic(tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--laps", "10", "--light-levels", "10,200", "--out", str(out)]) == 0
    pol = str(out / "policy.csv")
    assert main(["grid", "--laps", "2", "--policy", pol, "--out", str(tmp_path / "g")]) == 0
    assert len((tmp_path / "g" / "grid.csv").read_text().splitlines()) == 10
    assert main(["ablate", "--laps", "4", "--out", str(tmp_path / "a")]) == 0
    assert main(["dynamic", "--preset", "alternating", "--laps", "2", "--policy", pol,
                 "--out", str(tmp_path / "d")]) == 0


def test_config_file_and_set(tmp_path):
    cfg = dump_config(ExperimentConfig(laps=2), tmp_path / "c.yaml")
    assert main(["eval", "--config", str(cfg), "--set", "thresholds.tau_conf=0.7",
                 "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("argv", [
    ["eval", "--laps", "0"],
    ["eval", "--set", "thresholds.tau_conf=7"],
    ["eval", "--set", "nonsense"],
    ["eval", "--sensing-mode", "L1_L2_inference"],
    ["dynamic"],
    ["eval", "--bogus-flag"],
])
def test_config_errors_exit_1(argv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv + ["--out", str(tmp_path)] if argv[-1] != "--bogus-flag" else argv))
    assert exc.value.code == 1


def test_data_errors_exit_2(tmp_path):
    assert main(["replay", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("lap\n1\n")
    assert main(["replay", str(bad)]) == 2
    assert main(["eval", "--sensing-mode", "L1_L2_inference", "--policy", str(bad), "--out", str(tmp_path)]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "atisim.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "consolidate" in r.stdout
