import subprocess
import sys
from pathlib import Path

import pytest

from wegnerlab.cli import main
from wegnerlab.config import ConfigError, RunConfig, parse_int_list, parse_kernel

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_int_list_parsing():
    assert parse_int_list("1-5,10") == [1, 2, 3, 4, 5, 10]
    assert parse_int_list("3,3,1-2") == [3, 1, 2]
    assert parse_int_list("") == []


def test_kernel_sources(tmp_path):
    assert parse_kernel("iid", 2).d == 2
    assert parse_kernel("exponential:1.5,0.5", 1).rate == 0.5
    assert parse_kernel("table:0=2;1=-1;-1=-1", 1).table_dict[(1,)] == -1.0
    assert parse_kernel(f"file:{CONFIGS / 'signchange_d1.cov'}", 1).gamma0 == 2.0
    for bad in ("exponential:1", "table:0=a", "nonsense"):
        with pytest.raises(ConfigError):
            parse_kernel(bad, 1)


def test_config_round_trip_and_strictness():
    cfg = RunConfig.from_ini((CONFIGS / "iid_laplacian_d1_L10.ini").read_text())
    assert RunConfig.from_ini(cfg.to_ini()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_ini("[model]\ncolor = red\n")
    with pytest.raises(ConfigError):
        RunConfig.from_ini("[extras]\nx = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.from_ini("[model]\nL = ten\n")


def test_analyze_iid(tmp_path, capsys):
    code, out = run(tmp_path, "analyze", "--covariance", "iid", "--L", "5")
    assert code == 0
    text = (out / "analysis.txt").read_text()
    assert "I0: (0)" in text
    assert (out / "config.ini").exists()


def test_analyze_sign_changing_table_file(tmp_path, capsys):
    code, out = run(tmp_path, "analyze", "--covariance", f"file:{CONFIGS / 'signchange_d1.cov'}", "--L", "10")
    assert code == 0
    text = (out / "analysis.txt").read_text()
    assert "I0: (2)" in text and "c: -2.0" in text
    minimum = float(next(l for l in text.splitlines() if l.startswith("positivity_min:")).split()[1])
    assert minimum == pytest.approx(2.0, abs=1e-9)


def test_malformed_table_exits_one_with_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.cov"
    bad.write_text("d=1 kind=table\n0 2\n1 oops\n")
    code, _ = run(tmp_path, "analyze", "--covariance", f"file:{bad}")
    assert code == 1
    assert "line 3" in capsys.readouterr().err


def test_indefinite_covariance_exits_three(tmp_path, capsys):
    code, _ = run(tmp_path, "analyze", "--covariance", "table:0=1;1=0.8;-1=0.8", "--L", "5")
    assert code == 3


def test_leading_index_failure_exits_two(tmp_path, capsys):
    # (2 - z - 1/z)^3: every derivative below order 6 vanishes at 1
    table = "table:0=20;1=-15;-1=-15;2=6;-2=6;3=-1;-3=-1"
    code, out = run(tmp_path, "analyze", "--covariance", table, "--L", "3")
    assert code == 2
    assert "error:" in (out / "analysis.txt").read_text()


def test_wegner_shipped_config_passes_and_is_reproducible(tmp_path, capsys):
    cfg = str(CONFIGS / "iid_d1_L10.ini")
    code, a = run(tmp_path, "wegner", "--config", cfg, name="a")
    assert code == 0
    code, b = run(tmp_path, "wegner", "--config", cfg, name="b")
    assert code == 0
    code, c = run(tmp_path, "wegner", "--config", cfg, "--threads", "4", name="c")
    assert code == 0
    first = (a / "samples.csv").read_bytes()
    assert first.startswith(b"index,trace\n")
    assert first == (b / "samples.csv").read_bytes() == (c / "samples.csv").read_bytes()
    assert "abstract_verdict: pass" in (a / "summary.txt").read_text()


def test_config_echo_reproduces_the_run(tmp_path, capsys):
    code, a = run(tmp_path, "wegner", "--covariance", "exp_rate1", "--L", "4", "--samples", "40",
                  "--seed", "5", "--threads", "2", name="a")
    assert code == 0
    code, b = run(tmp_path, "wegner", "--config", str(a / "config.ini"), name="b")
    assert code == 0
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "config.ini").read_text() == (b / "config.ini").read_text()


def test_wegner_single_sample_is_a_usage_error(tmp_path, capsys):
    code, _ = run(tmp_path, "wegner", "--covariance", "iid", "--samples", "1")
    assert code == 1


def test_wegner_custom_background(tmp_path, capsys):
    matrix = tmp_path / "a.txt"
    matrix.write_text("\n".join(" ".join("1" if i == j else "0" for j in range(5)) for i in range(5)))
    code, out = run(tmp_path, "wegner", "--covariance", "iid", "--L", "2", "--samples", "20",
                    "--background-file", str(matrix))
    assert code == 0
    code, _ = run(tmp_path, "wegner", "--covariance", "iid", "--L", "3", "--samples", "20",
                  "--background-file", str(matrix), name="wrong")
    assert code == 1


def test_regularity_outputs(tmp_path, capsys):
    code, out = run(tmp_path, "regularity", "--l-list", "1-10,6000", "--epsilon", "0.1",
                    "--deltas", "1", "0.5", "--mc-l", "1", "--n-max", "100000", "--seed", "3")
    assert code == 0
    rows = [l.split(",") for l in (out / "closed_forms.csv").read_text().splitlines()[1:]]
    for row in rows[:10]:
        l = int(row[0])
        assert abs(float(row[4]) - 2 / (l + 1)) <= 1e-10
        assert float(row[5]) == 2 / (l + 1)
    last = (out / "concentration.csv").read_text().splitlines()[-1].split(",")
    assert last[0] == "6000" and float(last[2]) >= 0.99
    assert len((out / "delta_sweep.csv").read_text().splitlines()) == 3


def test_regularity_floor_exits_five(tmp_path, capsys):
    code, out = run(tmp_path, "regularity", "--l-list", "1-3", "--deltas", "0.125", "--mc-l", "6",
                    "--n-max", "200000")
    assert code == 5
    assert "larger delta" in capsys.readouterr().err
    assert (out / "delta_sweep.csv").exists()


def test_regularity_empty_list_exits_one(tmp_path, capsys):
    code, _ = run(tmp_path, "regularity", "--l-list", "")
    assert code == 1


def test_averaging_check(tmp_path, capsys):
    code, a = run(tmp_path, "averaging-check", "--trials", "50", "--seed", "11", name="a")
    assert code == 0
    code, b = run(tmp_path, "averaging-check", "--trials", "50", "--seed", "11", name="b")
    assert (a / "averaging.csv").read_bytes() == (b / "averaging.csv").read_bytes()
    code, _ = run(tmp_path, "averaging-check", "--trials", "0", name="c")
    assert code == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wegnerlab", "analyze", "--covariance", "tridiag",
                           "--L", "3", "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "I0=(0)" in proc.stdout
