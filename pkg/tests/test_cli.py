import json
import subprocess
import sys

import numpy as np
import pytest

from mnldemand.cli import main
from mnldemand.csvio import load_panel, read_table, write_period_vector
from mnldemand.fixtures import fixture_files, load_fixture


def run(*args):
    return main(list(args))


def test_reproduce_table9_exit_zero(capsys):
    assert run("reproduce", "table9") == 0
    assert "table9: matches golden file" in capsys.readouterr().out


def test_reproduce_all_concurrently(tmp_path, capsys):
    assert run("reproduce", "all", "--jobs", "4", "--out-dir", str(tmp_path)) == 0
    out = capsys.readouterr().out
    for name in ("table1", "table2", "table3", "table5", "table8", "table9", "table10", "table12", "table13", "totals"):
        assert f"{name}: matches golden file" in out
        assert (tmp_path / f"{name}.csv").exists()


def test_selldown_em_exits_two(capsys):
    assert run("estimate", "--fixture", "selldown", "--solver", "em", "--market-share", "0.7", "--max-iters", "500") == 2
    assert "increasing" in capsys.readouterr().err


def test_unknown_flag_exits_one_with_usage(capsys):
    assert run("estimate", "--solver", "em", "--bogus") == 1
    assert "usage:" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    assert run("--help") == 0
    assert "split" in capsys.readouterr().out


def test_missing_file_exits_three(tmp_path):
    code = run("estimate", "--solver", "fw", "--market-share", "0.7",
               "--sales", str(tmp_path / "nope.csv"), "--availability", str(tmp_path / "nope2.csv"))
    assert code == 3


def test_validation_error_exits_one(tmp_path, capsys):
    s = tmp_path / "s.csv"
    a = tmp_path / "a.csv"
    s.write_text("product_id,period,sales\n1,1,3\n")
    a.write_text("product_id,period,open_pct\n1,1,1.4\n")
    assert run("estimate", "--solver", "em", "--market-share", "0.7", "--sales", str(s), "--availability", str(a)) == 1
    assert "open_pct" in capsys.readouterr().err
    assert run("estimate", "--solver", "em", "--fixture", "vvrr") == 1  # no market share


def test_estimate_writes_result(tmp_path, capsys):
    out = tmp_path / "t13.csv"
    code = run("estimate", "--fixture", "schedule", "--solver", "mm", "--market-share", "0.7",
               "--bound-multiplier", "2", "--bound-mode", "per-period", "--out", str(out))
    assert code == 0
    meta = json.loads((tmp_path / "t13.csv.meta.json").read_text())
    assert meta["bounds_mode"] == "sales" and meta["converged"]
    header, rows = read_table(out)
    assert header[-1] == "v" and rows[-1][0] == "lambda"
    assert float(rows[-1][7]) == pytest.approx(108.0, abs=1e-2)


def test_estimate_fw_with_bounds_file_and_config(tmp_path):
    panel = load_fixture("schedule")
    write_period_vector(tmp_path / "b.csv", "bound", panel.periods, 2 * panel.m)
    (tmp_path / "c.cfg").write_text("s = 0.7\nalpha = 0\n")
    out = tmp_path / "r.csv"
    code = run("estimate", "--fixture", "schedule", "--solver", "fw", "--config", str(tmp_path / "c.cfg"),
               "--bounds-file", str(tmp_path / "b.csv"), "--out", str(out))
    assert code == 0
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert meta["bounds_mode"] == "file"
    assert 130 <= meta["iterations"] <= 600


def test_estimate_mm_with_v0t_file(tmp_path, capsys):
    panel = load_fixture("schedule")
    write_period_vector(tmp_path / "v0.csv", "v0t", panel.periods, np.full(panel.T, 2.0))
    code = run("estimate", "--fixture", "schedule", "--solver", "mm", "--market-share", "0.7",
               "--v0t-file", str(tmp_path / "v0.csv"))
    assert code == 0
    assert capsys.readouterr().out.startswith("solver=mm")


def test_eval_models(capsys):
    base = ["eval", "--fixture", "vvrr", "--v", "1,0.8,0.4,0.2,0.05", "--v0", "1"]
    assert run(*base, "--model", "basic") == 0
    basic = float(capsys.readouterr().out)
    assert run(*base, "--model", "selldown", "--l", "0") == 0
    assert float(capsys.readouterr().out) == pytest.approx(basic, rel=1e-11)
    assert run(*base, "--model", "partial") == 0
    assert float(capsys.readouterr().out) == pytest.approx(basic, rel=1e-11)
    assert run("eval", "--fixture", "vvrr", "--model", "basic", "--v", "1,2") == 1


def test_split_and_merge_outputs(tmp_path):
    files = fixture_files("partial")
    assert run("split", "--sales", str(files.sales), "--availability", str(files.availability),
               "--out-dir", str(tmp_path / "split")) == 0
    fine = load_panel(sales=tmp_path / "split/sales.csv", availability=tmp_path / "split/availability.csv",
                      offered=tmp_path / "split/offered.csv")
    assert fine.is_binary
    assert fine.sales.sum() == pytest.approx(load_fixture("partial").sales.sum(), abs=1e-8)
    _, rows = read_table(tmp_path / "split/period_map.csv")
    assert len(rows) == fine.T
    assert run("merge", "--sales", str(tmp_path / "split/sales.csv"),
               "--availability", str(tmp_path / "split/availability.csv"),
               "--offered", str(tmp_path / "split/offered.csv"), "--out-dir", str(tmp_path / "merged")) == 0
    assert (tmp_path / "merged/period_map.csv").exists()


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--n", "3", "--periods", "6", "--v", "1,0.5,0.2", "--lam", "30",
            "--policy", "nested", "--seed", "9"]
    assert run(*args, "--out-dir", str(tmp_path / "a")) == 0
    assert run(*args, "--out-dir", str(tmp_path / "b")) == 0
    for name in ("sales.csv", "availability.csv", "offered.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mnldemand", "reproduce", "table8"], capture_output=True, text=True)
    assert proc.returncode == 0 and "table8" in proc.stdout
