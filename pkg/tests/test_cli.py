import csv
import json
import subprocess
import sys

import pytest

from nfrlab.cli import build_parser, main


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main(list(argv) + ["--out", str(out)])
    rep = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    table = None
    if (out / "table.csv").exists():
        with open(out / "table.csv") as fh:
            table = list(csv.DictReader(fh))
    return code, rep, table


def test_trees_example(tmp_path):
    code, rep, _ = run(tmp_path, "trees", "--p", "3", "--J", "3")
    assert code == 0 and rep["results"]["count"] == 15


def test_counting_circle(tmp_path):
    code, rep, table = run(tmp_path, "counting", "circle", "--R", "10", "--mu", "25")
    assert code == 0 and rep["results"]["count"] == 12
    assert table[0]["count"] == "12"


def test_residual_zero_state(tmp_path):
    code, rep, table = run(tmp_path, "residual", "--zero", "--N", "3", "--T", "0.01",
                           "--J", "1", "2")
    assert code == 0
    assert list(table[0]) == ["J", "t", "residual_l2s", "boundary_norm", "integral_norm",
                              "quadrature_err"]
    assert all(float(r["residual_l2s"]) == 0.0 for r in table)


def test_residual_telescoping(tmp_path):
    code, rep, table = run(tmp_path, "residual", "--N", "3", "--T", "0.01", "--variant", "B",
                           "--M", "1", "--J", "1", "2")
    assert code == 0 and float(table[1]["boundary_norm"]) > 0


def test_report_contents(tmp_path):
    code, rep, _ = run(tmp_path, "expand", "--eq", "kdv", "--J", "2", "--threads", "3")
    assert code == 0
    assert rep["environment"]["threads"] == 3 and "numpy" in rep["environment"]
    assert rep["config"]["J"] == 2 and "total_s" in rep["timings"]
    assert len(rep["results"]["terms"]) == 5


def test_echoed_config_reproduces(tmp_path):
    code, rep, table = run(tmp_path, "solve", "--eq", "cnls1d", "--N", "6", "--T", "0.01",
                           "--dt", "1e-3", "--seed", "42")
    assert code == 0
    cfg = {k: v for k, v in rep["config"].items() if k not in ("command", "config")}
    path = tmp_path / "echo.json"
    path.write_text(json.dumps(cfg))
    out2 = tmp_path / "again"
    assert main(["solve", "--config", str(path), "--out", str(out2)]) == 0
    assert (out2 / "table.csv").read_text() == (tmp_path / "out" / "table.csv").read_text()


def test_seed_changes_data(tmp_path):
    a = run(tmp_path / "a", "solve", "--N", "4", "--T", "0.01", "--seed", "1", "--s", "1")[2]
    b = run(tmp_path / "b", "solve", "--N", "4", "--T", "0.01", "--seed", "2", "--s", "1")[2]
    assert a[0]["l2s"] == b[0]["l2s"] and a[-1]["l2"] != b[-1]["l2"]


def test_config_overridden_by_flags(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"p": 3, "J": 3}))
    code, rep, _ = run(tmp_path, "trees", "--config", str(path), "--J", "2")
    assert code == 0 and rep["results"]["count"] == 3


@pytest.mark.parametrize("argv", [
    ["trees", "--p", "1"],
    ["solve", "--dt", "0.3", "--T", "1"],
    ["solve", "--eq", "fnls", "--alpha", "0.3"],
    ["limit-tail", "--M", "0.5"],
    ["weaklimit", "--eps", "2"],
])
def test_config_errors(tmp_path, argv, capsys):
    code, rep, _ = run(tmp_path, *argv)
    assert code == 2 and rep is None
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"bogus": 1}))
    assert main(["trees", "--config", str(path)]) == 2
    assert "bogus" in capsys.readouterr().err
    path.write_text("[1, 2")
    assert main(["trees", "--config", str(path)]) == 2


def test_resource_cap(tmp_path, capsys):
    code, _, _ = run(tmp_path, "trees", "--p", "2", "--J", "12", "--cap", "1000")
    assert code == 3
    assert "479001600" in capsys.readouterr().err


def test_invariant_failure_exit(tmp_path):
    code, rep, _ = run(tmp_path, "verify-estimate", "--kind", "dnls-sums", "--Ns", "8", "16")
    assert code == 1 and rep["passed"] is False


def test_every_subcommand_has_help():
    ap = build_parser()
    names = set(ap._subparsers._group_actions[0].choices)
    assert names == {"trees", "expand", "solve", "residual", "limit-tail", "verify-estimate",
                     "counting", "uniqueness", "weaklimit"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nfrlab", "counting", "circle"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout.split("\nmu,")[0])["results"]["count"] == 12
