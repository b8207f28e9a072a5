"""CLI verbs end to end through the in-process service."""

import json

import pytest

from nnweight.cli import main


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def read_output(path):
    text = path.read_text(encoding="utf-8")
    comments = [l for l in text.splitlines() if l.startswith("#")]
    data = [l for l in text.splitlines() if not l.startswith("#")]
    return text, comments, data


def test_table1_writes_self_describing_csv(tmp_path, capsys):
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
examples = beta
n_grid = 100
m = 5000
seeds = 2
master_seed = 12
""")
    out = tmp_path / "t.csv"
    assert main(["table1", "--config", str(cfg), "--out", str(out)]) == 0
    text, comments, data = read_output(out)
    assert text.endswith("\n") and "\r" not in text
    config_line = next(c for c in comments if c.startswith("# config:"))
    embedded = json.loads(config_line.split("# config:", 1)[1])
    assert embedded["master_seed"] == 12
    assert data[0] == "example,n,replicate,value,mu0_direct,limit"
    assert len(data) == 1 + 2 + 1  # header, two replicates, mean row
    assert "beta,100,mean," in text
    assert "mean=" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
examples = beta
n_grid = 150
m = 4000
seeds = 2
master_seed = 5
""")
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["table1", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["table1", "--config", str(cfg), "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
examples = beta
n_grid = 150
m = 4000
seeds = 2
master_seed = 5
""")
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["table1", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["table1", "--config", str(cfg), "--out", str(out_b), "--seed", "6"]) == 0
    assert out_a.read_bytes() != out_b.read_bytes()


def test_validation_errors_listed_and_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
m = oops
seeds = nope
""")
    assert main(["table1", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "oops" in err and "nope" in err


def test_wrong_verb_for_config_kind(tmp_path, capsys):
    cfg = write_config(tmp_path, "[experiment]\nkind = table1\n")
    assert main(["mar-demo", "--config", str(cfg)]) == 1
    assert "table1" in capsys.readouterr().err


def test_figure_data_writes_subinterval_file(tmp_path):
    cfg = write_config(tmp_path, """
[experiment]
kind = figure_data
example = fat_cantor
n = 200
m = 5000
master_seed = 3
""")
    out = tmp_path / "fig.csv"
    assert main(["figure-data", "--config", str(cfg), "--out", str(out)]) == 0
    _, _, data = read_output(out)
    assert data[0] == "x,weight,n_weight,density_ratio"
    assert len(data) == 201
    sub = tmp_path / "fig_subinterval.csv"
    assert sub.exists()


def test_mar_demo_csv_rows_format(tmp_path):
    data_csv = tmp_path / "rows.csv"
    data_csv.write_text("x,y\n0,10\n1,20\n0.1,\n0.2,\n0.9,\n", encoding="utf-8")
    cfg = write_config(tmp_path, f"""
[experiment]
kind = mar_demo
source = csv

[query]
transform = y

[source]
path = {data_csv}

[schema]
x = covariate
y = response
""")
    out = tmp_path / "mar.csv"
    assert main(["mar-demo", "--config", str(cfg), "--out", str(out)]) == 0
    _, _, data = read_output(out)
    assert data[0] == "method,query,value,n,N"
    nn_row = next(l for l in data if l.startswith("nn_weighted"))
    assert nn_row.split(",")[3:] == ["2", "5"]


def test_shift_demo_rows_format(tmp_path, capsys):
    cfg = write_config(tmp_path, """
[experiment]
kind = shift_demo
scenario = constant_selection
train_rows = 500
test_rows = 300
noise_sd = 0.1
seeds = 2
master_seed = 8
""")
    out = tmp_path / "shift.csv"
    assert main(["shift-demo", "--config", str(cfg), "--out", str(out)]) == 0
    _, _, data = read_output(out)
    assert data[0] == "hypothesis,risk,method"
    assert "selected hypothesis: const=1" in capsys.readouterr().out


def test_diagnostics_exit_codes(tmp_path):
    passing = write_config(tmp_path, """
[experiment]
kind = diagnostics
checks = voronoi_limit
n_grid = 100
m = 2000
seeds = 2
master_seed = 4

[pair.mu0]
kind = uniform
a = 0
b = 1

[pair.mu1]
kind = uniform
a = 0
b = 1

[tolerances]
max_deviation = 0.9
""", name="pass.ini")
    out = tmp_path / "d.csv"
    assert main(["diagnostics", "--config", str(passing), "--out", str(out)]) == 0
    _, _, data = read_output(out)
    assert data[0] == "check,params,value,threshold,pass"

    failing = write_config(tmp_path, """
[experiment]
kind = diagnostics
checks = voronoi_limit
n_grid = 100
m = 2000
seeds = 2
master_seed = 4

[pair.mu0]
kind = uniform
a = 0
b = 1

[pair.mu1]
kind = uniform
a = 0
b = 1

[tolerances]
max_deviation = 0.000001
""", name="fail.ini")
    assert main(["diagnostics", "--config", str(failing), "--out", str(out)]) == 2


def test_runtime_budget_warning(tmp_path, monkeypatch, capsys):
    import nnweight.cli as cli

    monkeypatch.setattr(cli, "_RUNTIME_WARN_SECONDS", 0.0001)
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
examples = beta
n_grid = 100
m = 2000
seeds = 1
""")
    out = tmp_path / "warn.csv"
    assert main(["table1", "--config", str(cfg), "--out", str(out)]) == 0
    assert "estimated runtime" in capsys.readouterr().err


def test_default_out_path_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path, """
[experiment]
kind = table1
examples = beta
n_grid = 100
m = 2000
seeds = 1
out = from_config.csv
""")
    assert main(["table1", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_config.csv").exists()
