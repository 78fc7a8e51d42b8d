import csv
import json

import pytest

from qhses.cli import main

SMALL = ["--max-nfe", "20000", "--population", "20"]


def train(tmp_path, name="a"):
    path = tmp_path / name / "policy.json"
    rc = main(["train", "--functions", "rastrigin:5:0,sphere:5:0", "--dimension", "5", "-R", "2",
               "--max-epochs", "300", "--alpha", "0.01", "--policy", str(path)] + SMALL)
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    return train(tmp_path_factory.mktemp("train"))


def test_train_outputs(trained):
    doc = json.loads(trained.read_text())
    assert doc["function_ids"] == ["rastrigin:5:0", "sphere:5:0"]
    conv = sorted(p.name for p in (trained.parent / "convergence").iterdir())
    assert conv == ["rastrigin_5_0.csv", "sphere_5_0.csv"]


def test_train_twice_identical(trained, tmp_path):
    assert train(tmp_path, "b").read_bytes() == trained.read_bytes()


def test_run_hses_sphere(tmp_path):
    assert main(["run", "hses", "--functions", "sphere:5:0", "--runs", "4", "--switch", "100",
                 "--out", str(tmp_path)] + SMALL) == 0
    with open(tmp_path / "stats.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["best"]) == 0.0 and row["runs"] == "4"


def test_run_qhses_deterministic(trained, tmp_path):
    for d in ("x", "y"):
        assert main(["run", "qhses", "--functions", "rastrigin:5:0", "--runs", "2", "--policy", str(trained),
                     "--out", str(tmp_path / d)] + SMALL) == 0
    for name in ("results.csv", "stats.csv", "traces/rastrigin_5_0_seed1.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_compare_with_itself(tmp_path, capsys):
    main(["run", "hses", "--functions", "rastrigin:5:0,sphere:5:0", "--runs", "3", "--out", str(tmp_path / "r"),
          "--no-traces"] + SMALL)
    assert main(["compare", str(tmp_path / "r"), str(tmp_path / "r"), "--out", str(tmp_path / "c")]) == 0
    assert "better 0, ≈ 2, worse 0" in capsys.readouterr().out
    assert (tmp_path / "c" / "comparison.csv").exists()


def test_convergence(trained, capsys):
    assert main(["convergence", str(trained.parent)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "series,epochs,max_first_100,final,final_over_max"
    assert lines[1].startswith("rastrigin_5_0,300,")


def test_bench(trained, tmp_path):
    assert main(["bench", "--functions", "sphere:5:0", "--runs", "3", "--switches", "30,200",
                 "--policy", str(trained), "--out", str(tmp_path)] + SMALL) == 0
    with open(tmp_path / "bench.csv") as fh:
        algs = [r["algorithm"] for r in csv.DictReader(fh)]
    assert algs == ["qhses", "hses@30", "hses@200"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"functions": ["sphere:5:0"], "runs": 5, "max-nfe": 20000, "population": 20}))
    assert main(["run", "hses", "--config", str(cfg), "--runs", "3", "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "results.csv").read_text().splitlines()) == 4


@pytest.mark.parametrize("argv", [
    ["run", "hses", "--functions", "nope", "--out", "x"],
    ["run", "qhses", "--functions", "sphere:5:0", "--out", "x"],
    ["run", "hses", "--functions", "sphere:2:0", "--out", "x", "--max-nfe", "1000"],
    ["compare", "/nonexistent/a", "/nonexistent/b"],
    ["convergence", "/nonexistent"],
])
def test_errors_exit_nonzero(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_policy_scale_mismatch(trained, tmp_path, capsys):
    rc = main(["run", "qhses", "--functions", "sphere:50:0", "--runs", "1", "--policy", str(trained),
               "--out", str(tmp_path)])
    assert rc != 0 and "scale" in capsys.readouterr().err
