import json

import numpy as np
import pytest

from qhses.experiments import (
    WORKERS_ENV,
    RunResult,
    compare_algorithms,
    default_workers,
    load_config,
    merge_settings,
    read_results,
    run_bench,
    run_campaign,
    write_results,
)
from qhses.hses import HsesConfig, run_hses_from_iteration
from qhses.benchmarks import problem_from_key

HCFG = HsesConfig(switch_iteration=50, max_nfe=20_000, population_size=20)


def fake(fid, errors, offset=100.0):
    return [RunResult(fid, i, "x", 100, 1000, offset + e, e) for i, e in enumerate(errors)]


def six_functions(dominate=()):
    rng = np.random.default_rng(11)
    a, b = [], []
    for k in range(6):
        fid = f"f{k}"
        base = rng.uniform(1, 10, 20)
        b += fake(fid, base)
        a += fake(fid, base * 1e-3 if fid in dominate else rng.permutation(base))
    return a, b


class TestCompare:
    def test_self_comparison(self):
        a, _ = six_functions()
        rep = compare_algorithms(a, a)
        assert rep.counts == (0, 6, 0)

    def test_two_dominated(self):
        a, b = six_functions(dominate=("f1", "f4"))
        rep = compare_algorithms(a, b)
        assert rep.counts == (2, 4, 0)
        assert rep.verdicts["f1"] == "a_better"

    def test_antisymmetry(self):
        a, b = six_functions(dominate=("f2",))
        ab, ba = compare_algorithms(a, b).counts, compare_algorithms(b, a).counts
        assert ab == (ba[2], ba[1], ba[0])

    def test_sums(self):
        a = fake("f", [1.0, 3.0, 5.0], offset=100) + fake("g", [0.0] * 3, offset=200)
        b = fake("f", [2.0, 2.0, 2.0], offset=100) + fake("g", [4.0] * 3, offset=200)
        rep = compare_algorithms(a, b)
        assert rep.value_sums == (303.0, 306.0)
        assert rep.error_sums == (3.0, 6.0)

    def test_mismatched_sets(self):
        with pytest.raises(ValueError):
            compare_algorithms(fake("f", [1, 2, 3]), fake("g", [1, 2, 3]))
        with pytest.raises(ValueError):
            compare_algorithms(fake("f", [1, 2, 3]), fake("f", [1, 2, 3, 4]))

    def test_report_files(self, tmp_path):
        a, b = six_functions(dominate=("f0",))
        rep = compare_algorithms(a, b)
        rep.to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0].startswith("function_id,verdict")
        assert "#counts,1/5/0" in lines[-2]
        assert "better 1, ≈ 5, worse 0" in rep.format_table()


class TestCampaign:
    def test_order_and_values(self):
        traces = run_campaign("hses", ["sphere:5:0", "rastrigin:5:0"], 2, 7, HCFG, workers=1)
        assert [(t.problem_id, t.seed) for t in traces] == [("sphere:5:0", 7), ("sphere:5:0", 8),
                                                          ("rastrigin:5:0", 7), ("rastrigin:5:0", 8)]

    def test_pool_matches_serial(self):
        keys = ["rastrigin:5:0"]
        serial = run_campaign("hses", keys, 2, 0, HCFG, workers=1)
        pooled = run_campaign("hses", keys, 2, 0, HCFG, workers=2)
        for s, p in zip(serial, pooled):
            np.testing.assert_array_equal(s.curve, p.curve)

    def test_bad_config_type(self):
        with pytest.raises(TypeError):
            run_campaign("qhses", ["sphere:5:0"], 1, 0, HCFG)

    def test_bench_equals_fixed_runs(self):
        out = run_bench(["schwefel:5:0"], 2, 3, HCFG, switches=(30, 200), workers=1)
        ref = run_hses_from_iteration(problem_from_key("schwefel:5:0"), HCFG, 4, 200)
        np.testing.assert_array_equal(out[200][1].curve, ref.curve)
        assert sorted(out) == [30, 200]

    def test_results_round_trip(self, tmp_path):
        traces = run_campaign("hses", ["sphere:5:0"], 3, 0, HCFG, workers=1)
        rows = write_results(tmp_path, traces, "hses")
        back = read_results(tmp_path)
        assert [r.final_error for r in back] == [t.final_error for t in traces]
        assert rows[0].runs == 3 and rows[0].best == 0.0
        assert len(list((tmp_path / "traces").glob("*.csv"))) == 3

    def test_missing_results(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_results(tmp_path)


class TestSettings:
    def test_precedence(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"runs": 5, "seed-base": 9}))
        merged = merge_settings({"runs": 20, "seed_base": 0, "out": None}, load_config(tmp_path / "c.json"),
                                {"runs": 3, "seed_base": None, "command": "run"})
        assert merged == {"runs": 3, "seed_base": 9, "out": None}

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            merge_settings({"runs": 1}, {"rnus": 2}, {})

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("[1, 2]")
        with pytest.raises(ValueError):
            load_config(tmp_path / "c.json")

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert default_workers() == 3
        monkeypatch.setenv(WORKERS_ENV, "zero")
        with pytest.raises(ValueError):
            default_workers()
        monkeypatch.delenv(WORKERS_ENV)
        assert default_workers() == 1
