"""Campaign running, result files and algorithm comparison.

Result directories produced by :func:`write_results` hold

``results.csv``  one row per run: function_id, seed, algorithm, switch_iteration,
                 total_nfe, best_value, final_error
``stats.csv``    one row per function: function_id, best, worst, median, mean, std, runs
``traces/``      the per-run trace CSVs

Floats are written with ``repr`` so files are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmarks import problem_from_key
from .controller import QhsesConfig, run_qhses
from .hses import HsesConfig, RunTrace, run_hses, sweep_switch_points
from .stats import A_BETTER, B_BETTER, NO_DIFFERENCE, StatsRow, rank_sum_test, summarize

WORKERS_ENV = "QHSES_WORKERS"

# Desk-scale 10D suite. Training uses half of it; the other half is unseen.
DESK_SUITE = [
    "elliptic:10:1",
    "bent_cigar:10:1",
    "rosenbrock:10:2",
    "rastrigin:10:1",
    "ackley:10:1",
    "griewank:10:1",
    "schwefel:10:1",
    "hybrid:10:1",
]
DESK_TRAIN = ["elliptic:10:1", "rastrigin:10:1", "schwefel:10:1", "hybrid:10:1"]
CONVERGENCE_TRAIN = DESK_TRAIN + ["rosenbrock:10:2", "griewank:10:1"]

BENCH_SWITCHES = (30, 50, 100, 120, 160, 200)

# replications per dimension used for full-size campaigns
FULL_SCALE_RUNS = {10: 200, 30: 100, 50: 51, 100: 51}

RESULT_HEADER = ("function_id", "seed", "algorithm", "switch_iteration", "total_nfe", "best_value", "final_error")
STATS_HEADER = ("function_id", "best", "worst", "median", "mean", "std", "runs")
COMPARISON_HEADER = ("function_id", "verdict", "median_a", "median_b", "mean_value_a", "mean_value_b",
                     "mean_error_a", "mean_error_b")

VERDICT_LABEL = {A_BETTER: "better", NO_DIFFERENCE: "≈", B_BETTER: "worse"}


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1")
    return n


def file_stem(function_id: str) -> str:
    return function_id.replace(":", "_").replace("/", "_")


@dataclass(frozen=True)
class RunResult:
    function_id: str
    seed: int
    algorithm: str
    switch_iteration: int
    total_nfe: int
    best_value: float
    final_error: float

    @classmethod
    def from_trace(cls, trace: RunTrace, algorithm: str) -> "RunResult":
        return cls(trace.problem_id, trace.seed, algorithm, trace.switch_iteration, trace.total_nfe,
                   float(trace.best_value), float(trace.final_error))


def _run_job(job):
    algorithm, key, seed, config = job
    problem = problem_from_key(key)
    if algorithm == "hses":
        trace = run_hses(problem, config, seed)
    elif algorithm == "qhses":
        trace = run_qhses(problem, config, seed)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return trace


def _pool_map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_campaign(algorithm: str, function_ids, runs: int, seed_base: int, config,
                 workers: int | None = None) -> list[RunTrace]:
    """``runs`` seeded runs per function. Order of the output never depends on ``workers``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if algorithm == "hses" and not isinstance(config, HsesConfig):
        raise TypeError("hses campaigns need an HsesConfig")
    if algorithm == "qhses" and not isinstance(config, QhsesConfig):
        raise TypeError("qhses campaigns need a QhsesConfig")
    workers = default_workers() if workers is None else workers
    jobs = [(algorithm, key, seed_base + r, config) for key in function_ids for r in range(runs)]
    return _pool_map(_run_job, jobs, workers)


def _bench_job(job):
    key, seed, config, switches = job
    return sweep_switch_points(problem_from_key(key), config, seed, switches)


def run_bench(function_ids, runs: int, seed_base: int, config: HsesConfig, switches=BENCH_SWITCHES,
              workers: int | None = None) -> dict[int, list[RunTrace]]:
    """Fixed-switch HSES at every iteration in ``switches``; one shared phase-1 run per seed."""
    workers = default_workers() if workers is None else workers
    jobs = [(key, seed_base + r, config, tuple(switches)) for key in function_ids for r in range(runs)]
    swept = _pool_map(_bench_job, jobs, workers)
    return {s: [d[s] for d in swept] for s in sorted(set(switches))}


def group_errors(results) -> dict[str, list[RunResult]]:
    out: dict[str, list[RunResult]] = {}
    for r in results:
        out.setdefault(r.function_id, []).append(r)
    return out


def write_results(out_dir, traces: list[RunTrace], algorithm: str, with_traces: bool = True) -> list[StatsRow]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = [RunResult.from_trace(t, algorithm) for t in traces]
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in results:
            w.writerow([r.function_id, r.seed, r.algorithm, r.switch_iteration, r.total_nfe,
                        repr(r.best_value), repr(r.final_error)])
    rows = [summarize([r.final_error for r in rs], fid) for fid, rs in group_errors(results).items()]
    write_stats(out / "stats.csv", rows)
    if with_traces:
        (out / "traces").mkdir(exist_ok=True)
        for t in traces:
            t.to_csv(out / "traces" / f"{file_stem(t.problem_id)}_seed{t.seed}.csv")
    return rows


def write_stats(path, rows: list[StatsRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for row in rows:
            w.writerow([row.function_id] + [repr(v) for v in row.as_list()[1:6]] + [row.runs])


def read_results(path) -> list[RunResult]:
    """``path`` is a results directory or a results CSV."""
    path = Path(path)
    if path.is_dir():
        path = path / "results.csv"
    if not path.exists():
        raise FileNotFoundError(f"no results file at {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [RunResult(r["function_id"], int(r["seed"]), r["algorithm"], int(r["switch_iteration"]),
                          int(r["total_nfe"]), float(r["best_value"]), float(r["final_error"])) for r in reader]


@dataclass
class ComparisonReport:
    """Per-function verdicts of A against B; ``counts`` is (better, ≈, worse) for A."""

    function_ids: list
    verdicts: dict
    medians: dict
    mean_values: dict  # function_id -> (mean raw value of A, of B)
    mean_errors: dict  # function_id -> (mean error of A, of B)

    @property
    def counts(self) -> tuple[int, int, int]:
        v = list(self.verdicts.values())
        return v.count(A_BETTER), v.count(NO_DIFFERENCE), v.count(B_BETTER)

    @property
    def value_sums(self) -> tuple[float, float]:
        """Sums over functions of the mean raw objective value (dominated by large-valued functions)."""
        return (float(sum(a for a, _ in self.mean_values.values())),
                float(sum(b for _, b in self.mean_values.values())))

    @property
    def error_sums(self) -> tuple[float, float]:
        return (float(sum(a for a, _ in self.mean_errors.values())),
                float(sum(b for _, b in self.mean_errors.values())))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARISON_HEADER)
            for fid in self.function_ids:
                w.writerow([fid, VERDICT_LABEL[self.verdicts[fid]], repr(self.medians[fid][0]),
                            repr(self.medians[fid][1]), repr(self.mean_values[fid][0]),
                            repr(self.mean_values[fid][1]), repr(self.mean_errors[fid][0]),
                            repr(self.mean_errors[fid][1])])
            better, same, worse = self.counts
            w.writerow(["#counts", f"{better}/{same}/{worse}", "", "", "", "", "", ""])
            va, vb = self.value_sums
            ea, eb = self.error_sums
            w.writerow(["#sum_of_means", "", "", "", repr(va), repr(vb), repr(ea), repr(eb)])

    def format_table(self, name_a: str = "A", name_b: str = "B") -> str:
        width = max([len(f) for f in self.function_ids] + [len("function")])
        lines = [f"{'function':<{width}}  {'verdict':<7}  {'median ' + name_a:>14}  {'median ' + name_b:>14}"]
        for fid in self.function_ids:
            ma, mb = self.medians[fid]
            lines.append(f"{fid:<{width}}  {VERDICT_LABEL[self.verdicts[fid]]:<7}  {ma:>14.6e}  {mb:>14.6e}")
        better, same, worse = self.counts
        va, vb = self.value_sums
        ea, eb = self.error_sums
        lines.append(f"{name_a} vs {name_b}: better {better}, ≈ {same}, worse {worse}")
        lines.append(f"sum of mean function values: {name_a} {va:.6e}, {name_b} {vb:.6e}")
        lines.append(f"sum of mean errors:          {name_a} {ea:.6e}, {name_b} {eb:.6e}")
        return "\n".join(lines) + "\n"


def compare_algorithms(results_a, results_b, significance: float = 0.05) -> ComparisonReport:
    """Rank-sum verdict per function on the error samples of two campaigns."""
    ga, gb = group_errors(results_a), group_errors(results_b)
    if set(ga) != set(gb):
        missing = sorted(set(ga) ^ set(gb))
        raise ValueError(f"result sets cover different functions: {missing}")
    verdicts, medians, values, errors = {}, {}, {}, {}
    fids = sorted(ga)
    for fid in fids:
        ra, rb = ga[fid], gb[fid]
        if len(ra) != len(rb):
            raise ValueError(f"{fid}: {len(ra)} runs against {len(rb)}")
        ea = np.array([r.final_error for r in ra])
        eb = np.array([r.final_error for r in rb])
        verdicts[fid] = rank_sum_test(ea, eb, significance)
        medians[fid] = (float(np.median(ea)), float(np.median(eb)))
        values[fid] = (float(np.mean([r.best_value for r in ra])), float(np.mean([r.best_value for r in rb])))
        errors[fid] = (float(ea.mean()), float(eb.mean()))
    return ComparisonReport(fids, verdicts, medians, values, errors)


def load_config(path) -> dict:
    """A JSON object whose keys mirror the command-line flag names."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def merge_settings(defaults: dict, config: dict, flags: dict) -> dict:
    """Flags override the config file, which overrides defaults; ``None`` flags are unset."""
    unknown = set(config) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(config)
    out.update({k: v for k, v in flags.items() if v is not None and k in defaults})
    return out
