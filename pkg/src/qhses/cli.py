"""Command-line entry point: ``qhses {train,run,compare,convergence,bench}``.

Every subcommand accepts ``--config FILE`` (a JSON object keyed by flag names
with dashes or underscores). Explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .benchmarks import BASE_KINDS, ProblemError, problem_from_key
from .controller import PolicyMismatchError, QhsesConfig
from .experiments import (
    BENCH_SWITCHES,
    DESK_SUITE,
    DESK_TRAIN,
    compare_algorithms,
    default_workers,
    file_stem,
    load_config,
    merge_settings,
    read_results,
    run_bench,
    run_campaign,
    write_results,
    write_stats,
)
from .hses import ConfigError, HsesConfig
from .stats import A_BETTER, B_BETTER, rank_sum_test, summarize
from .training import (
    PolicyFileError,
    TrainingConfig,
    load_policy,
    read_convergence_csv,
    save_bank,
    save_policy,
    train_policy,
    write_convergence_csv,
)

HSES_DEFAULTS = {"max_nfe": None, "population": 200, "reserve": 0.1, "detect_threshold": 1e-6}

TRAIN_DEFAULTS = {
    "functions": DESK_TRAIN,
    "dimension": 10,
    "replications": 11,
    "max_epochs": 100_000,
    "alpha": 1e-4,
    "gamma": 1.0,
    "seed_base": 1000,
    "policy": "policy.json",
    "literal_reward": False,
    "average": "log",
    "save_banks": False,
    **HSES_DEFAULTS,
}

RUN_DEFAULTS = {
    "algorithm": None,
    "functions": DESK_SUITE,
    "dimension": 10,
    "runs": 20,
    "seed_base": 0,
    "switch": 100,
    "policy": None,
    "out": None,
    "no_traces": False,
    **HSES_DEFAULTS,
}

BENCH_DEFAULTS = {
    "functions": DESK_SUITE,
    "dimension": 10,
    "runs": 20,
    "seed_base": 0,
    "switches": list(BENCH_SWITCHES),
    "policy": None,
    "out": None,
    **HSES_DEFAULTS,
}

BENCH_HEADER = ("function_id", "algorithm", "best", "worst", "median", "mean", "std", "runs", "qhses_verdict")
VERDICT_FROM_A = {A_BETTER: "better", B_BETTER: "worse"}


class CliError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    return [int(s) for s in _csv_list(text)]


def resolve_functions(names, dimension: int) -> list[str]:
    """Problem keys pass through; bare base kinds become ``kind:dimension:1``."""
    if isinstance(names, str):
        names = _csv_list(names)
    keys = []
    for name in names:
        if ":" in name:
            keys.append(name)
        elif name in BASE_KINDS:
            keys.append(f"{name}:{dimension}:1")
        else:
            raise CliError(f"unknown function {name!r}")
        problem_from_key(keys[-1])  # validate early
    if not keys:
        raise CliError("no functions given")
    return keys


def _settings(args, defaults: dict) -> dict:
    config = load_config(args.config) if args.config else {}
    return merge_settings(defaults, config, vars(args))


def _hses_config(s: dict, switch: int = 100) -> HsesConfig:
    return HsesConfig(switch_iteration=int(switch), max_nfe=s["max_nfe"], population_size=int(s["population"]),
                      detect_threshold=float(s["detect_threshold"]), final_phase_reserve=float(s["reserve"]))


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def cmd_train(args) -> int:
    s = _settings(args, TRAIN_DEFAULTS)
    functions = resolve_functions(s["functions"], int(s["dimension"]))
    cfg = TrainingConfig(gamma=float(s["gamma"]), alpha=float(s["alpha"]), max_epochs=int(s["max_epochs"]),
                         replications=int(s["replications"]), functions=functions, dimension=int(s["dimension"]),
                         seed_base=int(s["seed_base"]), literal_reward=bool(s["literal_reward"]),
                         average=s["average"])
    result = train_policy(cfg, _hses_config(s), workers=_workers(args))
    policy_path = Path(s["policy"])
    policy_path.parent.mkdir(parents=True, exist_ok=True)
    save_policy(result.policy, policy_path)
    conv = policy_path.parent / "convergence"
    conv.mkdir(exist_ok=True)
    for key in functions:
        write_convergence_csv(result.rates[key], conv / f"{file_stem(key)}.csv")
    if s["save_banks"]:
        banks = policy_path.parent / "banks"
        banks.mkdir(exist_ok=True)
        for key in functions:
            save_bank(result.banks[key], banks / f"{file_stem(key)}.json")
    prefs = result.policy.preferences
    print(f"wrote {policy_path} ({int(np.sum(prefs == 1))} switch, {int(np.sum(prefs == 0))} stay, "
          f"{int(np.sum(prefs < 0))} tie states) and {len(functions)} convergence series in {conv}")
    return 0


def cmd_run(args) -> int:
    s = _settings(args, RUN_DEFAULTS)
    algorithm = s["algorithm"]
    if algorithm not in ("hses", "qhses"):
        raise CliError("algorithm must be 'hses' or 'qhses'")
    if not s["out"]:
        raise CliError("--out is required")
    functions = resolve_functions(s["functions"], int(s["dimension"]))
    hcfg = _hses_config(s, s["switch"])
    if algorithm == "hses":
        config = hcfg
    else:
        if not s["policy"]:
            raise CliError("qhses needs --policy")
        config = QhsesConfig(policy=load_policy(s["policy"]), max_nfe=hcfg.max_nfe,
                             population_size=hcfg.population_size, detect_threshold=hcfg.detect_threshold,
                             final_phase_reserve=hcfg.final_phase_reserve)
    traces = run_campaign(algorithm, functions, int(s["runs"]), int(s["seed_base"]), config, _workers(args))
    rows = write_results(s["out"], traces, algorithm, with_traces=not s["no_traces"])
    for row in rows:
        print(f"{row.function_id}: best {row.best:.6e} median {row.median:.6e} mean {row.mean:.6e} "
              f"worst {row.worst:.6e} std {row.std:.6e} ({row.runs} runs)")
    return 0


def cmd_compare(args) -> int:
    report = compare_algorithms(read_results(args.a), read_results(args.b), args.significance)
    name_a, name_b = args.names
    table = report.format_table(name_a, name_b)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "comparison.csv")
        (out / "comparison.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_convergence(args) -> int:
    root = Path(args.train_dir)
    conv = root / "convergence" if (root / "convergence").is_dir() else root
    files = sorted(conv.glob("*.csv"))
    if not files:
        raise CliError(f"no convergence CSVs under {root}")
    header = ("series", "epochs", "max_first_100", "final", "final_over_max")
    rows = []
    for f in files:
        rates = read_convergence_csv(f)
        if rates.size == 0:
            raise CliError(f"{f}: empty series")
        peak = float(rates[:100].max())
        final = float(rates[-1])
        rows.append((f.stem, rates.size, peak, final, final / peak if peak > 0 else 0.0))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), repr(r[4])])
    return 0


def cmd_bench(args) -> int:
    s = _settings(args, BENCH_DEFAULTS)
    if not s["out"]:
        raise CliError("--out is required")
    functions = resolve_functions(s["functions"], int(s["dimension"]))
    switches = s["switches"]
    if isinstance(switches, str):
        switches = _int_list(switches)
    hcfg = _hses_config(s)
    runs, seed_base, workers = int(s["runs"]), int(s["seed_base"]), _workers(args)
    fixed = run_bench(functions, runs, seed_base, hcfg, switches, workers)

    q_errors = {}
    if s["policy"]:
        qcfg = QhsesConfig(policy=load_policy(s["policy"]), max_nfe=hcfg.max_nfe,
                           population_size=hcfg.population_size, detect_threshold=hcfg.detect_threshold,
                           final_phase_reserve=hcfg.final_phase_reserve)
        q_traces = run_campaign("qhses", functions, runs, seed_base, qcfg, workers)
        for t in q_traces:
            q_errors.setdefault(t.problem_id, []).append(t.final_error)

    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for key in functions:
            if q_errors:
                row = summarize(q_errors[key], key)
                w.writerow([key, "qhses"] + [repr(v) for v in row.as_list()[1:6]] + [row.runs, ""])
            for sw in sorted(fixed):
                errs = [t.final_error for t in fixed[sw] if t.problem_id == key]
                row = summarize(errs, key)
                verdict = ""
                if q_errors:
                    verdict = VERDICT_FROM_A.get(rank_sum_test(q_errors[key], errs), "≈")
                w.writerow([key, f"hses@{sw}"] + [repr(v) for v in row.as_list()[1:6]] + [row.runs, verdict])
    for sw in sorted(fixed):
        rows = [summarize([t.final_error for t in fixed[sw] if t.problem_id == k], k) for k in functions]
        write_stats(out / f"stats_hses{sw}.csv", rows)
    print(f"wrote {out / 'bench.csv'} ({len(functions)} functions, switches {sorted(fixed)}, {runs} runs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhses", description="HSES and Q-HSES experiments.")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel worker processes (default: $QHSES_WORKERS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    def hses_flags(p):
        p.add_argument("--config", help="JSON file with default values for any flag")
        p.add_argument("--max-nfe", type=int, default=None, help="evaluation budget (default 10000*dimension)")
        p.add_argument("--population", type=int, default=None, help="population size N (default 200)")
        p.add_argument("--reserve", type=float, default=None, help="budget fraction kept for the final phase")
        p.add_argument("--detect-threshold", type=float, default=None)
        p.add_argument("--functions", type=_csv_list, default=None,
                       help="comma-separated problem keys kind:dim:seed or base kinds")
        p.add_argument("--dimension", type=int, default=None)
        p.add_argument("--seed-base", type=int, default=None)

    p = sub.add_parser("train", help="build trajectory banks, train and write a policy")
    hses_flags(p)
    p.add_argument("--replications", "-R", type=int, default=None, help="runs averaged per switch point")
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--policy", default=None, help="output policy JSON path")
    p.add_argument("--literal-reward", action="store_true", default=None, help="reward +log f instead of -log f")
    p.add_argument("--average", choices=("log", "linear"), default=None)
    p.add_argument("--save-banks", action="store_true", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="seeded runs of hses or qhses")
    hses_flags(p)
    p.add_argument("algorithm", nargs="?", default=None, choices=("hses", "qhses"))
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--switch", type=int, default=None, help="switch iteration for hses (default 100)")
    p.add_argument("--policy", default=None, help="policy JSON for qhses")
    p.add_argument("--out", default=None, help="results directory")
    p.add_argument("--no-traces", action="store_true", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="rank-sum comparison of two result directories")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--names", nargs=2, default=("A", "B"))
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--out", default=None, help="directory for comparison.csv and comparison.txt")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("convergence", help="summarise change-rate series of a training run")
    p.add_argument("train_dir")
    p.add_argument("--out", default=None, help="write the summary CSV here as well")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("bench", help="fixed switch iterations against an optional policy")
    hses_flags(p)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--switches", type=_int_list, default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, ProblemError, PolicyFileError, PolicyMismatchError,
            ValueError, TypeError, OSError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"qhses {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
