"""HSES: univariate sampling, then CMA-ES, then univariate sampling with the
converged coordinates pinned.

Each run draws from independent random streams per phase, spawned from the run
seed. Phase 1 therefore sees the same random numbers whatever the switch
iteration is, which makes runs at different switch iterations directly
comparable and lets :func:`sweep_switch_points` share one phase-1 run across
all switch points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import Problem
from .es_core import CMAParams, Population, cma_es, detect, uni_sampling

PHASE_INIT = "init"
PHASE_UNI = "uni1"
PHASE_CMA = "cma"
PHASE_FINAL = "uni2"

DECISION_STEP = 10  # univariate iterations per decision step (M)
HORIZON = 20  # maximum number of decision steps (T)

TRACE_HEADER = ("iteration", "nfe", "best_objective", "phase")


class ConfigError(ValueError):
    pass


@dataclass
class HsesConfig:
    switch_iteration: int = 100
    max_nfe: int | None = None  # None -> 10000 * dimension
    population_size: int = 200
    cma: CMAParams = field(default_factory=CMAParams)
    detect_threshold: float = 1e-6
    final_phase_reserve: float = 0.1

    def budget(self, dimension: int) -> int:
        return int(self.max_nfe) if self.max_nfe else 10000 * dimension

    def check(self, dimension: int, switch_iteration: int | None = None) -> None:
        switch = self.switch_iteration if switch_iteration is None else switch_iteration
        max_nfe = self.budget(dimension)
        if switch < 1:
            raise ConfigError("switch iteration must be positive")
        if self.population_size < 4:
            raise ConfigError("population size must be at least 4")
        if (switch + 1) * self.population_size >= max_nfe:
            raise ConfigError(
                f"switch iteration {switch} x population {self.population_size} "
                f"(plus the initial population) does not fit in max_nfe={max_nfe}"
            )
        if not 0.0 <= self.final_phase_reserve <= 0.5:
            raise ConfigError("final_phase_reserve must lie in [0, 0.5]")


@dataclass
class RunTrace:
    """Best-so-far objective after every iteration/generation of one run.

    ``curve[0]`` is the best of the initial population, ``curve[k]`` for
    ``1 <= k <= switch_iteration`` the best after ``k`` univariate iterations.
    """

    problem_id: str
    seed: int
    curve: np.ndarray
    nfe: np.ndarray
    phase: list
    phase_boundaries: list
    best_x: np.ndarray
    best_value: float
    final_error: float
    total_nfe: int
    switch_iteration: int
    cma_restarts: int = 0
    states: list | None = None  # flat state index per decision step (controller runs only)

    def rows(self):
        for i, (f, nfe, ph) in enumerate(zip(self.curve, self.nfe, self.phase)):
            yield i, int(nfe), float(f), ph

    def to_csv(self, path) -> None:
        header = list(TRACE_HEADER)
        extra = self.states is not None
        if extra:
            header += ["switch_iteration", "state"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, nfe, f, ph in self.rows():
                row = [i, nfe, repr(f), ph]
                if extra:
                    step, rem = divmod(i, DECISION_STEP)
                    state = ""
                    if ph == PHASE_UNI and rem == 0 and 1 <= step <= len(self.states):
                        state = self.states[step - 1]
                    row += [self.switch_iteration, state]
                writer.writerow(row)


def read_trace_csv(path) -> dict:
    """Load a trace CSV back into column arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "iteration": np.array([int(r["iteration"]) for r in rows]),
        "nfe": np.array([int(r["nfe"]) for r in rows]),
        "best_objective": np.array([float(r["best_objective"]) for r in rows]),
        "phase": [r["phase"] for r in rows],
    }


def _streams(seed: int):
    """Independent generators for init, phase 1, CMA-ES, phase 3 and the controller."""
    children = np.random.SeedSequence(seed).spawn(5)
    return [np.random.default_rng(c) for c in children]


@dataclass
class _Partial:
    """A run stopped at the end of its first univariate phase."""

    population: Population
    curve: list
    nfe: list
    phase: list
    best_x: np.ndarray
    best_value: float

    @property
    def used(self) -> int:
        return self.nfe[-1]

    def snapshot(self) -> "_Partial":
        return _Partial(self.population.copy(), list(self.curve), list(self.nfe), list(self.phase),
                        self.best_x.copy(), self.best_value)


def _start(problem: Problem, config: HsesConfig, rng_init: np.random.Generator) -> _Partial:
    pop = Population.random(problem, config.population_size, rng_init)
    return _Partial(pop, [pop.best_fitness], [pop.size], [PHASE_INIT], pop.best, pop.best_fitness)


def _advance(part: _Partial, problem: Problem, iterations: int, rng: np.random.Generator) -> None:
    out = uni_sampling(part.population, problem, None, iterations, rng)
    part.population = out.population
    base = part.used
    part.curve.extend(out.curve.tolist())
    part.nfe.extend(base + part.population.size * np.arange(1, iterations + 1))
    part.phase.extend([PHASE_UNI] * iterations)
    if out.best_f < part.best_value:
        part.best_value, part.best_x = out.best_f, out.best_x


def _complete(part: _Partial, problem: Problem, config: HsesConfig, seed: int, switch_iteration: int,
              rng_cma: np.random.Generator, rng_final: np.random.Generator,
              states: list | None = None) -> RunTrace:
    max_nfe = config.budget(problem.dimension)
    reserve = int(config.final_phase_reserve * max_nfe)
    curve, nfe, phase = part.curve, part.nfe, part.phase
    best_x, best_value = part.best_x, part.best_value

    cma_budget = max(0, max_nfe - part.used - reserve)
    out = cma_es(part.population, problem, config.cma, cma_budget, rng_cma)
    base = part.used
    for f, k in zip(out.curve, out.curve_nfe):
        best_value = min(best_value, float(f))
        curve.append(best_value)
        nfe.append(base + int(k))
        phase.append(PHASE_CMA)
    if out.best_f < part.best_value:
        best_x = out.best_x
    before_final = best_value
    used = base + out.nfe
    boundaries = [switch_iteration, switch_iteration + len(out.curve)]

    N = out.population.size
    final_iters = (max_nfe - used) // N
    if final_iters >= 1:
        fixed = detect(out.population, problem.lower, problem.upper, config.detect_threshold)
        fin = uni_sampling(out.population, problem, fixed, final_iters, rng_final)
        for k, f in enumerate(fin.curve, start=1):
            best_value = min(best_value, float(f))
            curve.append(best_value)
            nfe.append(used + k * N)
            phase.append(PHASE_FINAL)
        if fin.best_f < before_final:
            best_x = fin.best_x
        used += fin.nfe

    return RunTrace(
        problem_id=problem.id,
        seed=seed,
        curve=np.asarray(curve),
        nfe=np.asarray(nfe, dtype=np.int64),
        phase=phase,
        phase_boundaries=boundaries,
        best_x=best_x,
        best_value=best_value,
        final_error=problem.error(best_value),
        total_nfe=used,
        switch_iteration=switch_iteration,
        cma_restarts=out.restarts,
        states=states,
    )


def run_hses(problem: Problem, config: HsesConfig, seed: int) -> RunTrace:
    """One HSES run with the configured fixed switch iteration."""
    config.check(problem.dimension)
    rng_init, rng_uni, rng_cma, rng_final, _ = _streams(seed)
    part = _start(problem, config, rng_init)
    _advance(part, problem, config.switch_iteration, rng_uni)
    return _complete(part, problem, config, seed, config.switch_iteration, rng_cma, rng_final)


def _check_switch(switch_at: int, step: int, horizon: int) -> None:
    if switch_at < step or switch_at > step * horizon or switch_at % step:
        raise ConfigError(f"switch iteration must be one of {step}, {2 * step}, ..., {step * horizon}; got {switch_at}")


def run_hses_from_iteration(problem: Problem, config: HsesConfig, seed: int, switch_at: int,
                            step: int = DECISION_STEP, horizon: int = HORIZON) -> RunTrace:
    """HSES with the switch iteration taken from the decision grid ``step, 2*step, ...``."""
    _check_switch(switch_at, step, horizon)
    cfg = HsesConfig(switch_at, config.max_nfe, config.population_size, config.cma,
                     config.detect_threshold, config.final_phase_reserve)
    return run_hses(problem, cfg, seed)


def sweep_switch_points(problem: Problem, config: HsesConfig, seed: int, switch_points,
                        step: int = DECISION_STEP, horizon: int = HORIZON) -> dict[int, RunTrace]:
    """Runs for several switch iterations sharing a single phase-1 run.

    Equivalent to calling :func:`run_hses_from_iteration` once per switch point.
    """
    points = sorted(set(int(s) for s in switch_points))
    for s in points:
        _check_switch(s, step, horizon)
        config.check(problem.dimension, s)
    rng_init, rng_uni, _, _, _ = _streams(seed)
    part = _start(problem, config, rng_init)
    traces = {}
    done = 0
    for s in points:
        _advance(part, problem, s - done, rng_uni)
        done = s
        _, _, rng_cma, rng_final, _ = _streams(seed)
        traces[s] = _complete(part.snapshot(), problem, config, seed, s, rng_cma, rng_final)
    return traces
