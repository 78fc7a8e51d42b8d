"""The search heuristics combined by HSES.

``uni_sampling`` is a univariate Gaussian estimation-of-distribution step with
elitist replacement, ``cma_es`` is a (mu/mu_w, lambda) CMA-ES with rank-one and
rank-mu covariance updates and cumulative step-size adaptation, and ``detect``
picks the coordinates that have converged so a later phase can pin them.

All routines minimise, take an explicit ``numpy.random.Generator`` and evaluate
candidates in batches through ``problem(X)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .benchmarks import Problem


@dataclass
class Population:
    """Rows of ``X`` are individuals; ``fitness[i]`` is the objective of row ``i``."""

    X: np.ndarray
    fitness: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.fitness = np.asarray(self.fitness, dtype=float)
        if self.fitness.shape != (self.X.shape[0],):
            raise ValueError("one fitness value per individual required")

    @classmethod
    def random(cls, problem: Problem, size: int, rng: np.random.Generator) -> "Population":
        X = rng.uniform(problem.lower, problem.upper, size=(size, problem.dimension))
        return cls(X, problem(X))

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.fitness))

    @property
    def best(self) -> np.ndarray:
        return self.X[self.best_index].copy()

    @property
    def best_fitness(self) -> float:
        return float(self.fitness.min())

    def copy(self) -> "Population":
        return Population(self.X.copy(), self.fitness.copy())


@dataclass
class FixedIndexSet:
    """Coordinates pinned to fixed values during sampling."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must have equal length")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("fixed indices must be distinct")

    def __len__(self):
        return len(self.indices)


@dataclass
class SearchOutcome:
    population: Population
    nfe: int
    best_x: np.ndarray
    best_f: float
    curve: np.ndarray  # best-so-far after each iteration / generation
    restarts: int = 0
    curve_nfe: np.ndarray | None = None  # cumulative evaluations at each curve point


def uni_sampling(
    population: Population,
    problem: Problem,
    fixed: FixedIndexSet | None,
    iterations: int,
    rng: np.random.Generator,
    std_floor: float = 1e-10,
) -> SearchOutcome:
    """Run univariate Gaussian sampling for ``iterations`` iterations.

    Each iteration fits an independent normal per coordinate to the better
    half of the population, draws ``N`` candidates, pins the fixed coordinates,
    clips to the box and keeps the best ``N`` of parents plus offspring.
    Consumes exactly ``iterations * N`` evaluations.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pop = population.copy()
    N, n = pop.X.shape
    n_parents = max(2, N // 2)
    floor = std_floor * (problem.upper - problem.lower)
    fixed = fixed if fixed is not None else FixedIndexSet()
    curve = np.empty(iterations)
    best_f = pop.best_fitness
    for it in range(iterations):
        parents = pop.X[np.argsort(pop.fitness, kind="stable")[:n_parents]]
        mean = parents.mean(axis=0)
        std = np.maximum(parents.std(axis=0), floor)
        Xn = mean + std * rng.standard_normal((N, n))
        if len(fixed):
            Xn[:, fixed.indices] = fixed.values
        np.clip(Xn, problem.lower, problem.upper, out=Xn)
        fn = problem(Xn)
        X = np.vstack([pop.X, Xn])
        f = np.concatenate([pop.fitness, fn])
        keep = np.argsort(f, kind="stable")[:N]
        pop = Population(X[keep], f[keep])
        best_f = min(best_f, float(pop.fitness[0]))
        curve[it] = best_f
    return SearchOutcome(pop, iterations * N, pop.best, pop.best_fitness, curve,
                         curve_nfe=N * np.arange(1, iterations + 1))


@dataclass
class CMAParams:
    """Strategy parameters; ``None`` means the usual default for the dimension."""

    popsize: int | None = None
    stagnation_generations: int = 50
    stagnation_tol: float = 1e-12
    max_condition: float = 1e14
    sigma_floor: float = 1e-8

    def lam(self, n: int) -> int:
        return self.popsize if self.popsize else 4 + int(3 * math.log(n))


def _strategy_constants(n: int, lam: int):
    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w**2)
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    return mu, w, mueff, cc, cs, c1, cmu, damps


def cma_es(
    init: Population,
    problem: Problem,
    params: CMAParams | None,
    budget: int,
    rng: np.random.Generator,
    callback: Callable[[dict], None] | None = None,
) -> SearchOutcome:
    """CMA-ES started from the best individual of ``init``.

    The initial step size is the mean per-coordinate standard deviation of
    ``init``. The run ends when the next generation would exceed ``budget``
    or when the per-generation best values have varied by less than
    ``stagnation_tol`` (relative) over the last ``stagnation_generations``
    generations. If the covariance
    condition number passes ``max_condition`` the strategy restarts from the
    current mean with a doubled population.

    The returned population holds the most recently evaluated points (as many
    as ``init`` has), with the best point found substituted for the worst.
    """
    params = params or CMAParams()
    n = problem.dimension
    lam = params.lam(n)
    best_x = init.best
    best_f = init.best_fitness
    if budget < lam:
        return SearchOutcome(init.copy(), 0, best_x, best_f, np.empty(0), curve_nfe=np.empty(0, dtype=int))

    sigma0 = max(float(np.mean(init.X.std(axis=0))), params.sigma_floor)
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    keep = init.size
    recent_X: deque = deque()
    recent_f: deque = deque()
    n_recent = 0
    curve = []
    curve_nfe = []
    nfe = 0
    restarts = 0
    mean = best_x.copy()

    while nfe + lam <= budget:
        mu, w, mueff, cc, cs, c1, cmu, damps = _strategy_constants(n, lam)
        sigma = sigma0
        C = np.eye(n)
        B = np.eye(n)
        D = np.ones(n)
        ps = np.zeros(n)
        pc = np.zeros(n)
        gen = 0
        gen_best = []  # best sample of each generation since the last restart
        restart = False
        while nfe + lam <= budget:
            Z = rng.standard_normal((lam, n))
            X = mean + sigma * (Z * D) @ B.T
            np.clip(X, problem.lower, problem.upper, out=X)
            f = problem(X)
            nfe += lam
            gen += 1

            recent_X.append(X)
            recent_f.append(f)
            n_recent += lam
            while n_recent - len(recent_f[0]) >= keep:
                n_recent -= len(recent_f.popleft())
                recent_X.popleft()

            order = np.argsort(f, kind="stable")
            if f[order[0]] < best_f:
                best_f = float(f[order[0]])
                best_x = X[order[0]].copy()
            curve.append(best_f)
            curve_nfe.append(nfe)
            gen_best.append(float(f[order[0]]))

            Y = (X[order[:mu]] - mean) / sigma
            y_w = w @ Y
            mean = mean + sigma * y_w
            inv_sqrt_y = B @ ((B.T @ y_w) / D)
            ps = (1 - cs) * ps + math.sqrt(cs * (2 - cs) * mueff) * inv_sqrt_y
            ps_norm = float(np.linalg.norm(ps))
            hsig = ps_norm / math.sqrt(1 - (1 - cs) ** (2 * gen)) / chi_n < 1.4 + 2 / (n + 1)
            pc = (1 - cc) * pc + hsig * math.sqrt(cc * (2 - cc) * mueff) * y_w
            C = (
                (1 - c1 - cmu + (1 - hsig) * c1 * cc * (2 - cc)) * C
                + c1 * np.outer(pc, pc)
                + cmu * (Y.T * w) @ Y
            )
            C = 0.5 * (C + C.T)
            sigma *= math.exp((cs / damps) * (ps_norm / chi_n - 1))

            eig, B = np.linalg.eigh(C)
            if callback is not None:
                callback({"generation": gen, "C": C, "eigenvalues": eig, "sigma": sigma, "mean": mean})
            if not np.all(np.isfinite(eig)) or eig[0] <= 0 or eig[-1] / eig[0] > params.max_condition \
                    or not math.isfinite(sigma) or sigma <= 0:
                restart = True
                break
            D = np.sqrt(eig)

            if len(gen_best) > params.stagnation_generations:
                hist = gen_best[-1 - params.stagnation_generations:]
                lo = min(hist)
                if max(hist) - lo <= params.stagnation_tol * abs(lo):
                    break
        if not restart:
            break
        restarts += 1
        lam *= 2

    if nfe == 0:
        return SearchOutcome(init.copy(), 0, best_x, best_f, np.empty(0), curve_nfe=np.empty(0, dtype=int))
    PX = np.vstack(recent_X)[-keep:]
    Pf = np.concatenate(recent_f)[-keep:]
    if best_f < Pf.min():
        worst = int(np.argmax(Pf))
        PX[worst] = best_x
        Pf[worst] = best_f
    return SearchOutcome(Population(PX, Pf), nfe, best_x, best_f, np.asarray(curve), restarts,
                         np.asarray(curve_nfe))


def detect(population: Population, lower: np.ndarray, upper: np.ndarray, threshold: float = 1e-6) -> FixedIndexSet:
    """Coordinates whose spread relative to the box width fell below ``threshold``.

    Fixed values are taken from the best individual.
    """
    rel = population.X.std(axis=0) / (np.asarray(upper) - np.asarray(lower))
    idx = np.flatnonzero(rel < threshold)
    return FixedIndexSet(idx, population.X[population.best_index, idx])
