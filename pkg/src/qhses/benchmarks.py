"""Shifted and rotated test functions with a small registry.

Every base function is written in terms of ``y = R (x - shift)`` and has its
global minimum ``0`` at ``y = 0``; the problem adds a positive constant
``optimum_value`` on top, CEC style, so raw objective values stay positive.

Problems are addressable by ``"base-kind:dimension:seed"`` keys, optionally
followed by an explicit optimum value (``"rastrigin:10:1:500"``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

LOWER_BOUND = -100.0
UPPER_BOUND = 100.0

# canonical index of each base kind; default optimum value is 100 * index
BASE_KINDS = {
    "sphere": 1,
    "elliptic": 2,
    "bent_cigar": 3,
    "rosenbrock": 4,
    "rastrigin": 5,
    "ackley": 6,
    "griewank": 7,
    "schwefel": 8,
    "hybrid": 9,
    "composition": 10,
}

UNIMODAL = ("sphere", "elliptic", "bent_cigar")

# (fraction, base) blocks for the hybrid function
HYBRID_BLOCKS = ((0.3, "bent_cigar"), (0.3, "rosenbrock"), (0.4, "rastrigin"))

# (base, lambda, sigma, bias) components for the composition function
COMPOSITION_COMPONENTS = (
    ("rastrigin", 1.0, 10.0, 0.0),
    ("griewank", 10.0, 20.0, 100.0),
    ("elliptic", 1e-6, 30.0, 200.0),
)

_SCHWEFEL_Z = 420.9687436961694
_SCHWEFEL_G = _SCHWEFEL_Z * math.sin(math.sqrt(_SCHWEFEL_Z))


class ProblemError(ValueError):
    """Raised for malformed problem definitions or inputs."""


def _sphere(z):
    return np.sum(z * z, axis=1)


def _elliptic(z):
    k = z.shape[1]
    if k == 1:
        return z[:, 0] ** 2
    w = 10.0 ** (6.0 * np.arange(k) / (k - 1))
    return (z * z) @ w


def _bent_cigar(z):
    return z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)


def _rosenbrock(z):
    z = 0.02048 * z + 1.0
    a = z[:, :-1]
    b = z[:, 1:]
    return np.sum(100.0 * (b - a * a) ** 2 + (a - 1.0) ** 2, axis=1)


def _rastrigin(z):
    z = 0.0512 * z
    return np.sum(z * z - 10.0 * np.cos(2.0 * np.pi * z) + 10.0, axis=1)


def _ackley(z):
    k = z.shape[1]
    s1 = np.sum(z * z, axis=1) / k
    s2 = np.sum(np.cos(2.0 * np.pi * z), axis=1) / k
    return -20.0 * np.exp(-0.2 * np.sqrt(s1)) - np.exp(s2) + 20.0 + math.e


def _griewank(z):
    z = 6.0 * z
    k = z.shape[1]
    i = np.sqrt(np.arange(1, k + 1))
    return np.sum(z * z, axis=1) / 4000.0 - np.prod(np.cos(z / i), axis=1) + 1.0


def _schwefel(z):
    k = z.shape[1]
    z = 10.0 * z + _SCHWEFEL_Z
    g = np.empty_like(z)
    inside = np.abs(z) <= 500.0
    g[inside] = z[inside] * np.sin(np.sqrt(np.abs(z[inside])))
    hi = z > 500.0
    m = 500.0 - np.fmod(z[hi], 500.0)
    g[hi] = m * np.sin(np.sqrt(np.abs(m))) - (z[hi] - 500.0) ** 2 / (10000.0 * k)
    lo = z < -500.0
    m = np.fmod(np.abs(z[lo]), 500.0) - 500.0
    g[lo] = m * np.sin(np.sqrt(np.abs(m))) - (z[lo] + 500.0) ** 2 / (10000.0 * k)
    return _SCHWEFEL_G * k - np.sum(g, axis=1)


BASE_FUNCTIONS = {
    "sphere": _sphere,
    "elliptic": _elliptic,
    "bent_cigar": _bent_cigar,
    "rosenbrock": _rosenbrock,
    "rastrigin": _rastrigin,
    "ackley": _ackley,
    "griewank": _griewank,
    "schwefel": _schwefel,
}


def hybrid_block_sizes(dimension: int) -> list[int]:
    """Sizes of the three coordinate blocks of the hybrid function."""
    sizes = []
    used = 0
    for frac, _ in HYBRID_BLOCKS[:-1]:
        k = min(int(math.ceil(frac * dimension)), dimension - used)
        sizes.append(k)
        used += k
    sizes.append(dimension - used)
    return sizes


@dataclass(frozen=True, eq=False)
class Problem:
    """A box-constrained black-box objective with a known minimum.

    Call it with a vector (returns a float) or with an ``(m, n)`` matrix of
    row vectors (returns ``m`` values).
    """

    id: str
    dimension: int
    base_kind: str
    optimum_value: float
    lower: np.ndarray
    upper: np.ndarray
    shift: np.ndarray | None = None
    rotation: np.ndarray | None = None
    permutation: np.ndarray | None = None
    component_shifts: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise ProblemError("dimension must be >= 1")
        if self.base_kind not in BASE_KINDS:
            raise ProblemError(f"unknown base kind {self.base_kind!r}")
        if self.lower.shape != (self.dimension,) or self.upper.shape != (self.dimension,):
            raise ProblemError("bounds must have one entry per coordinate")
        if np.any(self.lower >= self.upper):
            raise ProblemError("lower bound must be below upper bound")
        if self.shift is not None and self.shift.shape != (self.dimension,):
            raise ProblemError("shift has wrong length")
        if self.rotation is not None and self.rotation.shape != (self.dimension,) * 2:
            raise ProblemError("rotation has wrong shape")
        for arr in (self.lower, self.upper, self.shift, self.rotation,
                    self.permutation, self.component_shifts):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def optimizer(self) -> np.ndarray:
        """The constructed global minimizer."""
        if self.shift is None:
            return np.zeros(self.dimension)
        return self.shift.copy()

    def _transform(self, X, shift):
        Y = X - shift if shift is not None else X
        if self.rotation is not None:
            Y = Y @ self.rotation.T
        return Y

    def raw(self, X: np.ndarray) -> np.ndarray:
        """Base value (without the optimum offset) for a matrix of rows."""
        if self.base_kind == "composition":
            return self._composition(X)
        Y = self._transform(X, self.shift)
        if self.base_kind == "hybrid":
            Y = Y[:, self.permutation]
            out = np.zeros(len(Y))
            start = 0
            for size, (_, kind) in zip(hybrid_block_sizes(self.dimension), HYBRID_BLOCKS):
                if size:
                    out += BASE_FUNCTIONS[kind](Y[:, start:start + size])
                start += size
            return out
        return BASE_FUNCTIONS[self.base_kind](Y)

    def _composition(self, X):
        n = self.dimension
        values = []
        weights = []
        for shift, (kind, lam, sigma, bias) in zip(self.component_shifts, COMPOSITION_COMPONENTS):
            d2 = np.sum((X - shift) ** 2, axis=1)
            with np.errstate(divide="ignore"):
                w = np.where(d2 > 0, np.exp(-d2 / (2.0 * n * sigma**2)) / np.sqrt(d2), np.inf)
            weights.append(w)
            values.append(lam * BASE_FUNCTIONS[kind](self._transform(X, shift)) + bias)
        W = np.column_stack(weights)
        V = np.column_stack(values)
        exact = np.isinf(W)
        hit = exact.any(axis=1)
        W[hit] = exact[hit].astype(float)
        total = W.sum(axis=1)
        # far from every optimum all weights underflow; fall back to equal weights
        W[total == 0] = 1.0
        total[total == 0] = W.shape[1]
        return np.sum(W * V, axis=1) / total

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        if X.ndim == 1:
            if X.shape[0] != self.dimension:
                raise ProblemError(f"expected {self.dimension} coordinates, got {X.shape[0]}")
            return float(self.raw(X[None, :])[0] + self.optimum_value)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ProblemError(f"expected rows of {self.dimension} coordinates, got shape {X.shape}")
        return self.raw(X) + self.optimum_value

    def error(self, value: float) -> float:
        return zero_small(value - self.optimum_value)


def evaluate(problem: Problem, x) -> float:
    """Objective value of a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != problem.dimension:
        raise ProblemError(f"expected a vector of {problem.dimension} coordinates, got shape {x.shape}")
    return problem(x)


ZERO_THRESHOLD = 1e-8


def zero_small(err):
    """Error values at or below 1e-8 count as exactly zero (also clamps negatives)."""
    if np.ndim(err) == 0:
        err = float(err)
        return 0.0 if err <= ZERO_THRESHOLD else err
    err = np.asarray(err, dtype=float)
    return np.where(err <= ZERO_THRESHOLD, 0.0, err)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a QR decomposition."""
    A = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def make_problem(
    base_kind: str,
    dimension: int,
    seed: int = 0,
    optimum_value: float | None = None,
    rotate: bool = True,
    problem_id: str | None = None,
) -> Problem:
    """Build a shifted (and usually rotated) problem deterministically from ``seed``."""
    if base_kind not in BASE_KINDS:
        raise ProblemError(f"unknown base kind {base_kind!r}; choose from {sorted(BASE_KINDS)}")
    if dimension < 1:
        raise ProblemError("dimension must be >= 1")
    if optimum_value is None:
        optimum_value = 100.0 * BASE_KINDS[base_kind]
    rng = np.random.default_rng([BASE_KINDS[base_kind], dimension, seed])
    lower = np.full(dimension, LOWER_BOUND)
    upper = np.full(dimension, UPPER_BOUND)
    centre, half = 0.5 * (lower + upper), 0.4 * (upper - lower)
    shift = rng.uniform(centre - half, centre + half)
    rotation = random_rotation(dimension, rng) if rotate else None
    permutation = component_shifts = None
    if base_kind == "hybrid":
        permutation = rng.permutation(dimension)
    elif base_kind == "composition":
        others = rng.uniform(centre - half, centre + half, size=(len(COMPOSITION_COMPONENTS) - 1, dimension))
        component_shifts = np.vstack([shift, others])
    return Problem(
        id=problem_id or f"{base_kind}:{dimension}:{seed}",
        dimension=dimension,
        base_kind=base_kind,
        optimum_value=float(optimum_value),
        lower=lower,
        upper=upper,
        shift=shift,
        rotation=rotation,
        permutation=permutation,
        component_shifts=component_shifts,
    )


def problem_from_key(key: str) -> Problem:
    """Parse ``"kind:dimension:seed[:optimum]"`` into a problem."""
    parts = key.split(":")
    if len(parts) not in (3, 4):
        raise ProblemError(f"problem key must be kind:dimension:seed[:optimum], got {key!r}")
    try:
        dimension = int(parts[1])
        seed = int(parts[2])
        optimum = float(parts[3]) if len(parts) == 4 else None
    except ValueError as exc:
        raise ProblemError(f"bad problem key {key!r}: {exc}") from None
    return make_problem(parts[0], dimension, seed, optimum, problem_id=key)


def with_dimension(key: str, dimension: int) -> str:
    """Rewrite the dimension field of a problem key."""
    parts = key.split(":")
    parts[1] = str(dimension)
    return ":".join(parts)


def load_transform_data(path, dimension: int) -> tuple[np.ndarray, np.ndarray]:
    """Read a shift vector and rotation matrix from a plain-text file.

    The first line holds ``dimension`` shift values, followed by ``dimension``
    lines of ``dimension`` rotation entries each. Orthogonality is checked but
    not enforced.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < dimension + 1:
        raise ProblemError(f"{path}: expected {dimension + 1} non-empty lines, found {len(lines)}")
    try:
        rows = [[float(tok) for tok in ln.split()] for ln in lines[: dimension + 1]]
    except ValueError as exc:
        raise ProblemError(f"{path}: {exc}") from None
    if len(rows[0]) != dimension:
        raise ProblemError(f"{path}: shift line has {len(rows[0])} values, expected {dimension}")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != dimension:
            raise ProblemError(f"{path}: line {i} has {len(row)} values, expected {dimension}")
    shift = np.array(rows[0])
    rotation = np.array(rows[1:])
    dev = np.max(np.abs(rotation.T @ rotation - np.eye(dimension)))
    if dev > 1e-6:
        logger.warning("%s: rotation deviates from orthogonal by %.3g", path, dev)
    return shift, rotation


def write_transform_data(path, shift: np.ndarray, rotation: np.ndarray) -> None:
    lines = [" ".join(repr(float(v)) for v in shift)]
    lines += [" ".join(repr(float(v)) for v in row) for row in rotation]
    Path(path).write_text("\n".join(lines) + "\n")


def problem_with_transform(base_kind: str, path, dimension: int, optimum_value: float | None = None) -> Problem:
    """A problem whose shift and rotation come from an external data file."""
    if base_kind in ("hybrid", "composition"):
        raise ProblemError("external transforms are supported for single-base kinds only")
    shift, rotation = load_transform_data(path, dimension)
    if optimum_value is None:
        optimum_value = 100.0 * BASE_KINDS[base_kind]
    return Problem(
        id=f"{base_kind}:{dimension}:file",
        dimension=dimension,
        base_kind=base_kind,
        optimum_value=float(optimum_value),
        lower=np.full(dimension, LOWER_BOUND),
        upper=np.full(dimension, UPPER_BOUND),
        shift=shift,
        rotation=rotation,
    )
