"""Black-box objectives, simulated experts, and fingerprint candidate sets.

All objectives are exposed in maximization convention: the classical test
functions (and docking-style scores) are minimization problems, so their
values are negated at ingestion and every optimum below is a maximum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from steerbo.types import Observation


@dataclass(frozen=True)
class Problem:
    name: str
    d: int
    lb: float
    ub: float
    evaluate: Callable[[np.ndarray], float]
    known_optimum_value: Optional[float] = None
    known_optimizer: Optional[np.ndarray] = None

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lb, self.ub, size=(n, self.d))


def _ackley(x: np.ndarray) -> float:
    a, b, c = 20.0, 0.2, 2.0 * np.pi
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    s1 = -a * np.exp(-b * np.sqrt(np.sum(x**2) / d))
    s2 = -np.exp(np.sum(np.cos(c * x)) / d)
    return float(s1 + s2 + a + np.e)


def _levy(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:-1] + 1.0) ** 2))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    return float(head + mid + tail)


def _rastrigin(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.shape[0] + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x)))


_HARTMANN_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)
_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])

# Multi-start L-BFGS fixture (200 random restarts over the unit box).
_HARTMANN_OPT_VALUE = 3.322368011415487
_HARTMANN_OPT_X = np.array(
    [0.20168953, 0.15001067, 0.47687401, 0.27533244, 0.31165162, 0.65730055]
)


def _hartmann6(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    inner = np.sum(_HARTMANN_A * (x - _HARTMANN_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN_ALPHA * np.exp(-inner)))


def _negated(f: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    return lambda x: -f(x)


_CATALOG: dict[str, Problem] = {
    "ackley10": Problem(
        "ackley10", 10, -32.768, 32.768, _negated(_ackley), 0.0, np.zeros(10)
    ),
    "levy10": Problem("levy10", 10, -10.0, 10.0, _negated(_levy), 0.0, np.ones(10)),
    "rastrigin10": Problem(
        "rastrigin10", 10, -5.12, 5.12, _negated(_rastrigin), 0.0, np.zeros(10)
    ),
    "hartmann6": Problem(
        "hartmann6",
        6,
        0.0,
        1.0,
        _negated(_hartmann6),
        _HARTMANN_OPT_VALUE,
        _HARTMANN_OPT_X,
    ),
}

PROBLEM_NAMES = tuple(sorted(_CATALOG))

# Norm targets the constraint expert defaults to when c is not user-supplied.
DEFAULT_CONSTRAINT_C = {"ackley10": 100.0, "levy10": 22.0}


def make_problem(name: str) -> Problem:
    try:
        return _CATALOG[name]
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r}; expected one of {', '.join(PROBLEM_NAMES)}"
        ) from None


class ExpertKind(str, Enum):
    HINT = "hint"
    CONSTRAINT = "constraint"


@dataclass(frozen=True)
class ExpertOracle:
    """Hidden scoring function a simulated expert labels pairs with."""

    kind: ExpertKind
    score: Callable[[np.ndarray], float]


def make_expert(kind: str, problem: Problem, c: Optional[float] = None) -> ExpertOracle:
    """Build a simulated expert.

    ``hint`` scores by negative squared distance to the problem's optimizer;
    ``constraint`` by negative squared deviation of the point's norm from c.
    """
    kind = ExpertKind(kind)
    if kind is ExpertKind.HINT:
        if problem.known_optimizer is None:
            raise ValueError(
                f"hint expert requires a known optimizer for {problem.name!r}"
            )
        x_star = problem.known_optimizer

        def hint_score(x: np.ndarray) -> float:
            return -float(np.sum((np.asarray(x, dtype=float) - x_star) ** 2))

        return ExpertOracle(kind, hint_score)

    if c is None:
        c = DEFAULT_CONSTRAINT_C.get(problem.name)
        if c is None:
            raise ValueError(
                f"constraint expert for {problem.name!r} requires an explicit c"
            )
    if c < 0:
        raise ValueError("constraint target c must be non-negative")
    c = float(c)

    def constraint_score(x: np.ndarray) -> float:
        return -float((np.linalg.norm(np.asarray(x, dtype=float)) - c) ** 2)

    return ExpertOracle(kind, constraint_score)


def expert_label(oracle: ExpertOracle, x0: np.ndarray, x1: np.ndarray) -> int:
    """0 iff the hidden score strictly prefers x0; ties labeled 1."""
    return 0 if oracle.score(x0) > oracle.score(x1) else 1


def feedback_arrives(rng: np.random.Generator, p_fb: float) -> bool:
    """Bernoulli arrival of one feedback event, from the feedback RNG stream."""
    if not 0.0 <= p_fb <= 1.0:
        raise ValueError(f"p_fb must be in [0, 1], got {p_fb}")
    return bool(rng.random() < p_fb)


@dataclass(frozen=True)
class FingerprintSet:
    """Binary feature vectors with identifiers and optional objective values."""

    vectors: np.ndarray  # (n, bits) of {0, 1}
    identifiers: tuple[str, ...]
    values: Optional[np.ndarray] = None  # raw values; negate for maximization

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise ValueError("fingerprint matrix must be 2-d")
        if len(self.identifiers) != self.vectors.shape[0]:
            raise ValueError("one identifier required per fingerprint")
        if self.values is not None and self.values.shape[0] != self.vectors.shape[0]:
            raise ValueError("one value required per fingerprint when present")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def bits(self) -> int:
        return self.vectors.shape[1]


def load_fingerprints(path) -> FingerprintSet:
    """Read a fingerprint CSV: header id,bit_0,...,bit_{B-1}[,value]."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ValueError("fingerprint CSV must start with an 'id' column")
        has_value = header[-1] == "value"
        bit_cols = header[1 : -1 if has_value else len(header)]
        n_bits = len(bit_cols)
        expected = [f"bit_{i}" for i in range(n_bits)]
        if bit_cols != expected:
            raise ValueError("bit columns must be named bit_0..bit_{B-1} in order")
        if n_bits == 0:
            raise ValueError("fingerprint CSV has no bit columns")

        ids: list[str] = []
        rows: list[list[int]] = []
        values: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            if not row[0]:
                raise ValueError(f"row {lineno}: missing identifier")
            bits = row[1 : 1 + n_bits]
            parsed = []
            for col, tok in zip(expected, bits):
                if tok not in ("0", "1"):
                    raise ValueError(f"row {lineno}: {col} must be 0 or 1, got {tok!r}")
                parsed.append(int(tok))
            ids.append(row[0])
            rows.append(parsed)
            if has_value:
                values.append(float(row[-1]))

    if not rows:
        raise ValueError("fingerprint CSV contains no data rows")
    return FingerprintSet(
        vectors=np.array(rows, dtype=np.float64),
        identifiers=tuple(ids),
        values=np.array(values, dtype=np.float64) if has_value else None,
    )


def observations_matrix(data: list[Observation]) -> np.ndarray:
    """Stack observation design points into an (m, d) matrix."""
    return np.stack([obs.x for obs in data])
