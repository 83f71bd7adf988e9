"""Immutable value types shared by the optimization and feedback loops."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


def _frozen_array(x, dtype=np.float64, ndim: int = 1) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class FeedbackSource(str, Enum):
    SIMULATED = "simulated"
    HUMAN = "human"


@dataclass(frozen=True)
class Observation:
    """One evaluated design point: unit of the BO dataset."""

    x: np.ndarray
    y: float
    iteration: int

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not np.isfinite(self.y):
            raise ValueError(f"objective value must be finite, got {self.y}")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    def in_box(self, lb: float, ub: float) -> bool:
        return bool(np.all(self.x >= lb) and np.all(self.x <= ub))


@dataclass(frozen=True)
class PreferenceExample:
    """One labeled pair: unit of the preference dataset.

    label 0 means the first point was preferred.
    """

    x0: np.ndarray
    x1: np.ndarray
    label: int
    source: FeedbackSource = FeedbackSource.SIMULATED
    created_at_iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", _frozen_array(self.x0))
        object.__setattr__(self, "x1", _frozen_array(self.x1))
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.x0.shape != self.x1.shape:
            raise ValueError("paired points must have the same dimension")
        if np.array_equal(self.x0, self.x1):
            raise ValueError("paired points must be distinct")
        object.__setattr__(self, "source", FeedbackSource(self.source))


@dataclass(frozen=True)
class TraceRecord:
    """Per-iteration campaign metrics row."""

    iteration: int
    best_value: float
    incumbent_norm: float
    labels_total: int
    pref_posterior_version_used: int  # -1 when no preference snapshot existed
    wall_ms: int

    CSV_HEADER = (
        "iteration,best_value,incumbent_norm,labels_total,"
        "pref_posterior_version_used,wall_ms"
    )

    def csv_row(self) -> str:
        return ",".join(
            [
                str(self.iteration),
                repr(float(self.best_value)),
                repr(float(self.incumbent_norm)),
                str(self.labels_total),
                str(self.pref_posterior_version_used),
                str(self.wall_ms),
            ]
        )


@dataclass(frozen=True)
class ScoredPair:
    """Candidate comparison pair, canonically ordered i < j."""

    i: int
    j: int
    beta_score: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a pair must reference two distinct observations")
        if self.i > self.j:
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)
