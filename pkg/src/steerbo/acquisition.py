"""Candidate pools and the acquisition rules that pick the next evaluation.

Acquisition maximization happens over a finite pool (fresh scrambled Sobol
points in the box, or the not-yet-evaluated rows of a fingerprint set), so a
joint posterior sample scores every candidate exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from steerbo.config import CampaignConfig
from steerbo.testbed import FingerprintSet

POOL_CAP = 4096


@dataclass(frozen=True)
class GammaSchedule:
    """Multiplicative decay of the preference weight, gamma0 * decay^t."""

    gamma0: float
    decay: float = 1.0

    def __post_init__(self):
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be non-negative")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")

    def value(self, t: int) -> float:
        return self.gamma0 * self.decay**t


@dataclass(frozen=True)
class CandidatePool:
    points: np.ndarray  # (n, d)
    origin: str  # "sobol" | "dataset"
    indices: Optional[np.ndarray] = None  # dataset rows backing each point

    def __len__(self) -> int:
        return self.points.shape[0]


def sobol_points(
    n: int,
    d: int,
    rng: Optional[np.random.Generator] = None,
    scramble: bool = True,
) -> np.ndarray:
    """n Sobol points in the unit cube, skipping the degenerate all-zeros point."""
    engine = qmc.Sobol(d=d, scramble=scramble, seed=rng)
    engine.fast_forward(1)
    with warnings.catch_warnings():
        # Off-power-of-two sizes trade balance for flexibility; that is fine here.
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def make_pool(
    config: CampaignConfig,
    rng: np.random.Generator,
    remaining: Optional[FingerprintSet] = None,
) -> CandidatePool:
    """Fresh candidate pool for one BO iteration."""
    if config.is_fingerprint_campaign:
        if remaining is None or len(remaining) == 0:
            raise ValueError("dataset pools need at least one unevaluated fingerprint")
        idx = np.arange(len(remaining))
        if len(remaining) > POOL_CAP:
            idx = np.sort(rng.choice(len(remaining), size=POOL_CAP, replace=False))
        return CandidatePool(points=remaining.vectors[idx], origin="dataset", indices=idx)
    unit = sobol_points(config.pool_size, config.d, rng=rng)
    return CandidatePool(points=config.lb + (config.ub - config.lb) * unit, origin="sobol")


def acquire_ts(f_hat: np.ndarray, pool: CandidatePool) -> tuple[int, np.ndarray]:
    """Index and point maximizing the sampled objective; first index wins ties."""
    f_hat = np.asarray(f_hat)
    if f_hat.shape[0] != len(pool):
        raise ValueError("sample vector and pool size differ")
    idx = int(np.argmax(f_hat))
    return idx, pool.points[idx]


def acquire_steered(
    f_hat: np.ndarray,
    r_hat: Optional[np.ndarray],
    gamma_t: float,
    pool: CandidatePool,
) -> tuple[int, np.ndarray, np.ndarray]:
    """Preference-steered Thompson step: maximize f_hat + gamma_t * r_hat.

    With no preference sample yet (r_hat None) this is exactly plain
    Thompson sampling for any gamma.
    """
    f_hat = np.asarray(f_hat, dtype=np.float64)
    if r_hat is None:
        scores = f_hat.copy()
    else:
        r_hat = np.asarray(r_hat, dtype=np.float64)
        if r_hat.shape != f_hat.shape:
            raise ValueError("objective and preference samples must align")
        scores = f_hat + gamma_t * r_hat
    idx = int(np.argmax(scores))
    return idx, pool.points[idx], scores
