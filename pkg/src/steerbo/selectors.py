"""Pair generation and top-k selection strategies for the feedback loop.

Every selector scores candidate index pairs with some informativeness proxy
(beta) and returns at most k of them, deterministically given its RNG state.
Selectors that need a preference posterior fall back to random selection
before the first snapshot exists.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from steerbo.preference import PreferencePosterior, pref_sample_scores, _sigmoid
from steerbo.types import Observation, ScoredPair

log = logging.getLogger(__name__)

DEFAULT_CANDIDATE_PAIRS = 256
BALD_SAMPLES = 64


def generate_candidate_pairs(
    data: list[Observation],
    m_cand: int = DEFAULT_CANDIDATE_PAIRS,
    rng: Optional[np.random.Generator] = None,
) -> list[tuple[int, int]]:
    """min(m_cand, C(n, 2)) distinct unordered index pairs, without replacement."""
    n = len(data)
    if n < 2:
        raise ValueError("pair generation needs at least two observations")
    total = n * (n - 1) // 2
    if total <= m_cand:
        return [(i, j) for i in range(n - 1) for j in range(i + 1, n)]
    if rng is None:
        raise ValueError("an RNG is required when subsampling pairs")
    flat = rng.choice(total, size=m_cand, replace=False)
    return [_unrank_pair(int(k), n) for k in np.sort(flat)]


def _unrank_pair(k: int, n: int) -> tuple[int, int]:
    """k-th pair in the row-major upper-triangle enumeration of C(n, 2)."""
    i = int((2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * k)) // 2)
    j = k - (i * (2 * n - i - 1)) // 2 + i + 1
    return i, j


def select_random(
    pairs: list[tuple[int, int]], k: int, rng: np.random.Generator
) -> list[ScoredPair]:
    if not pairs:
        return []
    take = min(k, len(pairs))
    chosen = rng.choice(len(pairs), size=take, replace=False)
    return [ScoredPair(*pairs[int(c)], beta_score=0.0) for c in chosen]


def select_bald(
    points: np.ndarray,
    pairs: list[tuple[int, int]],
    posterior: Optional[PreferencePosterior],
    k: int,
    n_samples: int = BALD_SAMPLES,
    rng: Optional[np.random.Generator] = None,
) -> list[ScoredPair]:
    """Top-k pairs by mutual information between the label and the parameters.

    beta = H[mean_s p_s] - mean_s H[p_s] with p_s the label-0 probability
    under the s-th posterior score sample (binary entropies, nats).
    """
    if posterior is None:
        log.info("no preference posterior yet; BALD falling back to random selection")
        return select_random(pairs, k, rng)
    if not pairs:
        return []
    if n_samples < 2:
        raise ValueError("BALD needs at least two posterior samples")
    draws = pref_sample_scores(posterior, points, rng, n_samples)  # (S, n)
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    p_s = _sigmoid(draws[:, ii] - draws[:, jj])  # (S, pairs)
    beta = _binary_entropy(p_s.mean(axis=0)) - _binary_entropy(p_s).mean(axis=0)
    return _top_k(pairs, beta, k, descending=True)


def select_sdiff(
    points: np.ndarray,
    pairs: list[tuple[int, int]],
    posterior: Optional[PreferencePosterior],
    k: int,
    rng: Optional[np.random.Generator] = None,
) -> list[ScoredPair]:
    """Top-k pairs whose Thompson-sampled scores are closest (hardest calls)."""
    return _select_by_diff(points, pairs, posterior, k, rng, descending=False)


def select_ldiff(
    points: np.ndarray,
    pairs: list[tuple[int, int]],
    posterior: Optional[PreferencePosterior],
    k: int,
    rng: Optional[np.random.Generator] = None,
) -> list[ScoredPair]:
    """Top-k pairs whose Thompson-sampled scores are farthest apart."""
    return _select_by_diff(points, pairs, posterior, k, rng, descending=True)


def _select_by_diff(points, pairs, posterior, k, rng, descending):
    if posterior is None:
        log.info("no preference posterior yet; falling back to random selection")
        return select_random(pairs, k, rng)
    if not pairs:
        return []
    sample = pref_sample_scores(posterior, points, rng, 1)[0]
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    diffs = np.abs(sample[ii] - sample[jj])
    return _top_k(pairs, diffs, k, descending=descending)


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return -(p * np.log(p) + (1.0 - p) * np.log1p(-p))


def _top_k(pairs, scores, k, descending) -> list[ScoredPair]:
    """Stable top-k: ties resolved by original pair order."""
    key = -scores if descending else scores
    order = np.argsort(key, kind="stable")[: min(k, len(pairs))]
    return [ScoredPair(*pairs[int(c)], beta_score=float(scores[int(c)])) for c in order]
