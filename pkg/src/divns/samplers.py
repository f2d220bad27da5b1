"""Negative-sampling primitives: candidate draws, baselines, per-user pools.

All draws take an explicit ``eligible`` array (the user's non-train items,
ascending) and a dedicated RNG stream, so results are reproducible and
independent of scheduling. Ranking ties always break toward the lowest item
index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EmbeddingTable


@dataclass
class CandidateSet:
    """Distinct negative candidates drawn for one (user, positive) pair."""

    user: int
    positive: int
    items: np.ndarray


@dataclass
class HardNegativeSet:
    """Per-epoch hard negatives for one user, positive-major order.

    items has one entry per (train positive, hard slot); entries may repeat
    across positives.
    """

    user: int
    epoch: int
    items: np.ndarray


@dataclass
class NegativeCache:
    """Runner-up candidates kept for the next epoch's diverse selection."""

    user: int
    epoch: int
    items: np.ndarray
    scores: np.ndarray
    per_positive: int


def _draw_distinct_rows(
    eligible: np.ndarray, rows: int, m: int, rng: np.random.Generator
) -> np.ndarray:
    """rows x m matrix of without-replacement draws from eligible, per row.

    Rows are drawn with replacement and redrawn exactly on collision, which
    keeps the per-row law uniform over distinct m-tuples while staying fast
    for m much smaller than the pool.
    """
    n = int(eligible.size)
    if m > n:
        raise ValueError(f"cannot draw {m} distinct candidates from {n} eligible items")
    if m * m * 4 >= n:
        out = np.empty((rows, m), dtype=np.int64)
        for r in range(rows):
            out[r] = rng.choice(n, size=m, replace=False)
    else:
        out = rng.integers(0, n, size=(rows, m))
        while True:
            srt = np.sort(out, axis=1)
            bad = np.nonzero((np.diff(srt, axis=1) == 0).any(axis=1))[0]
            if bad.size == 0:
                break
            for r in bad:
                out[r] = rng.choice(n, size=m, replace=False)
    return eligible[out]


def sample_candidates(
    eligible: np.ndarray,
    m: int,
    rng: np.random.Generator,
    user: int = -1,
    positive: int = -1,
) -> CandidateSet:
    """Draw m distinct candidates uniformly from the user's eligible items."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    items = _draw_distinct_rows(np.asarray(eligible, dtype=np.int64), 1, m, rng)[0]
    return CandidateSet(user=user, positive=positive, items=items)


def rns_select(candidates: CandidateSet, rng: np.random.Generator) -> int:
    """Uniform pick from the candidate set (random negative sampling)."""
    items = candidates.items
    if items.size == 0:
        raise ValueError("empty candidate set")
    return int(items[rng.integers(0, items.size)])


def popularity_weights(popularity: np.ndarray, eligible: np.ndarray, beta: float = 0.75) -> np.ndarray:
    """Cumulative popularity^beta weights over eligible items."""
    w = popularity[eligible].astype(float) ** beta
    total = w.sum()
    if not total > 0:
        raise ValueError("eligible items carry zero total popularity weight")
    return np.cumsum(w)


def pns_select(
    dataset,
    eligible: np.ndarray,
    rng: np.random.Generator,
    beta: float = 0.75,
    cumweights: np.ndarray | None = None,
) -> int:
    """Draw one negative with probability proportional to popularity^beta."""
    eligible = np.asarray(eligible, dtype=np.int64)
    if eligible.size == 0:
        raise ValueError("no eligible items to sample from")
    cum = popularity_weights(dataset.popularity, eligible, beta) if cumweights is None else cumweights
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return int(eligible[min(idx, eligible.size - 1)])


def rank_candidates(
    table: EmbeddingTable, user: int, items: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Order candidates by descending score, ties toward the lowest item index.

    Returns (ranked_items, ranked_scores).
    """
    scores = table.item_vectors[items] @ table.user_vectors[user]
    order = np.lexsort((items, -scores))
    return items[order], scores[order]


def dns_select(
    table: EmbeddingTable, user: int, candidates: CandidateSet
) -> tuple[int, np.ndarray]:
    """Dynamic negative sampling: the top-scored candidate wins.

    Returns (hard_negative, full_descending_ranking).
    """
    ranked, _ = rank_candidates(table, user, candidates.items)
    return int(ranked[0]), ranked


def build_pools(
    table: EmbeddingTable,
    user: int,
    positives: np.ndarray,
    eligible: np.ndarray,
    m: int,
    r: int,
    rng: np.random.Generator,
    num_hard: int = 1,
    epoch: int = 0,
) -> tuple[HardNegativeSet, NegativeCache]:
    """Two-stage pools for one user: hard negatives plus a runner-up cache.

    For each train positive: draw m distinct candidates, rank them by score,
    keep the top ``num_hard`` as hard negatives and the next ``num_hard * r``
    (with scores) in the cache. Requires num_hard * (1 + r) <= m so every
    positive can fill both pools.
    """
    positives = np.asarray(positives, dtype=np.int64)
    eligible = np.asarray(eligible, dtype=np.int64)
    if num_hard < 1:
        raise ValueError(f"num_hard must be >= 1, got {num_hard}")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if num_hard * (1 + r) > m:
        raise ValueError(
            f"pool size m={m} cannot supply {num_hard} hard + {num_hard * r} cached items"
        )
    p = positives.size
    if p == 0:
        empty = np.empty(0, dtype=np.int64)
        return (
            HardNegativeSet(user, epoch, empty),
            NegativeCache(user, epoch, empty, np.empty(0), num_hard * r),
        )

    cand = _draw_distinct_rows(eligible, p, m, rng)
    scores = np.einsum("pmd,d->pm", table.item_vectors[cand], table.user_vectors[user])
    flat_rows = np.repeat(np.arange(p), m)
    perm = np.lexsort((cand.ravel(), -scores.ravel(), flat_rows))
    cols = (perm - np.arange(p).repeat(m) * m).reshape(p, m)
    ranked_items = np.take_along_axis(cand, cols, axis=1)
    ranked_scores = np.take_along_axis(scores, cols, axis=1)

    hard = ranked_items[:, :num_hard].ravel()
    depth = num_hard * r
    cache_items = ranked_items[:, num_hard : num_hard + depth].ravel()
    cache_scores = ranked_scores[:, num_hard : num_hard + depth].ravel()
    return (
        HardNegativeSet(user, epoch, hard),
        NegativeCache(user, epoch, cache_items, cache_scores, depth),
    )
