"""Diversity metric, penalized similarity kernels and greedy MAP selection.

The selection stage builds a ground set from the previous epoch's cache,
down-weights directions already covered by the hard negatives, and picks a
subset greedily by maximal determinant gain using incremental Cholesky-style
updates. A brute-force enumerator is included as a reference oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb, sqrt

import numpy as np

from .model import ItemSnapshot
from .samplers import HardNegativeSet, NegativeCache

logger = logging.getLogger(__name__)


def diversity(vectors: np.ndarray) -> float:
    """1 - mean pairwise inner product over ordered pairs.

    For unit vectors the value lies in [0, 2]: 0 for identical directions,
    1 for mutually orthogonal, approaching 2 for antipodal pairs.

    Raises
    ------
    ValueError
        If fewer than two vectors are given.
    """
    v = np.asarray(vectors, dtype=float)
    if v.ndim != 2 or v.shape[0] < 2:
        raise ValueError("diversity needs at least two vectors")
    g = v @ v.T
    n = v.shape[0]
    off_diagonal = float(g.sum() - np.trace(g))
    return 1.0 - off_diagonal / (n * (n - 1))


@dataclass
class GroundSet:
    """Deduplicated candidate items (ascending ids) with unit vectors."""

    item_ids: np.ndarray
    vectors: np.ndarray

    @property
    def size(self) -> int:
        return int(self.item_ids.size)


def build_ground_set(
    snapshot: ItemSnapshot, cache_items: np.ndarray, hard_items: np.ndarray
) -> GroundSet:
    """Unique cache items minus the current hard negatives."""
    ids = np.setdiff1d(np.asarray(cache_items, dtype=np.int64), np.asarray(hard_items, dtype=np.int64))
    return GroundSet(ids, snapshot.unit_item_vectors[ids])


def penalty_vector(ground, hard_vectors: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Redundancy penalty q_i = 1 - mean cosine between item i and the hard set.

    Vectors are assumed unit-norm, so the mean cosine is a dot product with
    the mean hard direction. Values are clamped to [0, 1] unless ``clamp`` is
    False (sensitivity runs).
    """
    vectors = ground.vectors if isinstance(ground, GroundSet) else np.asarray(ground, dtype=float)
    hard_vectors = np.asarray(hard_vectors, dtype=float)
    if hard_vectors.ndim != 2 or hard_vectors.shape[0] == 0:
        raise ValueError("need at least one hard-negative vector")
    q = 1.0 - vectors @ hard_vectors.mean(axis=0)
    if clamp:
        q = np.clip(q, 0.0, 1.0)
    return q


@dataclass
class AugmentedKernel:
    """Similarity kernel with the redundancy penalty folded in."""

    matrix: np.ndarray


def augmented_kernel(ground, q: np.ndarray) -> AugmentedKernel:
    """diag(q) @ (V V^T) @ diag(q), assembled as an exact Gram matrix.

    Building B = q * V and returning B B^T keeps the result symmetric
    positive semidefinite by construction.
    """
    vectors = ground.vectors if isinstance(ground, GroundSet) else np.asarray(ground, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.shape != (vectors.shape[0],):
        raise ValueError(f"penalty length {q.shape} does not match {vectors.shape[0]} vectors")
    b = q[:, None] * vectors
    return AugmentedKernel(b @ b.T)


def _kernel_matrix(kernel) -> np.ndarray:
    m = kernel.matrix if isinstance(kernel, AugmentedKernel) else np.asarray(kernel, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"kernel must be square, got shape {m.shape}")
    return m


def greedy_map_kdpp(
    kernel,
    k: int,
    gain_tol: float = 1e-12,
    jitter: float = 0.0,
) -> np.ndarray:
    """Greedy MAP subset selection with incremental Cholesky-style updates.

    Each step picks the candidate with the largest conditional variance (its
    marginal determinant gain); ties break toward the lowest index because
    argmax returns the first maximum. Stops early once the best remaining
    gain is at most ``gain_tol``, i.e. the kernel's numerical rank is
    exhausted, so the result may have fewer than k items. Items whose gain
    never exceeds the tolerance (e.g. zero-penalty rows) are never selected.

    ``jitter`` optionally adds to the diagonal before the updates, for
    callers holding kernels with floating-point PSD violations; the Gram
    construction in :func:`augmented_kernel` is PSD by assembly, so the
    default is off. With jitter on, gains are measured against
    ``gain_tol + jitter`` since every conditional variance absorbs the shift.
    """
    L = _kernel_matrix(kernel)
    n = L.shape[0]
    if n == 0:
        raise ValueError("cannot select from an empty ground set")
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if jitter:
        L = L + jitter * np.eye(n)
    budget = min(k, n)
    threshold = gain_tol + jitter
    d2 = np.diagonal(L).copy()
    cis = np.empty((budget, n))
    work = np.empty(n)
    chosen: list[int] = []
    for step in range(budget):
        j = int(d2.argmax())
        if d2[j] <= threshold:
            break
        dj = sqrt(d2[j])
        row = cis[step]
        if step == 0:
            np.divide(L[j], dj, out=row)
        else:
            np.matmul(cis[:step].T, cis[:step, j], out=row)
            np.subtract(L[j], row, out=row)
            row /= dj
        np.multiply(row, row, out=work)
        d2 -= work
        d2[j] = -np.inf
        chosen.append(j)
    return np.asarray(chosen, dtype=np.int64)


def exhaustive_map_oracle(kernel, k: int, jitter: float = 0.0) -> np.ndarray:
    """Brute-force MAP: the k-subset with the largest determinant.

    Reference implementation for testing; enumerates all k-subsets (capped at
    one million) and breaks exact ties lexicographically.
    """
    L = _kernel_matrix(kernel)
    n = L.shape[0]
    if not 0 < k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if comb(n, k) > 1_000_000:
        raise ValueError(f"refusing to enumerate C({n},{k}) subsets")
    if jitter:
        L = L + jitter * np.eye(n)
    best: tuple[int, ...] | None = None
    best_det = -np.inf
    for subset in combinations(range(n), k):
        det = float(np.linalg.det(L[np.ix_(subset, subset)]))
        if det > best_det:
            best_det = det
            best = subset
    assert best is not None
    return np.asarray(best, dtype=np.int64)


def _pad_from(
    chosen: np.ndarray,
    k: int,
    remaining: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Top up a short selection from a pool disjoint with it, no replacement."""
    missing = k - chosen.size
    if missing <= 0 or remaining.size == 0:
        return chosen
    take = min(missing, remaining.size)
    return np.concatenate([chosen, rng.choice(remaining, size=take, replace=False)])


def select_diverse(
    snapshot: ItemSnapshot,
    cache: NegativeCache | np.ndarray,
    hard: HardNegativeSet | np.ndarray,
    k: int,
    eligible: np.ndarray,
    rng: np.random.Generator,
    variant: str = "full",
    clamp: bool = True,
    ground: GroundSet | None = None,
) -> np.ndarray:
    """Pick k cache items whose directions complement the hard negatives.

    variant "full" uses the penalty-augmented kernel, "plain_kdpp" skips the
    penalty, "uniform_cache" replaces selection with a uniform draw from the
    ground set. If the greedy stage stops early the selection is padded with
    uniform draws from the unselected ground items, then from the user's
    remaining eligible items. An empty ground set falls back to uniform
    negatives with a logged warning.
    """
    hard_items = hard.items if isinstance(hard, HardNegativeSet) else np.asarray(hard, dtype=np.int64)
    cache_items = cache.items if isinstance(cache, NegativeCache) else np.asarray(cache, dtype=np.int64)
    eligible = np.asarray(eligible, dtype=np.int64)
    if ground is None:
        ground = build_ground_set(snapshot, cache_items, hard_items)

    if ground.size == 0:
        take = min(k, eligible.size)
        logger.warning(
            "empty diverse ground set (cache fully overlaps hard negatives); "
            "falling back to %d uniform negatives", take,
        )
        if take == 0:
            return np.empty(0, dtype=np.int64)
        return np.asarray(rng.choice(eligible, size=take, replace=False), dtype=np.int64)

    if variant == "uniform_cache":
        take = min(k, ground.size)
        picks = rng.choice(ground.size, size=take, replace=False)
    elif variant in ("full", "plain_kdpp"):
        if variant == "full":
            q = penalty_vector(ground, snapshot.unit_item_vectors[hard_items], clamp=clamp)
        else:
            q = np.ones(ground.size)
        kernel = augmented_kernel(ground, q)
        picks = greedy_map_kdpp(kernel, k)
    else:
        raise ValueError(f"unknown selection variant {variant!r}")

    chosen = ground.item_ids[picks]
    if chosen.size < k:
        mask = np.ones(ground.size, dtype=bool)
        mask[picks] = False
        chosen = _pad_from(chosen, k, ground.item_ids[mask], rng)
        if chosen.size < k:
            chosen = _pad_from(chosen, k, np.setdiff1d(eligible, chosen), rng)
    return chosen
