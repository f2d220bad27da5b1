"""Matrix-factorization model: embeddings, pairwise ranking loss, optimizer.

Scoring and the loss run on raw trainable vectors. Kernel/penalty/diversity
math elsewhere uses the unit-normalized ItemSnapshot taken at the start of
each epoch. Negatives are recorded as (source item, coefficient) pairs; the
loss scores them against the live table, which by bilinearity equals scoring
the mixed vector and is what routes gradients through a convex combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass
class EmbeddingTable:
    """Trainable user and item vectors, shape (n, d) each, float64."""

    user_vectors: np.ndarray
    item_vectors: np.ndarray

    @property
    def d(self) -> int:
        return self.user_vectors.shape[1]

    @property
    def num_users(self) -> int:
        return self.user_vectors.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_vectors.shape[0]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.user_vectors.copy(), self.item_vectors.copy())


def init_embeddings(num_users: int, num_items: int, d: int = 64, seed: int = 0) -> EmbeddingTable:
    """Fresh table with entries drawn N(0, 0.01^2), deterministic in seed."""
    if num_users < 1 or num_items < 1 or d < 1:
        raise ValueError("num_users, num_items and d must be positive")
    rng = np.random.default_rng(seed)
    return EmbeddingTable(
        user_vectors=rng.normal(0.0, 0.01, size=(num_users, d)),
        item_vectors=rng.normal(0.0, 0.01, size=(num_items, d)),
    )


@dataclass
class ItemSnapshot:
    """Unit-normalized copy of the item vectors frozen at an epoch boundary."""

    unit_item_vectors: np.ndarray
    epoch_tag: int


def snapshot_items(table: EmbeddingTable, epoch: int) -> ItemSnapshot:
    """Unit-normalize item rows; rows with negligible norm get a basis vector.

    The basis vector for a degenerate row i is e_{i mod d}, so the result is
    deterministic and no row is ever zero.
    """
    vecs = table.item_vectors.copy()
    norms = np.linalg.norm(vecs, axis=1)
    degenerate = norms < 1e-12
    if degenerate.any():
        idx = np.nonzero(degenerate)[0]
        vecs[idx] = 0.0
        vecs[idx, idx % table.d] = 1.0
        norms = np.where(degenerate, 1.0, norms)
    return ItemSnapshot(vecs / norms[:, None], epoch)


def score(table: EmbeddingTable, user: int, item: int) -> float:
    """Dot-product preference score for one (user, item) pair."""
    if not 0 <= user < table.num_users:
        raise IndexError(f"user index {user} out of range")
    if not 0 <= item < table.num_items:
        raise IndexError(f"item index {item} out of range")
    return float(table.user_vectors[user] @ table.item_vectors[item])


def score_embedding(table: EmbeddingTable, user: int, vector: np.ndarray) -> float:
    """Score a raw embedding (e.g. a synthesized negative) for a user."""
    if not 0 <= user < table.num_users:
        raise IndexError(f"user index {user} out of range")
    v = np.asarray(vector, dtype=float)
    if v.shape != (table.d,):
        raise ValueError(f"expected vector of shape ({table.d},), got {v.shape}")
    return float(table.user_vectors[user] @ v)


@dataclass
class TrainingTriplet:
    """One (user, positive, negative) example.

    negative_embedding is the negative's vector at construction time; it may
    be a real item's vector or a convex mixture. negative_sources lists one or
    two (item index, coefficient) pairs used for gradient routing; the
    coefficients sum to one.
    """

    user: int
    positive: int
    negative_embedding: np.ndarray
    negative_sources: tuple[tuple[int, float], ...]


@dataclass
class TripletBatch:
    """Columnar triplet storage: the engine's working representation.

    src[:, 1] == -1 marks single-source negatives (coef[:, 1] is then 0).
    """

    user: np.ndarray
    positive: np.ndarray
    src: np.ndarray
    coef: np.ndarray

    @property
    def n(self) -> int:
        return self.user.size

    @classmethod
    def single_source(cls, users: np.ndarray, positives: np.ndarray, items: np.ndarray) -> "TripletBatch":
        n = users.size
        src = np.stack([items.astype(np.int64), np.full(n, -1, dtype=np.int64)], axis=1)
        coef = np.stack([np.ones(n), np.zeros(n)], axis=1)
        return cls(users.astype(np.int64), positives.astype(np.int64), src, coef)

    @classmethod
    def mixed(
        cls,
        users: np.ndarray,
        positives: np.ndarray,
        hard: np.ndarray,
        diverse: np.ndarray,
        lam: float,
    ) -> "TripletBatch":
        n = users.size
        src = np.stack([hard.astype(np.int64), diverse.astype(np.int64)], axis=1)
        coef = np.stack([np.full(n, lam), np.full(n, 1.0 - lam)], axis=1)
        return cls(users.astype(np.int64), positives.astype(np.int64), src, coef)

    @classmethod
    def concatenate(cls, batches: list["TripletBatch"]) -> "TripletBatch":
        if not batches:
            return cls(
                np.empty(0, np.int64), np.empty(0, np.int64),
                np.empty((0, 2), np.int64), np.empty((0, 2), float),
            )
        return cls(
            np.concatenate([b.user for b in batches]),
            np.concatenate([b.positive for b in batches]),
            np.concatenate([b.src for b in batches]),
            np.concatenate([b.coef for b in batches]),
        )

    @classmethod
    def from_triplets(cls, triplets: list[TrainingTriplet]) -> "TripletBatch":
        n = len(triplets)
        user = np.array([t.user for t in triplets], dtype=np.int64)
        pos = np.array([t.positive for t in triplets], dtype=np.int64)
        src = np.full((n, 2), -1, dtype=np.int64)
        coef = np.zeros((n, 2))
        for row, t in enumerate(triplets):
            for c, (item, alpha) in enumerate(t.negative_sources):
                src[row, c] = item
                coef[row, c] = alpha
        return cls(user, pos, src, coef)

    def take(self, idx: np.ndarray) -> "TripletBatch":
        return TripletBatch(self.user[idx], self.positive[idx], self.src[idx], self.coef[idx])

    def negative_embeddings(self, table: EmbeddingTable) -> np.ndarray:
        """Negative vectors reconstructed from sources against ``table``."""
        out = self.coef[:, :1] * table.item_vectors[self.src[:, 0]]
        two = self.src[:, 1] >= 0
        if two.any():
            out[two] += self.coef[two, 1:] * table.item_vectors[self.src[two, 1]]
        return out

    def to_triplets(self, table: EmbeddingTable) -> list[TrainingTriplet]:
        embeds = self.negative_embeddings(table)
        out = []
        for row in range(self.n):
            if self.src[row, 1] >= 0:
                sources = (
                    (int(self.src[row, 0]), float(self.coef[row, 0])),
                    (int(self.src[row, 1]), float(self.coef[row, 1])),
                )
            else:
                sources = ((int(self.src[row, 0]), float(self.coef[row, 0])),)
            out.append(TrainingTriplet(int(self.user[row]), int(self.positive[row]), embeds[row], sources))
        return out


def _as_batch(triplets) -> TripletBatch:
    if isinstance(triplets, TripletBatch):
        return triplets
    return TripletBatch.from_triplets(list(triplets))


def _score_gap(table: EmbeddingTable, batch: TripletBatch) -> np.ndarray:
    """Per-triplet positive-minus-negative score, sources scored live."""
    pu = table.user_vectors[batch.user]
    pos = np.einsum("nd,nd->n", pu, table.item_vectors[batch.positive])
    neg = batch.coef[:, 0] * np.einsum("nd,nd->n", pu, table.item_vectors[batch.src[:, 0]])
    two = batch.src[:, 1] >= 0
    if two.any():
        neg[two] += batch.coef[two, 1] * np.einsum(
            "nd,nd->n", pu[two], table.item_vectors[batch.src[two, 1]]
        )
    return pos - neg


def _l2_term(table: EmbeddingTable, batch: TripletBatch) -> float:
    pu = table.user_vectors[batch.user]
    vi = table.item_vectors[batch.positive]
    total = float(np.sum(pu * pu) + np.sum(vi * vi))
    v0 = table.item_vectors[batch.src[:, 0]]
    total += float(np.sum(batch.coef[:, 0] * np.sum(v0 * v0, axis=1)))
    two = batch.src[:, 1] >= 0
    if two.any():
        v1 = table.item_vectors[batch.src[two, 1]]
        total += float(np.sum(batch.coef[two, 1] * np.sum(v1 * v1, axis=1)))
    return total


def bpr_loss(table: EmbeddingTable, triplets, l2: float = 0.0) -> float:
    """Sum of -ln sigmoid(score(u,i) - score(u, negative)) over triplets.

    Computed with the stable softplus form; an optional L2 term adds
    l2 * (|p_u|^2 + |v_i|^2 + sum_c alpha_c |v_{s_c}|^2) per triplet, the same
    quantity train_step differentiates.
    """
    batch = _as_batch(triplets)
    if batch.n == 0:
        return 0.0
    x = _score_gap(table, batch)
    loss = float(np.logaddexp(0.0, -x).sum())
    if l2:
        loss += l2 * _l2_term(table, batch)
    return loss


def bpr_gradients(
    table: EmbeddingTable, triplets, l2: float = 0.0
) -> tuple[np.ndarray, np.ndarray, float]:
    """Dense analytic gradients of :func:`bpr_loss` wrt both matrices.

    Returns (grad_users, grad_items, bpr_part) where bpr_part is the loss sum
    without the L2 term (handy for logging). Mixture negatives route gradient
    to each source item scaled by its coefficient.
    """
    batch = _as_batch(triplets)
    gu = np.zeros_like(table.user_vectors)
    gi = np.zeros_like(table.item_vectors)
    if batch.n == 0:
        return gu, gi, 0.0
    x = _score_gap(table, batch)
    if not np.all(np.isfinite(x)):
        bad = int(np.nonzero(~np.isfinite(x))[0][0])
        raise FloatingPointError(
            f"non-finite score gap for triplet {bad} "
            f"(user {int(batch.user[bad])}, positive {int(batch.positive[bad])})"
        )
    bpr_part = float(np.logaddexp(0.0, -x).sum())
    g = expit(x) - 1.0  # dL/dx, in (-1, 0)

    pu = table.user_vectors[batch.user]
    vi = table.item_vectors[batch.positive]
    vmix = batch.negative_embeddings(table)

    np.add.at(gu, batch.user, g[:, None] * (vi - vmix))
    np.add.at(gi, batch.positive, g[:, None] * pu)
    np.add.at(gi, batch.src[:, 0], (-g * batch.coef[:, 0])[:, None] * pu)
    two = batch.src[:, 1] >= 0
    if two.any():
        np.add.at(gi, batch.src[two, 1], (-g[two] * batch.coef[two, 1])[:, None] * pu[two])

    if l2:
        np.add.at(gu, batch.user, 2.0 * l2 * pu)
        np.add.at(gi, batch.positive, 2.0 * l2 * vi)
        np.add.at(
            gi, batch.src[:, 0],
            (2.0 * l2 * batch.coef[:, 0])[:, None] * table.item_vectors[batch.src[:, 0]],
        )
        if two.any():
            np.add.at(
                gi, batch.src[two, 1],
                (2.0 * l2 * batch.coef[two, 1])[:, None] * table.item_vectors[batch.src[two, 1]],
            )
    return gu, gi, bpr_part


@dataclass
class AdamState:
    """Adaptive-moment optimizer state over both embedding matrices."""

    learning_rate: float
    l2: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_user: np.ndarray = field(default=None)  # type: ignore[assignment]
    v_user: np.ndarray = field(default=None)  # type: ignore[assignment]
    m_item: np.ndarray = field(default=None)  # type: ignore[assignment]
    v_item: np.ndarray = field(default=None)  # type: ignore[assignment]


def init_optimizer(table: EmbeddingTable, learning_rate: float, l2: float = 0.0) -> AdamState:
    if learning_rate < 0 or l2 < 0:
        raise ValueError("learning_rate and l2 must be non-negative")
    return AdamState(
        learning_rate=learning_rate,
        l2=l2,
        m_user=np.zeros_like(table.user_vectors),
        v_user=np.zeros_like(table.user_vectors),
        m_item=np.zeros_like(table.item_vectors),
        v_item=np.zeros_like(table.item_vectors),
    )


def train_step(table: EmbeddingTable, state: AdamState, triplets) -> float:
    """One adaptive-moment step on the mini-batch loss; mutates table/state.

    Returns the batch's BPR loss sum (before the update), for logging. A zero
    learning rate leaves the table bit-identical. Non-finite gradients abort
    with a FloatingPointError naming the offending triplet.
    """
    batch = _as_batch(triplets)
    gu, gi, bpr_part = bpr_gradients(table, batch, state.l2)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for param, g, m, v in (
        (table.user_vectors, gu, state.m_user, state.v_user),
        (table.item_vectors, gi, state.m_item, state.v_item),
    ):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return bpr_part


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, table: EmbeddingTable, state: AdamState | None = None) -> None:
    """Versioned binary dump of both matrices plus optimizer state."""
    payload: dict[str, np.ndarray | int | float] = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "user_vectors": table.user_vectors,
        "item_vectors": table.item_vectors,
    }
    if state is not None:
        payload.update(
            opt_step=np.int64(state.step),
            opt_learning_rate=float(state.learning_rate),
            opt_l2=float(state.l2),
            opt_beta1=float(state.beta1),
            opt_beta2=float(state.beta2),
            opt_eps=float(state.eps),
            opt_m_user=state.m_user,
            opt_v_user=state.v_user,
            opt_m_item=state.m_item,
            opt_v_item=state.v_item,
        )
    np.savez(path, **payload)


def load_checkpoint(path: str) -> tuple[EmbeddingTable, AdamState | None]:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    with np.load(path) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        table = EmbeddingTable(z["user_vectors"].copy(), z["item_vectors"].copy())
        if "opt_step" not in z:
            return table, None
        state = AdamState(
            learning_rate=float(z["opt_learning_rate"]),
            l2=float(z["opt_l2"]),
            beta1=float(z["opt_beta1"]),
            beta2=float(z["opt_beta2"]),
            eps=float(z["opt_eps"]),
            step=int(z["opt_step"]),
            m_user=z["opt_m_user"].copy(),
            v_user=z["opt_v_user"].copy(),
            m_item=z["opt_m_item"].copy(),
            v_item=z["opt_v_item"].copy(),
        )
    return table, state
