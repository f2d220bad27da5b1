"""Full-ranking evaluation (NDCG@k, Recall@k) and diversity diagnostics."""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataSplit
from .diversity import diversity
from .model import EmbeddingTable

SPLIT_TAGS = ("train", "validation", "test")


@dataclass
class MetricsReport:
    """Averaged ranking metrics for one (epoch, split) evaluation pass.

    values maps (k, metric_name) to the mean over evaluated users; timings
    holds wall-clock seconds per epoch phase when the caller records them.
    """

    epoch: int
    split: str
    values: dict = field(default_factory=dict)
    num_users: int = 0
    timings: dict = field(default_factory=dict)

    def metric(self, k: int, name: str) -> float:
        return self.values[(int(k), name)]

    def ndcg(self, k: int) -> float:
        return self.metric(k, "ndcg")

    def recall(self, k: int) -> float:
        return self.metric(k, "recall")

    def rows(self):
        """(epoch, split, k, metric, value) rows in deterministic order."""
        for (k, name) in sorted(self.values):
            yield self.epoch, self.split, k, name, self.values[(k, name)]


def rank_items(table: EmbeddingTable, user: int, exclude=()) -> np.ndarray:
    """All items ranked by descending score for one user, exclusions removed.

    Ties break toward the lowest item index. No sampling: the ranking covers
    every item outside ``exclude``.
    """
    user = int(user)
    if not 0 <= user < table.num_users:
        raise IndexError(f"user {user} out of range")
    scores = table.item_vectors @ table.user_vectors[user]
    excl = np.asarray(exclude, dtype=np.int64)
    if excl.size:
        scores[excl] = -np.inf
    order = np.argsort(-scores, kind="stable")
    if excl.size:
        order = order[: scores.size - excl.size]
    return order


def recall_at_k(ranking, relevant, k: int) -> float:
    """|top-k hits| / |relevant|."""
    relevant = {int(i) for i in relevant}
    if not relevant:
        raise ValueError("recall is undefined for an empty relevant set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for item in np.asarray(ranking)[:k] if int(item) in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranking, relevant, k: int) -> float:
    """Binary-relevance NDCG: gain 1, discount 1/log2(rank+1), 1-based ranks.

    The ideal DCG places min(k, |relevant|) hits at the top.
    """
    relevant = {int(i) for i in relevant}
    if not relevant:
        raise ValueError("ndcg is undefined for an empty relevant set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranking = np.asarray(ranking)[:k]
    dcg = math.fsum(
        1.0 / math.log2(pos + 2.0)
        for pos, item in enumerate(ranking)
        if int(item) in relevant
    )
    idcg = math.fsum(1.0 / math.log2(pos + 2.0) for pos in range(min(k, len(relevant))))
    return dcg / idcg


def evaluate(
    table: EmbeddingTable,
    data_split: DataSplit,
    which: str = "validation",
    ks=(10, 20),
    exclude_validation: bool = False,
    epoch: int = -1,
    chunk: int = 256,
) -> MetricsReport:
    """Mean NDCG@k / Recall@k over users with >= 1 relevant item in ``which``.

    Every item except the user's train positives is ranked (optionally also
    excluding validation items when scoring the test split). Users whose
    relevant set is empty are skipped, not counted as zero.
    """
    if which not in SPLIT_TAGS:
        raise ValueError(f"unknown split {which!r}")
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"ks must be positive, got {ks!r}")
    relevant_lists = data_split.part(which)
    num_users = len(relevant_lists)
    num_items = table.num_items
    strict = exclude_validation and which == "test"

    per_user: dict = {(k, name): [] for k in ks for name in ("ndcg", "recall")}
    positions = np.empty(num_items, dtype=np.int64)
    for start in range(0, num_users, chunk):
        users = range(start, min(start + chunk, num_users))
        rows = [u for u in users if relevant_lists[u].size > 0]
        if not rows:
            continue
        scores = table.user_vectors[rows] @ table.item_vectors.T
        for row, u in enumerate(rows):
            excl = data_split.train[u]
            if strict:
                excl = np.concatenate([excl, data_split.validation[u]])
            relevant = relevant_lists[u]
            assert np.intersect1d(relevant, excl).size == 0, (
                f"user {u}: relevant items overlap the ranking exclusions"
            )
            s = scores[row]
            if excl.size:
                s[excl] = -np.inf
            order = np.argsort(-s, kind="stable")
            positions[order] = np.arange(num_items)
            hit_pos = np.sort(positions[relevant])
            for k in ks:
                hits = hit_pos[hit_pos < k]
                dcg = math.fsum(1.0 / math.log2(p + 2.0) for p in hits)
                idcg = math.fsum(
                    1.0 / math.log2(p + 2.0) for p in range(min(k, relevant.size))
                )
                per_user[(k, "ndcg")].append(dcg / idcg)
                per_user[(k, "recall")].append(hits.size / relevant.size)

    counted = len(per_user[(ks[0], "ndcg")])
    values = {
        key: (math.fsum(vals) / counted if counted else 0.0)
        for key, vals in per_user.items()
    }
    return MetricsReport(epoch=epoch, split=which, values=values, num_users=counted)


def diversity_report(epoch_dumps, cluster_labels=None) -> list:
    """Per-epoch aggregation of selection-diversity diagnostics.

    ``epoch_dumps`` rows are dicts with keys epoch, user, selected, baseline
    and optional precomputed selected_diversity / baseline_diversity (None
    when the set has fewer than two members). Aggregate keys are absent when
    undefined for the whole epoch, never reported as zero. With
    ``cluster_labels`` (item id -> cluster) the modal-cluster fraction of
    each method is added.
    """
    by_epoch: dict = {}
    for row in epoch_dumps:
        by_epoch.setdefault(int(row["epoch"]), []).append(row)

    def modal_fraction(items) -> float:
        labels = [int(cluster_labels[int(i)]) for i in items]
        return max(labels.count(c) for c in set(labels)) / len(labels)

    summaries = []
    for epoch in sorted(by_epoch):
        rows = by_epoch[epoch]
        summary = {"epoch": epoch, "users": len(rows)}
        for side, div_key in (("selected", "selected_diversity"), ("baseline", "baseline_diversity")):
            vals = [row[div_key] for row in rows if row.get(div_key) is not None]
            if vals:
                summary[div_key] = math.fsum(vals) / len(vals)
            fracs = [
                modal_fraction(row[side])
                for row in rows
                if cluster_labels is not None and len(row.get(side, ())) > 0
            ]
            if fracs:
                summary[f"{side}_modal_fraction"] = math.fsum(fracs) / len(fracs)
        if "selected_diversity" in summary and "baseline_diversity" in summary:
            summary["diversity_gap"] = (
                summary["selected_diversity"] - summary["baseline_diversity"]
            )
        summaries.append(summary)
    return summaries


def set_diversity(snapshot_vectors: np.ndarray, items) -> float | None:
    """Diversity of an item set's unit vectors; None below two members."""
    items = np.asarray(items, dtype=np.int64)
    if items.size < 2:
        return None
    return diversity(snapshot_vectors[items])
