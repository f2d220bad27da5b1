"""Synthetic data generators for experiments and tests.

Two generators live here: clustered unit embeddings (for selection demos and
diversity checks) and a full interaction log drawn from a latent-factor ground
truth (for desk-scale end-to-end runs where public datasets are unavailable).
"""

from __future__ import annotations

import numpy as np

from .data import Interaction, RawInteractionLog
from .seeding import SYNTH, stream


def cluster_embeddings(
    num_clusters: int,
    per_cluster: int,
    dim: int,
    seed: int = 0,
    spread: float = 0.15,
) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors grouped around well-separated directions.

    Returns (vectors, labels) with vectors of shape (num_clusters*per_cluster,
    dim), rows unit-norm. For dim == 2 the centers sit at evenly spaced
    angles; otherwise they are orthonormal directions (requires
    dim >= num_clusters).
    """
    if num_clusters < 1 or per_cluster < 1:
        raise ValueError("need at least one cluster and one point per cluster")
    rng = np.random.default_rng(seed)
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(num_clusters) / num_clusters
        centers = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        if dim < num_clusters:
            raise ValueError(f"dim={dim} too small for {num_clusters} orthogonal clusters")
        basis, _ = np.linalg.qr(rng.standard_normal((dim, num_clusters)))
        centers = basis.T
    labels = np.repeat(np.arange(num_clusters), per_cluster)
    points = centers[labels] + spread * rng.standard_normal((labels.size, dim))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return points, labels


def synthetic_log(
    num_users: int = 600,
    num_items: int = 1200,
    seed: int = 0,
    *,
    latent_dim: int = 16,
    num_clusters: int = 6,
    mean_degree: float = 80.0,
    degree_spread: float = 0.35,
    affinity: float = 6.0,
    popularity_spread: float = 0.7,
    cluster_noise: float = 0.4,
) -> RawInteractionLog:
    """Interaction log drawn from a latent-factor ground truth.

    Items live in ``num_clusters`` directions of a ``latent_dim``-dimensional
    space with a lognormal popularity bump; each user prefers a sparse mixture
    of clusters. A user's items are a weighted without-replacement draw
    (Gumbel top-k over ``affinity * <p_u, v_i> + log pop_i``), so the log has
    learnable preference structure, clustered items and a popularity head.
    Degrees are lognormal around ``mean_degree`` and clipped to [20, num_items/2],
    comfortably above core-filter and split minima.
    """
    if num_items < 64:
        raise ValueError("synthetic_log needs at least 64 items")
    rng = stream(seed, SYNTH)
    basis, _ = np.linalg.qr(rng.standard_normal((latent_dim, num_clusters)))
    centers = basis.T

    sizes = rng.dirichlet(np.full(num_clusters, 3.0))
    labels = rng.choice(num_clusters, size=num_items, p=sizes)
    items = centers[labels] + cluster_noise * rng.standard_normal((num_items, latent_dim))
    items /= np.linalg.norm(items, axis=1, keepdims=True)
    log_pop = popularity_spread * rng.standard_normal(num_items)

    records: list[Interaction] = []
    stamp = 0
    lo, hi = 20, max(20, num_items // 2)
    for u in range(num_users):
        mix = rng.dirichlet(np.full(num_clusters, 0.35))
        taste = mix @ centers + 0.25 * rng.standard_normal(latent_dim)
        taste /= np.linalg.norm(taste)
        degree = int(np.clip(
            rng.lognormal(np.log(mean_degree), degree_spread), lo, hi
        ))
        logits = affinity * (items @ taste) + log_pop
        keys = logits + rng.gumbel(size=num_items)
        chosen = np.argpartition(-keys, degree - 1)[:degree]
        chosen = chosen[np.argsort(-keys[chosen])]
        utok = f"u{u:05d}"
        for i in chosen:
            records.append(Interaction(utok, f"i{int(i):05d}", 1.0, stamp))
            stamp += 1
    return RawInteractionLog(records)


def write_log(path: str, log: RawInteractionLog, delimiter: str = "\t") -> None:
    """Write a raw log as delimited text readable by load_interactions."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# user\titem\tweight\ttimestamp\n")
        for rec in log:
            w = "1" if rec.weight is None else f"{rec.weight:.10g}"
            t = "0" if rec.timestamp is None else str(rec.timestamp)
            fh.write(f"{rec.user}{delimiter}{rec.item}{delimiter}{w}{delimiter}{t}\n")
