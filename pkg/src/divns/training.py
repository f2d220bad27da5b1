"""Training engine: two-step loop of diverse negative sampling and BPR updates.

Each epoch has a read phase (candidate pools, diverse subset selection,
synthetic-negative construction against an immutable item snapshot) and a
write phase (mini-batch adaptive-moment updates). Per-user RNG streams keyed
by (seed, stage, epoch, user) make the read phase independent of iteration
order.
"""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DataSplit, ImplicitDataset
from .diversity import build_ground_set, select_diverse
from .metrics import MetricsReport, evaluate, set_diversity
from .model import (
    AdamState,
    EmbeddingTable,
    TripletBatch,
    init_embeddings,
    init_optimizer,
    snapshot_items,
    train_step,
)
from .samplers import HardNegativeSet, NegativeCache, build_pools, popularity_weights
from .seeding import DIAGNOSTICS, SAMPLING, SHUFFLE, stream

SAMPLERS = ("rns", "pns", "dns", "divns")
VARIANTS = ("full", "no_synthesis", "uniform_cache", "plain_kdpp")


@dataclass(frozen=True)
class DivnsConfig:
    """Hyperparameters for one training run.

    m is the per-positive candidate pool, r the cache ratio (runner-up rows
    kept per hard negative), lam the mixing coefficient, omega the negative
    sampling ratio (pool scales to omega*m, omega hard negatives and omega
    synthetic triplets per positive). variant selects the ablation path;
    sampler picks the baseline family (rns/pns/dns) or the full pipeline.
    """

    sampler: str = "divns"
    variant: str = "full"
    m: int = 10
    r: int = 4
    lam: float = 0.5
    omega: int = 1
    epochs: int = 50
    seed: int = 0
    d: int = 64
    learning_rate: float = 5e-4
    l2: float = 1e-4
    batch_size: int = 2048
    patience: int = 10
    pns_beta: float = 0.75
    clamp_penalty: bool = True
    strict_eval: bool = False
    eval_ks: tuple = (10, 20)
    dump_diagnostics: bool = False

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.omega < 1:
            raise ValueError(f"omega must be >= 1, got {self.omega}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.sampler == "divns" and not 1 <= self.r < self.m:
            raise ValueError(f"need 1 <= r < m, got r={self.r}, m={self.m}")
        if self.epochs < 0 or self.d < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs/d/batch_size/patience out of range")
        if self.learning_rate < 0 or self.l2 < 0:
            raise ValueError("learning_rate and l2 must be non-negative")
        ks = tuple(int(k) for k in self.eval_ks)
        if not ks or any(k < 1 for k in ks):
            raise ValueError(f"eval_ks must be positive, got {self.eval_ks!r}")
        object.__setattr__(self, "eval_ks", ks)


def apply_sampling_ratio(config: DivnsConfig, omega: int) -> DivnsConfig:
    """Scale the negative sampling ratio; omega=1 returns an equal config."""
    if omega < 1:
        raise ValueError(f"omega must be >= 1, got {omega}")
    return dataclasses.replace(config, omega=omega)


def mixup(v_hard: np.ndarray, v_diverse: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination lam * v_hard + (1 - lam) * v_diverse."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    v_hard = np.asarray(v_hard, dtype=float)
    v_diverse = np.asarray(v_diverse, dtype=float)
    if v_hard.shape != v_diverse.shape:
        raise ValueError(f"shape mismatch {v_hard.shape} vs {v_diverse.shape}")
    return lam * v_hard + (1.0 - lam) * v_diverse


@dataclass
class EpochState:
    """Per-user pools produced by one epoch, consumed by the next.

    Caches tagged with epoch t feed selection at epoch t+1; consuming a stale
    state is an error, never silently accepted.
    """

    epoch: int
    hard: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)
    diverse: dict = field(default_factory=dict)

    def cache_for(self, user: int, epoch: int) -> NegativeCache:
        if self.epoch != epoch - 1:
            raise ValueError(
                f"state from epoch {self.epoch} cannot seed epoch {epoch}"
            )
        cached = self.cache.get(user)
        if cached is None or cached.epoch != epoch - 1:
            tag = None if cached is None else cached.epoch
            raise ValueError(
                f"user {user}: cache tagged {tag!r}, epoch {epoch} needs {epoch - 1}"
            )
        return cached


@dataclass
class TrainContext:
    """Immutable per-run lookups: train positives, eligible negatives, weights."""

    users: list
    train: list
    eligible: list
    pns_cums: list | None = None

    @classmethod
    def build(cls, dataset: ImplicitDataset, data_split: DataSplit, config: DivnsConfig) -> "TrainContext":
        all_items = np.arange(dataset.num_items, dtype=np.int64)
        train = data_split.train
        eligible = [np.setdiff1d(all_items, train[u]) for u in range(dataset.num_users)]
        users = [u for u in range(dataset.num_users) if train[u].size > 0]
        pns_cums = None
        if config.sampler == "pns":
            pns_cums = [
                popularity_weights(dataset.popularity, eligible[u], config.pns_beta)
                for u in range(dataset.num_users)
            ]
        return cls(users=users, train=train, eligible=eligible, pns_cums=pns_cums)


def _empty_batch() -> TripletBatch:
    empty = np.empty(0, dtype=np.int64)
    return TripletBatch.single_source(empty, empty, empty)


def run_epoch(
    state: EpochState,
    table: EmbeddingTable,
    ctx: TrainContext,
    config: DivnsConfig,
    t: int,
) -> tuple[TripletBatch, EpochState, dict, list]:
    """Read phase for epoch t: triplets to train on plus pools for epoch t+1.

    Epoch 0 (and the no_synthesis variant, and all baseline samplers) trains
    directly on the stage-anchored negatives; later epochs select a diverse
    subset from the previous epoch's cache, pair every hard negative with a
    uniformly drawn member (with replacement), and emit mixed-source triplets.
    Returns (batch, new_state, phase timings, diagnostics rows).
    """
    if t < 0:
        raise ValueError(f"epoch index must be >= 0, got {t}")
    omega = config.omega
    synthesize = config.sampler == "divns" and config.variant != "no_synthesis" and t >= 1
    timings = {"sampling": 0.0, "dpp": 0.0}
    snap = None
    if synthesize:
        tic = time.perf_counter()
        snap = snapshot_items(table, t)
        timings["dpp"] += time.perf_counter() - tic

    pieces = []
    diagnostics = []
    new_state = EpochState(epoch=t)
    for u in ctx.users:
        rng = stream(config.seed, SAMPLING, t, u)
        positives = ctx.train[u]
        eligible = ctx.eligible[u]
        n_out = positives.size * omega
        users_col = np.full(n_out, u, dtype=np.int64)
        pos_col = np.repeat(positives, omega)

        if config.sampler == "rns":
            tic = time.perf_counter()
            negatives = eligible[rng.integers(0, eligible.size, size=n_out)]
            timings["sampling"] += time.perf_counter() - tic
            pieces.append(TripletBatch.single_source(users_col, pos_col, negatives))
            continue
        if config.sampler == "pns":
            tic = time.perf_counter()
            cums = ctx.pns_cums[u]
            draws = rng.random(n_out) * cums[-1]
            negatives = eligible[np.searchsorted(cums, draws, side="right")]
            timings["sampling"] += time.perf_counter() - tic
            pieces.append(TripletBatch.single_source(users_col, pos_col, negatives))
            continue

        tic = time.perf_counter()
        r = config.r if config.sampler == "divns" else 0
        hard_set, cache = build_pools(
            table, u, positives, eligible, config.m * omega, r, rng,
            num_hard=omega, epoch=t,
        )
        timings["sampling"] += time.perf_counter() - tic
        if config.sampler == "divns":
            new_state.hard[u] = hard_set
            new_state.cache[u] = cache
        if not synthesize:
            pieces.append(TripletBatch.single_source(users_col, pos_col, hard_set.items))
            continue

        tic = time.perf_counter()
        prev_cache = state.cache_for(u, t)
        ground = build_ground_set(snap, prev_cache.items, hard_set.items)
        selected = select_diverse(
            snap, prev_cache, hard_set, hard_set.items.size, eligible, rng,
            variant=config.variant, clamp=config.clamp_penalty, ground=ground,
        )
        paired = selected[rng.integers(0, selected.size, size=hard_set.items.size)]
        new_state.diverse[u] = selected
        timings["dpp"] += time.perf_counter() - tic
        pieces.append(
            TripletBatch.mixed(users_col, pos_col, hard_set.items, paired, config.lam)
        )

        if config.dump_diagnostics:
            drng = stream(config.seed, DIAGNOSTICS, t, u)
            pool = ground.item_ids if ground.size else eligible
            baseline = np.asarray(
                drng.choice(pool, size=min(selected.size, pool.size), replace=False),
                dtype=np.int64,
            )
            diagnostics.append({
                "epoch": t,
                "user": u,
                "selected": tuple(int(i) for i in selected),
                "baseline": tuple(int(i) for i in baseline),
                "selected_diversity": set_diversity(snap.unit_item_vectors, selected),
                "baseline_diversity": set_diversity(snap.unit_item_vectors, baseline),
            })

    batch = TripletBatch.concatenate(pieces) if pieces else _empty_batch()
    return batch, new_state, timings, diagnostics


@dataclass
class TrainResult:
    """Outcome of a full training run, best checkpoint first."""

    table: EmbeddingTable
    final_table: EmbeddingTable
    best_epoch: int
    best_metric: float
    reports: list
    train_losses: list
    opt_state: AdamState
    diagnostics: list
    stopped_early: bool


def train(dataset: ImplicitDataset, data_split: DataSplit, config: DivnsConfig) -> TrainResult:
    """Alternate read and write phases for up to config.epochs epochs.

    Evaluates on the validation split every epoch, tracks the best NDCG at
    the stopping cutoff (20 when present in eval_ks, else the last k), and
    stops once that metric has not improved for ``patience`` epochs. The
    returned table is the best validation checkpoint.
    """
    table = init_embeddings(dataset.num_users, dataset.num_items, config.d, config.seed)
    opt = init_optimizer(table, config.learning_rate, config.l2)
    if config.epochs == 0:
        return TrainResult(
            table=table.copy(), final_table=table, best_epoch=-1,
            best_metric=float("-inf"), reports=[], train_losses=[],
            opt_state=opt, diagnostics=[], stopped_early=False,
        )

    ctx = TrainContext.build(dataset, data_split, config)
    state = EpochState(epoch=-1)
    k_stop = 20 if 20 in config.eval_ks else config.eval_ks[-1]
    best_metric = float("-inf")
    best_epoch = -1
    best_table = table.copy()
    reports: list[MetricsReport] = []
    train_losses: list[float] = []
    diagnostics: list[dict] = []
    stopped_early = False

    for t in range(config.epochs):
        batch, state, timings, rows = run_epoch(state, table, ctx, config, t)
        diagnostics.extend(rows)

        tic = time.perf_counter()
        perm = stream(config.seed, SHUFFLE, t).permutation(batch.n)
        loss_sum = 0.0
        for start in range(0, batch.n, config.batch_size):
            sub = batch.take(perm[start : start + config.batch_size])
            loss_sum += train_step(table, opt, sub)
        timings["optimization"] = time.perf_counter() - tic

        report = evaluate(table, data_split, "validation", ks=config.eval_ks, epoch=t)
        report.timings.update(timings)
        reports.append(report)
        train_losses.append(loss_sum / batch.n if batch.n else 0.0)

        current = report.ndcg(k_stop)
        if current > best_metric:
            best_metric = current
            best_epoch = t
            best_table = table.copy()
        if t - best_epoch >= config.patience:
            stopped_early = True
            break

    return TrainResult(
        table=best_table, final_table=table, best_epoch=best_epoch,
        best_metric=best_metric, reports=reports, train_losses=train_losses,
        opt_state=opt, diagnostics=diagnostics, stopped_early=stopped_early,
    )
