"""Diverse negative sampling for implicit-feedback matrix factorization.

The pipeline mines hard negatives with two-stage candidate ranking, keeps
per-user caches of runner-up candidates, selects mutually dissimilar cache
subsets with greedy MAP inference on a penalty-augmented kernel, and blends
hard and diverse negatives into synthetic training points for a pairwise
ranking loss.
"""

from .data import (
    DataSplit,
    EmptyResultError,
    ImplicitDataset,
    Interaction,
    MalformedLineError,
    RawInteractionLog,
    binarize_and_index,
    k_core_filter,
    load_interactions,
    load_snapshot,
    save_snapshot,
    split,
)
from .diversity import (
    AugmentedKernel,
    GroundSet,
    augmented_kernel,
    build_ground_set,
    diversity,
    exhaustive_map_oracle,
    greedy_map_kdpp,
    penalty_vector,
    select_diverse,
)
from .metrics import (
    MetricsReport,
    diversity_report,
    evaluate,
    ndcg_at_k,
    rank_items,
    recall_at_k,
)
from .model import (
    AdamState,
    EmbeddingTable,
    ItemSnapshot,
    TrainingTriplet,
    TripletBatch,
    bpr_gradients,
    bpr_loss,
    init_embeddings,
    init_optimizer,
    load_checkpoint,
    save_checkpoint,
    score,
    score_embedding,
    snapshot_items,
    train_step,
)
from .recommender import DivnsRecommender
from .samplers import (
    CandidateSet,
    HardNegativeSet,
    NegativeCache,
    build_pools,
    dns_select,
    pns_select,
    popularity_weights,
    rank_candidates,
    rns_select,
    sample_candidates,
)
from .synth import cluster_embeddings, synthetic_log, write_log
from .training import (
    DivnsConfig,
    EpochState,
    TrainContext,
    TrainResult,
    apply_sampling_ratio,
    mixup,
    run_epoch,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AugmentedKernel",
    "CandidateSet",
    "DataSplit",
    "DivnsConfig",
    "DivnsRecommender",
    "EmbeddingTable",
    "EmptyResultError",
    "EpochState",
    "GroundSet",
    "HardNegativeSet",
    "ImplicitDataset",
    "Interaction",
    "ItemSnapshot",
    "MalformedLineError",
    "MetricsReport",
    "NegativeCache",
    "RawInteractionLog",
    "TrainContext",
    "TrainResult",
    "TrainingTriplet",
    "TripletBatch",
    "apply_sampling_ratio",
    "augmented_kernel",
    "binarize_and_index",
    "bpr_gradients",
    "bpr_loss",
    "build_ground_set",
    "build_pools",
    "cluster_embeddings",
    "diversity",
    "diversity_report",
    "dns_select",
    "evaluate",
    "exhaustive_map_oracle",
    "greedy_map_kdpp",
    "init_embeddings",
    "init_optimizer",
    "k_core_filter",
    "load_checkpoint",
    "load_interactions",
    "load_snapshot",
    "mixup",
    "ndcg_at_k",
    "penalty_vector",
    "pns_select",
    "popularity_weights",
    "rank_candidates",
    "rank_items",
    "recall_at_k",
    "rns_select",
    "run_epoch",
    "sample_candidates",
    "save_checkpoint",
    "save_snapshot",
    "score",
    "score_embedding",
    "select_diverse",
    "snapshot_items",
    "split",
    "synthetic_log",
    "train",
    "train_step",
    "write_log",
]
