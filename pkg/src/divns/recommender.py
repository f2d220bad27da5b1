"""scikit-learn style facade over the training engine."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import binarize_and_index, k_core_filter, split
from .metrics import evaluate, rank_items
from .training import DivnsConfig, train
from .validation import as_interaction_log


class DivnsRecommender(BaseEstimator):
    """Implicit-feedback recommender trained with diverse negative sampling.

    fit() takes raw (user, item) interaction records, prepares them
    (optional k-core filtering, binarization, per-user train/validation/test
    split), and trains a matrix-factorization model with the configured
    negative sampler. Parameter names follow the estimator convention and map
    onto the engine config: candidate_pool=m, cache_depth=r, mix=lambda,
    sampling_ratio=omega, n_factors=d, random_state=seed.
    """

    def __init__(
        self,
        sampler="divns",
        variant="full",
        n_factors=64,
        candidate_pool=10,
        cache_depth=4,
        mix=0.5,
        sampling_ratio=1,
        learning_rate=5e-4,
        l2=1e-4,
        batch_size=2048,
        epochs=50,
        patience=10,
        k_core=1,
        split_ratios=(0.7, 0.1, 0.2),
        eval_ks=(10, 20),
        pns_beta=0.75,
        clamp_penalty=True,
        strict_eval=False,
        dump_diagnostics=False,
        random_state=0,
    ):
        self.sampler = sampler
        self.variant = variant
        self.n_factors = n_factors
        self.candidate_pool = candidate_pool
        self.cache_depth = cache_depth
        self.mix = mix
        self.sampling_ratio = sampling_ratio
        self.learning_rate = learning_rate
        self.l2 = l2
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.k_core = k_core
        self.split_ratios = split_ratios
        self.eval_ks = eval_ks
        self.pns_beta = pns_beta
        self.clamp_penalty = clamp_penalty
        self.strict_eval = strict_eval
        self.dump_diagnostics = dump_diagnostics
        self.random_state = random_state

    def _config(self) -> DivnsConfig:
        return DivnsConfig(
            sampler=self.sampler,
            variant=self.variant,
            m=self.candidate_pool,
            r=self.cache_depth,
            lam=self.mix,
            omega=self.sampling_ratio,
            epochs=self.epochs,
            seed=self.random_state,
            d=self.n_factors,
            learning_rate=self.learning_rate,
            l2=self.l2,
            batch_size=self.batch_size,
            patience=self.patience,
            pns_beta=self.pns_beta,
            clamp_penalty=self.clamp_penalty,
            strict_eval=self.strict_eval,
            eval_ks=tuple(self.eval_ks),
            dump_diagnostics=self.dump_diagnostics,
        )

    def fit(self, X, y=None):
        log = as_interaction_log(X)
        if self.k_core > 1:
            log = k_core_filter(log, self.k_core)
        dataset = binarize_and_index(log)
        data_split = split(dataset, seed=self.random_state, ratios=tuple(self.split_ratios))
        result = train(dataset, data_split, self._config())
        self.dataset_ = dataset
        self.split_ = data_split
        self.result_ = result
        self.table_ = result.table
        return self

    def _check_fitted(self):
        if not hasattr(self, "table_"):
            raise NotFittedError("call fit() before using the recommender")

    def predict(self, X) -> np.ndarray:
        """Scores for (user_token, item_token) pairs; unknown ids are errors."""
        self._check_fitted()
        pairs = np.asarray(X, dtype=object).reshape(-1, 2)
        out = np.empty(pairs.shape[0])
        for row, (user, item) in enumerate(pairs):
            u = self.dataset_.user_index[str(user)]
            i = self.dataset_.item_index[str(item)]
            out[row] = self.table_.user_vectors[u] @ self.table_.item_vectors[i]
        return out

    def recommend(self, user, k: int = 10, exclude_seen: bool = True) -> list:
        """Top-k item tokens for one user token, best first."""
        self._check_fitted()
        u = self.dataset_.user_index[str(user)]
        exclude = self.split_.train[u] if exclude_seen else ()
        order = rank_items(self.table_, u, exclude)[:k]
        return [self.dataset_.item_tokens[i] for i in order]

    def score(self, X=None, y=None) -> float:
        """Validation NDCG at the largest configured cutoff."""
        self._check_fitted()
        ks = tuple(self.eval_ks)
        report = evaluate(self.table_, self.split_, "validation", ks=ks)
        return report.ndcg(max(ks))

    def evaluate_split(self, which: str = "test"):
        """Full-ranking metrics on one split of the fitted data."""
        self._check_fitted()
        return evaluate(
            self.table_,
            self.split_,
            which,
            ks=tuple(self.eval_ks),
            exclude_validation=self.strict_eval,
        )
