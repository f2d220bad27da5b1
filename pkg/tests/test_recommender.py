"""Estimator facade: sklearn conventions, fit/predict/recommend round trips."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from divns import DivnsRecommender, MetricsReport

from conftest import random_log


def fast_params(**overrides):
    params = dict(n_factors=8, epochs=3, batch_size=256, learning_rate=1e-3,
                  random_state=0, eval_ks=(5, 10))
    params.update(overrides)
    return params


@pytest.fixture(scope="module")
def interactions():
    log = random_log(20, 50, 10, 18, seed=7)
    return [(r.user, r.item) for r in log]


@pytest.fixture(scope="module")
def fitted(interactions):
    return DivnsRecommender(**fast_params()).fit(interactions)


def test_get_params_round_trip():
    est = DivnsRecommender(candidate_pool=12, cache_depth=3, mix=0.7)
    params = est.get_params()
    assert params["candidate_pool"] == 12
    assert params["cache_depth"] == 3
    assert params["mix"] == 0.7
    rebuilt = DivnsRecommender(**params)
    assert rebuilt.get_params() == params


def test_set_params_and_clone():
    est = DivnsRecommender(**fast_params())
    est.set_params(mix=0.2, sampler="dns")
    assert est.mix == 0.2 and est.sampler == "dns"
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "table_")


def test_unfitted_access_raises():
    est = DivnsRecommender(**fast_params())
    with pytest.raises(NotFittedError):
        est.predict([("u000", "i000")])
    with pytest.raises(NotFittedError):
        est.recommend("u000")
    with pytest.raises(NotFittedError):
        est.score()


def test_fit_returns_self_and_sets_state(fitted):
    assert fitted.table_.user_vectors.shape == (20, 8)
    assert fitted.dataset_.num_users == 20
    assert len(fitted.result_.reports) <= 3


def test_fit_accepts_arrays(interactions):
    arr = np.asarray(interactions, dtype=object)
    est = DivnsRecommender(**fast_params(epochs=1)).fit(arr)
    assert est.dataset_.num_users == 20


def test_predict_matches_table(fitted):
    ds = fitted.dataset_
    pairs = [(ds.user_tokens[2], ds.item_tokens[5]), (ds.user_tokens[0], ds.item_tokens[1])]
    got = fitted.predict(pairs)
    expect = [
        float(fitted.table_.user_vectors[2] @ fitted.table_.item_vectors[5]),
        float(fitted.table_.user_vectors[0] @ fitted.table_.item_vectors[1]),
    ]
    assert got.tolist() == expect


def test_predict_unknown_token_raises(fitted):
    with pytest.raises(KeyError):
        fitted.predict([("nobody", "i000")])


def test_recommend_excludes_train_items(fitted):
    user = fitted.dataset_.user_tokens[3]
    got = fitted.recommend(user, k=10)
    assert len(got) == 10
    train_tokens = {fitted.dataset_.item_tokens[i] for i in fitted.split_.train[3]}
    assert not train_tokens.intersection(got)
    unfiltered = fitted.recommend(user, k=50, exclude_seen=False)
    assert len(unfiltered) == 50


def test_recommend_order_matches_scores(fitted):
    user = fitted.dataset_.user_tokens[1]
    got = fitted.recommend(user, k=5)
    scores = fitted.predict([(user, item) for item in got])
    assert np.all(np.diff(scores) <= 1e-15)


def test_score_and_evaluate_split(fitted):
    assert 0.0 <= fitted.score() <= 1.0
    report = fitted.evaluate_split("test")
    assert isinstance(report, MetricsReport)
    assert report.split == "test"
    assert set(report.values) == {(5, "ndcg"), (5, "recall"), (10, "ndcg"), (10, "recall")}


def test_fit_deterministic_in_random_state(interactions):
    a = DivnsRecommender(**fast_params()).fit(interactions)
    b = DivnsRecommender(**fast_params()).fit(interactions)
    assert np.array_equal(a.table_.user_vectors, b.table_.user_vectors)
    c = DivnsRecommender(**fast_params(random_state=1)).fit(interactions)
    assert not np.array_equal(a.table_.user_vectors, c.table_.user_vectors)


def test_param_mapping_reaches_engine(interactions):
    est = DivnsRecommender(**fast_params(sampler="dns", epochs=2, candidate_pool=6))
    est.fit(interactions)
    cfg = est._config()
    assert cfg.sampler == "dns" and cfg.m == 6 and cfg.epochs == 2
    assert cfg.d == est.n_factors and cfg.seed == est.random_state


def test_invalid_engine_params_surface_at_fit(interactions):
    est = DivnsRecommender(**fast_params(cache_depth=20))
    with pytest.raises(ValueError, match="1 <= r < m"):
        est.fit(interactions)
