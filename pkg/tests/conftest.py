"""Shared fixtures and log builders for the test suite."""

import numpy as np
import pytest

from divns import (
    DivnsConfig,
    Interaction,
    RawInteractionLog,
    binarize_and_index,
    init_embeddings,
    split,
)


def make_log(pairs, weight=None):
    """Build a raw log from (user_token, item_token) pairs, stamps increasing."""
    records = [
        Interaction(str(u), str(i), weight, stamp)
        for stamp, (u, i) in enumerate(pairs)
    ]
    return RawInteractionLog(records)


def random_log(num_users, num_items, lo, hi, seed=0):
    """Random log: each user interacts with lo..hi distinct items."""
    rng = np.random.default_rng(seed)
    pairs = []
    for u in range(num_users):
        degree = int(rng.integers(lo, hi + 1))
        for i in rng.choice(num_items, size=degree, replace=False):
            pairs.append((f"u{u:03d}", f"i{int(i):03d}"))
    return make_log(pairs)


@pytest.fixture(scope="session")
def tiny_dataset():
    """20 users x 50 items, 10..18 positives per user."""
    return binarize_and_index(random_log(20, 50, 10, 18, seed=7))


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    return split(tiny_dataset, seed=0)


@pytest.fixture(scope="session")
def tiny_table(tiny_dataset):
    return init_embeddings(tiny_dataset.num_users, tiny_dataset.num_items, d=8, seed=3)


@pytest.fixture
def base_config():
    return DivnsConfig(sampler="divns", variant="full", m=10, r=4, epochs=3, seed=0, d=8)
