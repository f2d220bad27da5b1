"""Embedding init, scoring, pairwise loss, gradients, optimizer, checkpoints."""

import math

import numpy as np
import pytest

from divns import (
    EmbeddingTable,
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

# scalar constants, hand-derived from the loss definition -ln sigmoid(x):
#   x = 0  -> ln 2
#   x = 1  -> ln(1 + e^-1)
LN2 = 0.6931471805599453
NEG_LOG_SIGMOID_1 = 0.31326168751822286


def table_from(user_rows, item_rows):
    return EmbeddingTable(
        np.asarray(user_rows, dtype=float), np.asarray(item_rows, dtype=float)
    )


def single(user, pos, neg):
    return TripletBatch.single_source(
        np.array([user]), np.array([pos]), np.array([neg])
    )


# ---------------------------------------------------------------- init


def test_init_deterministic():
    a = init_embeddings(5, 7, d=16, seed=9)
    b = init_embeddings(5, 7, d=16, seed=9)
    assert np.array_equal(a.user_vectors, b.user_vectors)
    assert np.array_equal(a.item_vectors, b.item_vectors)
    c = init_embeddings(5, 7, d=16, seed=10)
    assert not np.array_equal(a.user_vectors, c.user_vectors)


def test_init_shapes_d64():
    t = init_embeddings(3, 4, d=64, seed=0)
    assert t.user_vectors.shape == (3, 64)
    assert t.item_vectors.shape == (4, 64)
    assert t.d == 64 and t.num_users == 3 and t.num_items == 4


def test_init_mean_within_3_standard_errors():
    t = init_embeddings(1000, 1, d=64, seed=1)
    entries = t.user_vectors.ravel()
    se = 0.01 / math.sqrt(entries.size)
    assert abs(entries.mean()) < 3 * se
    assert abs(entries.std() - 0.01) < 0.001


def test_init_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_embeddings(0, 5)


# ---------------------------------------------------------------- scoring


def test_score_identical_unit_vectors():
    t = table_from([[1, 0]], [[1, 0]])
    assert score(t, 0, 0) == 1.0


def test_score_orthogonal():
    t = table_from([[1, 0]], [[0, 1]])
    assert score(t, 0, 0) == 0.0


def test_score_hand_inner_product():
    t = table_from([[0.5, 0.5]], [[1, -1]])
    assert score(t, 0, 0) == 0.0


def test_score_bounds_checked():
    t = table_from([[1, 0]], [[1, 0]])
    with pytest.raises(IndexError):
        score(t, 1, 0)
    with pytest.raises(IndexError):
        score(t, 0, -1)


def test_score_embedding_matches_score():
    rng = np.random.default_rng(0)
    t = EmbeddingTable(rng.normal(size=(3, 6)), rng.normal(size=(5, 6)))
    for i in range(5):
        assert score_embedding(t, 1, t.item_vectors[i]) == score(t, 1, i)
    assert score_embedding(t, 0, np.zeros(6)) == 0.0


def test_score_embedding_bilinear():
    rng = np.random.default_rng(4)
    t = EmbeddingTable(rng.normal(size=(2, 8)), rng.normal(size=(4, 8)))
    lam = 0.3
    v = lam * t.item_vectors[1] + (1 - lam) * t.item_vectors[2]
    expected = lam * score(t, 0, 1) + (1 - lam) * score(t, 0, 2)
    assert score_embedding(t, 0, v) == pytest.approx(expected, rel=1e-12)


def test_score_embedding_shape_check():
    t = table_from([[1, 0]], [[1, 0]])
    with pytest.raises(ValueError):
        score_embedding(t, 0, np.zeros(3))


# ---------------------------------------------------------------- loss


def test_loss_equal_scores_is_ln2():
    t = table_from([[1, 0]], [[1, 0], [1, 0]])
    assert bpr_loss(t, single(0, 0, 1)) == pytest.approx(LN2, rel=1e-15)


def test_loss_large_gap_vanishes():
    t = table_from([[30.0]], [[1.0], [0.0]])
    assert bpr_loss(t, single(0, 0, 1)) < 1e-12


def test_loss_unit_gap():
    t = table_from([[1.0]], [[1.0], [0.0]])
    assert bpr_loss(t, single(0, 0, 1)) == pytest.approx(NEG_LOG_SIGMOID_1, rel=1e-15)


def test_loss_sums_over_triplets():
    t = table_from([[1, 0]], [[1, 0], [1, 0]])
    batch = TripletBatch.single_source(
        np.array([0, 0]), np.array([0, 0]), np.array([1, 1])
    )
    assert bpr_loss(t, batch) == pytest.approx(2 * LN2, rel=1e-15)


def test_loss_empty_batch_is_zero():
    t = table_from([[1.0]], [[1.0]])
    assert bpr_loss(t, TripletBatch.concatenate([])) == 0.0


def test_loss_accepts_triplet_objects():
    rng = np.random.default_rng(2)
    t = EmbeddingTable(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)))
    batch = single(0, 1, 2)
    assert bpr_loss(t, batch.to_triplets(t)) == pytest.approx(
        bpr_loss(t, batch), rel=1e-15
    )


# ---------------------------------------------------------------- gradients


def finite_difference(table, batch, l2, coords, h=1e-6):
    """Central differences of bpr_loss wrt selected (matrix, row, col) coords."""
    out = []
    for which, row, col in coords:
        t_plus, t_minus = table.copy(), table.copy()
        getattr(t_plus, which)[row, col] += h
        getattr(t_minus, which)[row, col] -= h
        out.append((bpr_loss(t_plus, batch, l2) - bpr_loss(t_minus, batch, l2)) / (2 * h))
    return np.array(out)


def random_instance(rng, mixed):
    nu, ni, d = 3, 6, 4
    t = EmbeddingTable(rng.normal(size=(nu, d)), rng.normal(size=(ni, d)))
    n = int(rng.integers(1, 5))
    users = rng.integers(0, nu, size=n)
    pos = rng.integers(0, ni, size=n)
    if mixed:
        lam = float(rng.uniform(0.1, 0.9))
        batch = TripletBatch.mixed(
            users, pos, rng.integers(0, ni, size=n), rng.integers(0, ni, size=n), lam
        )
    else:
        batch = TripletBatch.single_source(users, pos, rng.integers(0, ni, size=n))
    return t, batch


@pytest.mark.parametrize("mixed", [False, True])
def test_gradients_match_finite_differences(mixed):
    rng = np.random.default_rng(11 + int(mixed))
    for trial in range(50):
        t, batch = random_instance(rng, mixed)
        l2 = float(rng.choice([0.0, 0.01]))
        gu, gi, _ = bpr_gradients(t, batch, l2)
        coords = [("user_vectors", int(r), int(c)) for r, c in
                  zip(rng.integers(0, 3, 4), rng.integers(0, 4, 4))]
        coords += [("item_vectors", int(r), int(c)) for r, c in
                   zip(rng.integers(0, 6, 4), rng.integers(0, 4, 4))]
        fd = finite_difference(t, batch, l2, coords)
        analytic = np.array([
            gu[r, c] if w == "user_vectors" else gi[r, c] for w, r, c in coords
        ])
        denom = np.maximum(np.abs(fd), 1e-8)
        assert np.max(np.abs(analytic - fd) / denom) < 1e-4


def test_gradient_lambda_one_ignores_diverse_item():
    rng = np.random.default_rng(5)
    t = EmbeddingTable(rng.normal(size=(2, 4)), rng.normal(size=(5, 4)))
    batch = TripletBatch.mixed(
        np.array([0]), np.array([1]), np.array([2]), np.array([3]), lam=1.0
    )
    _, gi, _ = bpr_gradients(t, batch)
    assert np.all(gi[3] == 0.0)
    assert np.any(gi[2] != 0.0)


def test_gradient_loss_part_matches_loss():
    rng = np.random.default_rng(8)
    t, batch = random_instance(rng, mixed=True)
    _, _, part = bpr_gradients(t, batch, l2=0.05)
    assert part == pytest.approx(bpr_loss(t, batch, l2=0.0), rel=1e-12)


def test_gradient_nonfinite_raises():
    t = table_from([[1e300, 0]], [[1e300, 0], [0, 0]])
    t.user_vectors[0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="triplet 0"):
        bpr_gradients(t, single(0, 0, 1))


# ---------------------------------------------------------------- optimizer


def test_zero_learning_rate_is_bitwise_noop():
    rng = np.random.default_rng(3)
    t = EmbeddingTable(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)))
    before_u, before_i = t.user_vectors.copy(), t.item_vectors.copy()
    state = init_optimizer(t, learning_rate=0.0)
    train_step(t, state, single(0, 1, 2))
    assert np.array_equal(t.user_vectors, before_u)
    assert np.array_equal(t.item_vectors, before_i)
    assert state.step == 1


def test_train_step_reduces_loss_on_repeat():
    rng = np.random.default_rng(6)
    t = EmbeddingTable(rng.normal(size=(2, 4)) * 0.01, rng.normal(size=(3, 4)) * 0.01)
    state = init_optimizer(t, learning_rate=0.05)
    batch = single(0, 1, 2)
    first = bpr_loss(t, batch)
    for _ in range(20):
        train_step(t, state, batch)
    assert bpr_loss(t, batch) < first


def test_train_step_returns_pre_update_loss():
    rng = np.random.default_rng(7)
    t = EmbeddingTable(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)))
    state = init_optimizer(t, learning_rate=0.01, l2=0.1)
    batch = single(1, 0, 2)
    expected = bpr_loss(t, batch, l2=0.0)
    assert train_step(t, state, batch) == pytest.approx(expected, rel=1e-12)


def test_init_optimizer_rejects_negative():
    t = table_from([[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        init_optimizer(t, learning_rate=-0.1)


# ---------------------------------------------------------------- snapshots


def test_snapshot_normalizes_rows():
    t = table_from([[1, 0]], [[3, 4], [0, 5]])
    snap = snapshot_items(t, epoch=2)
    assert np.allclose(snap.unit_item_vectors[0], [0.6, 0.8], atol=1e-15)
    assert np.allclose(snap.unit_item_vectors[1], [0.0, 1.0], atol=1e-15)
    assert snap.epoch_tag == 2


def test_snapshot_unit_rows_unchanged():
    t = table_from([[1, 0]], [[1.0, 0.0], [0.0, -1.0]])
    snap = snapshot_items(t, epoch=0)
    assert np.allclose(snap.unit_item_vectors, t.item_vectors, atol=1e-12)


def test_snapshot_all_norms_one():
    rng = np.random.default_rng(12)
    t = EmbeddingTable(rng.normal(size=(2, 6)), rng.normal(size=(40, 6)))
    snap = snapshot_items(t, epoch=1)
    norms = np.linalg.norm(snap.unit_item_vectors, axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_snapshot_degenerate_row_gets_basis_vector():
    t = table_from([[1, 0, 0]], [[0, 0, 0], [0, 0, 0], [1, 1, 1], [0, 0, 0], [0, 0, 0]])
    snap = snapshot_items(t, epoch=0)
    assert np.array_equal(snap.unit_item_vectors[0], [1, 0, 0])
    assert np.array_equal(snap.unit_item_vectors[1], [0, 1, 0])
    assert np.array_equal(snap.unit_item_vectors[3], [1, 0, 0])
    assert np.array_equal(snap.unit_item_vectors[4], [0, 1, 0])
    assert not t.item_vectors.any(axis=1)[0], "source table untouched"


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_with_optimizer(tmp_path):
    rng = np.random.default_rng(13)
    t = EmbeddingTable(rng.normal(size=(3, 4)), rng.normal(size=(5, 4)))
    state = init_optimizer(t, learning_rate=0.02, l2=0.001)
    train_step(t, state, single(0, 1, 2))
    path = str(tmp_path / "ckpt.npz")
    save_checkpoint(path, t, state)
    t2, s2 = load_checkpoint(path)
    assert np.array_equal(t2.user_vectors, t.user_vectors)
    assert np.array_equal(t2.item_vectors, t.item_vectors)
    assert s2.step == 1 and s2.learning_rate == 0.02 and s2.l2 == 0.001
    assert np.array_equal(s2.m_user, state.m_user)
    assert np.array_equal(s2.v_item, state.v_item)


def test_checkpoint_roundtrip_table_only(tmp_path):
    t = table_from([[1, 2]], [[3, 4]])
    path = str(tmp_path / "ckpt.npz")
    save_checkpoint(path, t)
    t2, s2 = load_checkpoint(path)
    assert s2 is None
    assert np.array_equal(t2.item_vectors, [[3, 4]])


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = str(tmp_path / "ckpt.npz")
    np.savez(path, format_version=np.int64(99), user_vectors=np.eye(2), item_vectors=np.eye(2))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
