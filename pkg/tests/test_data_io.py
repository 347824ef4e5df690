"""Corpus plumbing: IDX parsing, the synthetic corpus, splitting, and
client partitioning."""
import struct

import numpy as np
import pytest

from uavfl.data_io import (
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    LabeledDataset,
    class_prototypes,
    load_idx,
    partition,
    split_train_test,
    synthesize_digits,
)
from uavfl.nn import NetSpec, evaluate, init_model, sgd_pass


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def write_idx_pair(tmp_path, pixels: np.ndarray, labels: np.ndarray):
    n, rows, cols = pixels.shape
    images = tmp_path / "images-idx3-ubyte"
    labels_f = tmp_path / "labels-idx1-ubyte"
    images.write_bytes(
        struct.pack(">IIII", 2051, n, rows, cols)
        + pixels.astype(np.uint8).tobytes()
    )
    labels_f.write_bytes(
        struct.pack(">II", 2049, len(labels)) + labels.astype(np.uint8).tobytes()
    )
    return images, labels_f


def test_idx_round_trip(tmp_path):
    pixels = np.arange(6 * 2 * 2, dtype=np.uint8).reshape(6, 2, 2)
    labels = np.array([0, 1, 2, 3, 4, 5], dtype=np.uint8)
    ds = load_idx(*write_idx_pair(tmp_path, pixels, labels))
    assert ds.features.shape == (6, 4)
    assert ds.features.dtype == np.float64
    assert np.allclose(ds.features, pixels.reshape(6, 4) / 255.0)
    assert np.array_equal(ds.labels, labels)
    assert ds.class_count == 6
    assert len(ds) == 6


def test_idx_rejects_wrong_magic(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    labels = np.zeros(2, dtype=np.uint8)
    images, labels_f = write_idx_pair(tmp_path, pixels, labels)
    images.write_bytes(struct.pack(">IIII", 2049, 2, 2, 2) + bytes(8))
    with pytest.raises(IdxMagicError):
        load_idx(images, labels_f)


def test_idx_rejects_truncated_payload(tmp_path):
    pixels = np.zeros((3, 2, 2), dtype=np.uint8)
    labels = np.zeros(3, dtype=np.uint8)
    images, labels_f = write_idx_pair(tmp_path, pixels, labels)
    images.write_bytes(images.read_bytes()[:-5])
    with pytest.raises(IdxTruncatedError):
        load_idx(images, labels_f)


def test_idx_rejects_count_mismatch(tmp_path):
    pixels = np.zeros((3, 2, 2), dtype=np.uint8)
    images, _ = write_idx_pair(tmp_path, pixels, np.zeros(3, dtype=np.uint8))
    labels_f = images.parent / "short-labels-idx1-ubyte"
    labels_f.write_bytes(struct.pack(">II", 2049, 2) + bytes(2))
    with pytest.raises(IdxCountMismatchError):
        load_idx(images, labels_f)


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------

def test_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(
            features=np.zeros((3, 2)), labels=np.zeros(2, dtype=np.int64),
            class_count=1,
        )
    with pytest.raises(ValueError):
        LabeledDataset(
            features=np.zeros((2, 2)), labels=np.array([0, 5]), class_count=3
        )


def test_dataset_subset():
    ds = synthesize_digits(3, 0.0, 0)
    sub = ds.subset(np.array([0, 10, 20]))
    assert len(sub) == 3
    assert sub.class_count == ds.class_count
    assert np.array_equal(sub.features[1], ds.features[10])


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

def test_synthetic_noise_zero_is_exactly_the_prototypes():
    ds = synthesize_digits(2, 0.0, 99)
    protos = class_prototypes()
    for i in range(len(ds)):
        assert np.array_equal(ds.features[i], protos[ds.labels[i]])


def test_synthetic_is_seed_deterministic():
    a = synthesize_digits(5, 0.3, 12)
    b = synthesize_digits(5, 0.3, 12)
    c = synthesize_digits(5, 0.3, 13)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_synthetic_shapes_and_range():
    ds = synthesize_digits(4, 0.8, 3)
    assert ds.features.shape == (40, 784)
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert np.array_equal(np.bincount(ds.labels), np.full(10, 4))


def test_synthetic_validation():
    with pytest.raises(ValueError):
        synthesize_digits(0, 0.1, 1)
    with pytest.raises(ValueError):
        synthesize_digits(5, -0.1, 1)


def test_linear_classifier_oracle_on_low_noise_corpus():
    # A plain softmax regression must solve the noise=0.1 corpus: this pins
    # the corpus's intrinsic difficulty from an independent training route.
    corpus = synthesize_digits(20, 0.1, 5)
    spec = NetSpec(input_dim=784, hidden_dims=(), output_dim=10, init_seed=1)
    model = init_model(spec)
    for _ in range(15):
        model = sgd_pass(model, corpus, 0.05)
    assert evaluate(model, corpus) >= 0.95


# ---------------------------------------------------------------------------
# Train/test splitting
# ---------------------------------------------------------------------------

def test_split_balanced_thirty_is_exact():
    ds = synthesize_digits(3, 0.2, 8)  # 30 samples, 3 per class
    train, test = split_train_test(ds, 4)
    assert len(train) == 20 and len(test) == 10
    assert np.array_equal(np.bincount(train.labels), np.full(10, 2))
    assert np.array_equal(np.bincount(test.labels), np.full(10, 1))


def test_split_is_disjoint_and_exhaustive():
    ds = synthesize_digits(6, 0.2, 8)
    train, test = split_train_test(ds, 4)
    seen = {tuple(row) for row in train.features} | {
        tuple(row) for row in test.features
    }
    assert len(seen) == len(ds)
    assert len(train) + len(test) == len(ds)


def test_split_same_seed_identical():
    ds = synthesize_digits(3, 0.2, 8)
    t1, _ = split_train_test(ds, 11)
    t2, _ = split_train_test(ds, 11)
    t3, _ = split_train_test(ds, 12)
    assert np.array_equal(t1.features, t2.features)
    assert not np.array_equal(t1.features, t3.features)


def test_split_rejects_tiny_present_class():
    base = synthesize_digits(3, 0.2, 8)
    crippled = base.subset(np.arange(2, 30))  # class 0 keeps only 1 sample
    with pytest.raises(ValueError, match="class 0"):
        split_train_test(crippled, 4)


def test_split_ignores_absent_classes():
    base = synthesize_digits(3, 0.2, 8)
    single = base.subset(np.flatnonzero(base.labels == 7))
    train, test = split_train_test(single, 4)
    assert len(train) == 2 and len(test) == 1
    assert set(train.labels) == set(test.labels) == {7}


# ---------------------------------------------------------------------------
# Client partitioning
# ---------------------------------------------------------------------------

def test_iid_partition_is_class_balanced():
    corpus = synthesize_digits(40, 0.2, 6)
    part = partition(corpus, 5, 20, "iid", 3)
    assert part.mode == "iid"
    for client in part.client_datasets:
        assert len(client) == 20
        assert np.array_equal(np.bincount(client.labels), np.full(10, 2))


def test_iid_partition_handles_indivisible_share():
    corpus = synthesize_digits(40, 0.2, 6)
    part = partition(corpus, 4, 25, "iid", 3)
    for client in part.client_datasets:
        assert len(client) == 25
        counts = np.bincount(client.labels, minlength=10)
        assert set(counts) == {2, 3}  # base 2 everywhere, +1 on five classes


def test_partition_never_reuses_a_sample():
    corpus = synthesize_digits(40, 0.2, 6)
    for mode in ("iid", "noniid"):
        part = partition(corpus, 10, 30, mode, 9)
        rows = np.concatenate([c.features for c in part.client_datasets])
        assert len({tuple(r) for r in rows}) == 10 * 30


def test_noniid_partition_label_purity_and_round_robin():
    corpus = synthesize_digits(200, 0.2, 6)
    part = partition(corpus, 50, 20, "noniid", 9)
    holders = {cls: 0 for cls in range(10)}
    for i, client in enumerate(part.client_datasets):
        labels = set(client.labels.tolist())
        assert labels == {i % 10}
        holders[i % 10] += 1
    assert holders[3] == 5  # each digit held by exactly 50/10 clients


def test_noniid_bijection_at_k_equals_classes():
    corpus = synthesize_digits(30, 0.2, 6)
    part = partition(corpus, 10, 20, "noniid", 9)
    assert [set(c.labels.tolist()) for c in part.client_datasets] == [
        {i} for i in range(10)
    ]


def test_partition_is_seed_deterministic():
    corpus = synthesize_digits(40, 0.2, 6)
    a = partition(corpus, 5, 20, "iid", 3)
    b = partition(corpus, 5, 20, "iid", 3)
    c = partition(corpus, 5, 20, "iid", 4)
    for x, y in zip(a.client_datasets, b.client_datasets):
        assert np.array_equal(x.features, y.features)
    assert any(
        not np.array_equal(x.features, y.features)
        for x, y in zip(a.client_datasets, c.client_datasets)
    )


def test_partition_validation():
    corpus = synthesize_digits(10, 0.2, 6)
    with pytest.raises(ValueError):
        partition(corpus, 3, 20, "bogus", 0)
    with pytest.raises(ValueError):
        partition(corpus, 12, 20, "noniid", 0)  # 12 not divisible by 10
    with pytest.raises(ValueError):
        partition(corpus, 10, 200, "iid", 0)  # needs 2000, corpus has 100
    with pytest.raises(ValueError):
        partition(corpus, 10, 11, "noniid", 0)  # class pool exhausted


def test_iid_class_histogram_uniform_over_resamples():
    # Statistical check: pooled class composition over many partition draws
    # is uniform by chi-square at the 99% level.
    corpus = synthesize_digits(40, 0.2, 6)
    counts = np.zeros(10)
    for seed in range(100):
        part = partition(corpus, 2, 25, "iid", seed)
        counts += np.bincount(part.client_datasets[0].labels, minlength=10)
    expected = counts.sum() / 10
    chi2 = np.sum((counts - expected) ** 2 / expected)
    assert chi2 < 21.7  # chi-square(9), 99%
