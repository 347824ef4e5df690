"""Dataset ingestion, synthesis, splitting, and client partitioning.

Reads the handwritten-digit corpus from big-endian IDX files, or synthesizes
a deterministic stand-in corpus so nothing here ever needs a download. Splits
are stratified 2:1 train:test; partitioning hands every client an equal-size
private dataset either i.i.d. (uniform draws across classes) or non-i.i.d.
(every client owns exactly one class).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .seeds import SeedLike, generator

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

# Internal seed fixing the synthetic class prototypes; independent of the
# caller's noise seed so the "digits" themselves are as immutable as a file
# on disk. The contrast keeps prototypes within [0.5 - a, 0.5 + a] so even
# noiseless samples are not saturated at the pixel bounds.
_PROTOTYPE_SEED = 1618033988
_PROTOTYPE_CONTRAST = 0.12


class IdxMagicError(ValueError):
    """File's magic number does not match the expected IDX type."""


class IdxTruncatedError(ValueError):
    """File ends before the header-declared payload."""


class IdxCountMismatchError(ValueError):
    """Image and label files declare different item counts."""


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix in [0,1] with integer class labels."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64
    class_count: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2D matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must have equal length")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise ValueError("labels must lie in [0, class_count)")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            class_count=self.class_count,
        )


@dataclass(frozen=True)
class Partition:
    """Equal-size per-client datasets."""

    client_datasets: Tuple[LabeledDataset, ...]
    mode: str  # "iid" | "noniid"

    def __post_init__(self):
        if not self.client_datasets:
            raise ValueError("a partition needs at least one client dataset")
        sizes = {len(ds) for ds in self.client_datasets}
        if len(sizes) > 1:
            raise ValueError("all client datasets must have equal size")


def _read_exact(data: bytes, offset: int, count: int, path, what: str) -> bytes:
    if offset + count > len(data):
        raise IdxTruncatedError(
            f"{path}: truncated {what}: need {count} bytes at offset {offset}, "
            f"file has {len(data)}"
        )
    return data[offset : offset + count]


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Parse an images/labels pair of big-endian IDX files.

    Pixels are rescaled from bytes to [0, 1]. Wrong magic numbers, truncated
    payloads, and image/label count disagreement raise distinct errors.
    """
    with open(images_path, "rb") as fh:
        raw_images = fh.read()
    with open(labels_path, "rb") as fh:
        raw_labels = fh.read()

    (image_magic,) = struct.unpack(
        ">I", _read_exact(raw_images, 0, 4, images_path, "header")
    )
    if image_magic != IMAGE_MAGIC:
        raise IdxMagicError(
            f"{images_path}: wrong magic: expected {IMAGE_MAGIC} (images), "
            f"got {image_magic}"
        )
    n_images, rows, cols = struct.unpack(
        ">III", _read_exact(raw_images, 4, 12, images_path, "header")
    )
    pixels = _read_exact(
        raw_images, 16, n_images * rows * cols, images_path, "pixel payload"
    )

    (label_magic,) = struct.unpack(
        ">I", _read_exact(raw_labels, 0, 4, labels_path, "header")
    )
    if label_magic != LABEL_MAGIC:
        raise IdxMagicError(
            f"{labels_path}: wrong magic: expected {LABEL_MAGIC} (labels), "
            f"got {label_magic}"
        )
    (n_labels,) = struct.unpack(
        ">I", _read_exact(raw_labels, 4, 4, labels_path, "header")
    )
    label_bytes = _read_exact(raw_labels, 8, n_labels, labels_path, "label payload")

    if n_images != n_labels:
        raise IdxCountMismatchError(
            f"image count {n_images} != label count {n_labels} "
            f"({images_path} vs {labels_path})"
        )

    features = (
        np.frombuffer(pixels, dtype=np.uint8)
        .reshape(n_images, rows * cols)
        .astype(np.float64)
        / 255.0
    )
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    class_count = int(labels.max()) + 1 if n_labels else 0
    return LabeledDataset(features=features, labels=labels, class_count=class_count)


def class_prototypes(dim: int = 784) -> np.ndarray:
    """The 10 fixed synthetic class prototypes (rows), values in [0, 1]."""
    rng = generator(_PROTOTYPE_SEED)
    signs = rng.integers(0, 2, size=(10, dim)) * 2 - 1
    return 0.5 + _PROTOTYPE_CONTRAST * signs


def synthesize_digits(
    per_class: int, noise: float, seed: SeedLike, dim: int = 784
) -> LabeledDataset:
    """Deterministic synthetic 10-class corpus.

    Each sample is its class prototype plus i.i.d. Gaussian noise of the
    given standard deviation, clipped to [0, 1]. ``noise=0`` reproduces the
    prototypes exactly (linearly separable); the prototypes themselves are
    fixed constants, independent of ``seed``.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    protos = class_prototypes(dim)
    labels = np.repeat(np.arange(10, dtype=np.int64), per_class)
    features = protos[labels]
    if noise > 0:
        rng = generator(seed)
        features = features + noise * rng.standard_normal(features.shape)
        features = np.clip(features, 0.0, 1.0)
    return LabeledDataset(features=features, labels=labels, class_count=10)


def split_train_test(
    ds: LabeledDataset, seed: SeedLike, ratio: Tuple[int, int] = (2, 1)
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Stratified disjoint split at the given train:test ratio.

    Per class, ``n * test/(train+test)`` samples (floored) go to test and the
    rest to train, so a 2:1 request is exact on multiples of 3 and within one
    sample per class otherwise. Classes absent from the dataset are ignored
    (a single-class client share splits fine); a class that is present with
    fewer than train+test samples is rejected.
    """
    train_parts, test_parts = ratio
    total_parts = train_parts + test_parts
    rng = generator(seed)
    train_idx, test_idx = [], []
    for cls in range(ds.class_count):
        members = np.flatnonzero(ds.labels == cls)
        if len(members) == 0:
            continue
        if len(members) < total_parts:
            raise ValueError(
                f"class {cls} has {len(members)} samples; "
                f"need at least {total_parts} to split {train_parts}:{test_parts}"
            )
        members = rng.permutation(members)
        n_test = len(members) * test_parts // total_parts
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    return ds.subset(train), ds.subset(test)


def partition(
    train: LabeledDataset,
    num_clients: int,
    samples_per_client: int = 20,
    mode: str = "iid",
    seed: SeedLike = 0,
) -> Partition:
    """Distribute equal-size disjoint datasets to clients.

    iid: every client's share is spread uniformly across the classes — an
    equal number per class, with any remainder covered by classes drawn at
    random per client — and uniformly at random (without replacement) within
    each class. noniid: every client's samples share a single class, classes
    assigned round-robin (client i gets class i mod class_count), so each
    class is held by exactly num_clients / class_count clients.

    Each share is stored in a random order. Sequential learners consume
    shares as stored, and a class-sorted layout would make every client end
    its local pass on the same classes — a recency bias that survives
    averaging and noticeably hurts mixed-class training.
    """
    if mode not in ("iid", "noniid"):
        raise ValueError(f"unknown partition mode: {mode!r}")
    if num_clients < 1 or samples_per_client < 1:
        raise ValueError("num_clients and samples_per_client must be >= 1")
    rng = generator(seed)
    clients = []
    if mode == "iid":
        needed = num_clients * samples_per_client
        if len(train) < needed:
            raise ValueError(
                f"need {needed} samples for {num_clients} clients, have {len(train)}"
            )
        class_count = train.class_count
        base, rem = divmod(samples_per_client, class_count)
        pools = [
            rng.permutation(np.flatnonzero(train.labels == cls))
            for cls in range(class_count)
        ]
        cursors = [0] * class_count
        for i in range(num_clients):
            counts = [base] * class_count
            for cls in rng.choice(class_count, size=rem, replace=False):
                counts[cls] += 1
            take = []
            for cls, count in enumerate(counts):
                if count == 0:
                    continue
                pool, start = pools[cls], cursors[cls]
                if start + count > len(pool):
                    raise ValueError(
                        f"class {cls} exhausted after {i} clients; "
                        f"corpus too small for a class-balanced partition"
                    )
                take.append(pool[start : start + count])
                cursors[cls] = start + count
            clients.append(train.subset(rng.permutation(np.concatenate(take))))
    else:
        if num_clients % train.class_count != 0:
            raise ValueError(
                f"noniid needs num_clients divisible by class_count "
                f"({num_clients} % {train.class_count} != 0)"
            )
        per_class_clients = num_clients // train.class_count
        pools = {}
        for cls in range(train.class_count):
            members = np.flatnonzero(train.labels == cls)
            needed = per_class_clients * samples_per_client
            if len(members) < needed:
                raise ValueError(
                    f"class {cls} has {len(members)} samples; "
                    f"{needed} needed for {per_class_clients} clients"
                )
            pools[cls] = rng.permutation(members)[:needed]
        counters = {cls: 0 for cls in pools}
        for i in range(num_clients):
            cls = i % train.class_count
            start = counters[cls]
            take = pools[cls][start : start + samples_per_client]
            counters[cls] = start + samples_per_client
            clients.append(train.subset(rng.permutation(take)))
    return Partition(client_datasets=tuple(clients), mode=mode)
