"""Synchronous federated averaging under an unreliable uplink.

Each round: the server broadcasts the global model (losslessly), every client
runs one sequential single-sample SGD pass over its private dataset, and each
client's parameter delta survives the uplink independently with probability
1 - p_out. The server combines surviving deltas weighted by dataset size; a
round in which nothing survives leaves the global model untouched.

Determinism: the whole trace is a pure function of the config. Masks come
from a named substream of the master seed (independent of the partition and
init streams), and a client's local pass is itself rng-free, so serial and
parallel client execution agree bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from . import nn
from .data_io import LabeledDataset, Partition
from .nn import ModelVector, NetSpec
from .seeds import STREAM_MASK, generator

# p_out may be a probability or this sentinel, which the experiment layer
# resolves to the analytical outage probability of its network config before
# training starts.
FROM_GEOMETRY = "from-geometry"


@dataclass(frozen=True)
class FlConfig:
    """Hyperparameters of one federated training run."""

    num_clients: int
    rounds: int
    samples_per_client: int
    partition: str  # "iid" | "noniid"
    p_out: Union[float, str]
    net_spec: NetSpec
    master_seed: int

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.samples_per_client < 1:
            raise ValueError("samples_per_client must be >= 1")
        if self.partition not in ("iid", "noniid"):
            raise ValueError(f"unknown partition mode: {self.partition!r}")
        if isinstance(self.p_out, str):
            if self.p_out != FROM_GEOMETRY:
                raise ValueError(
                    f"p_out must be a probability or {FROM_GEOMETRY!r}"
                )
        elif not 0.0 <= self.p_out <= 1.0:
            raise ValueError("p_out must lie in [0, 1]")


@dataclass(frozen=True)
class RoundLog:
    """Per-round trace entry.

    ``global_accuracy`` is measured on the held-out test union (the metric
    the acceptance checks use); ``full_data_accuracy`` on the union of all
    client data, train and test shares alike, when that set is supplied.
    """

    round_index: int
    mask: Tuple[bool, ...]
    participating_size: int
    global_accuracy: float
    aggregated: bool
    full_data_accuracy: Optional[float] = None

    def __post_init__(self):
        if (self.participating_size == 0) != (not self.aggregated):
            raise ValueError("participating_size is 0 exactly when not aggregated")


@dataclass(frozen=True)
class TrainingTrace:
    config: FlConfig
    rounds: Tuple[RoundLog, ...]
    final_model: ModelVector
    final_accuracy: float


def sample_outage_mask(
    p_out: float, num_clients: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-client upload-survival indicators: True with probability 1 - p_out."""
    if not 0.0 <= p_out <= 1.0:
        raise ValueError("p_out must lie in [0, 1]")
    if num_clients < 1:
        raise ValueError("num_clients must be positive")
    return rng.random(num_clients) >= p_out


def aggregate(gradients: Sequence, sizes: Sequence[int], mask) -> Optional:
    """Size-weighted mean of the surviving parameter deltas.

    Returns None when no update survived (the caller then carries the
    previous global model). Accepts flat arrays or ModelVectors and returns
    the same kind.
    """
    if not (len(gradients) == len(sizes) == len(mask)):
        raise ValueError("gradients, sizes, and mask must have equal length")
    as_model = isinstance(gradients[0], ModelVector)
    vectors = [g.values if as_model else np.asarray(g) for g in gradients]
    length = len(vectors[0])
    if any(len(v) != length for v in vectors):
        raise ValueError("all gradient vectors must have the same length")
    if any(s <= 0 for s in sizes):
        raise ValueError("dataset sizes must be positive")
    total = sum(s for s, m in zip(sizes, mask) if m)
    if total == 0:
        return None
    out = np.zeros(length)
    for vec, size, m in zip(vectors, sizes, mask):
        if m:
            out += (size / total) * vec
    if as_model:
        return ModelVector(values=out, layout=gradients[0].layout)
    return out


def run_training(
    fl: FlConfig,
    data: Partition,
    eval_set: LabeledDataset,
    full_eval_set: Optional[LabeledDataset] = None,
    mask_source: Optional[Callable[[int], np.ndarray]] = None,
) -> TrainingTrace:
    """Execute the full training loop and return its trace.

    ``mask_source``, when given, supplies each round's survival mask instead
    of the default Bernoulli stream — the hook the geometry-driven experiment
    pipeline uses to draw masks from simulated SIR realizations. It must be
    a deterministic function of the round index for reproducibility.
    """
    if isinstance(fl.p_out, str):
        raise ValueError(
            "p_out is symbolic; resolve it to a probability before training"
        )
    if len(data.client_datasets) != fl.num_clients:
        raise ValueError("partition size does not match num_clients")
    if any(len(ds) != fl.samples_per_client for ds in data.client_datasets):
        raise ValueError("every client dataset must have samples_per_client items")
    if len(eval_set) == 0:
        raise ValueError("eval_set must be non-empty")

    mask_rng = generator(fl.master_seed, STREAM_MASK)
    model = nn.init_model(fl.net_spec)
    sizes = [len(ds) for ds in data.client_datasets]
    lr = fl.net_spec.learning_rate
    logs = []
    for t in range(1, fl.rounds + 1):
        if mask_source is not None:
            mask = np.asarray(mask_source(t), dtype=bool)
            if mask.shape != (fl.num_clients,):
                raise ValueError("mask_source must yield one boolean per client")
        else:
            mask = sample_outage_mask(fl.p_out, fl.num_clients, mask_rng)
        # Masked clients' local work cannot reach the server; skipping it is
        # observationally identical (the local pass is rng-free) and halves
        # the round cost at p_out = 0.5.
        deltas, participating_sizes, survivors = [], [], []
        for i in np.flatnonzero(mask):
            ds = data.client_datasets[i]
            local = nn.sgd_pass(model, ds, lr)
            deltas.append(local.values - model.values)
            participating_sizes.append(sizes[i])
            survivors.append(True)
        update = (
            aggregate(deltas, participating_sizes, survivors) if deltas else None
        )
        if update is not None:
            model = ModelVector(values=model.values + update, layout=model.layout)
        accuracy = nn.evaluate(model, eval_set)
        full_accuracy = (
            nn.evaluate(model, full_eval_set) if full_eval_set is not None else None
        )
        logs.append(
            RoundLog(
                round_index=t,
                mask=tuple(bool(b) for b in mask),
                participating_size=int(sum(participating_sizes)),
                global_accuracy=accuracy,
                aggregated=update is not None,
                full_data_accuracy=full_accuracy,
            )
        )
    return TrainingTrace(
        config=fl,
        rounds=tuple(logs),
        final_model=model,
        final_accuracy=logs[-1].global_accuracy,
    )


def resolve_p_out(fl: FlConfig, p_out: float) -> FlConfig:
    """Replace a symbolic p_out with its resolved probability."""
    return replace(fl, p_out=float(p_out))
