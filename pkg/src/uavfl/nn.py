"""Minimal dense feed-forward classifier with exact single-sample SGD.

The local learner each client runs: rectifier hidden layers, softmax output,
cross-entropy loss, one sample at a time. Parameters live in one flat float64
vector (the unit exchanged between clients and server), described by a layout
of (name, shape) entries; weight matrices and bias vectors are views into it,
so in-place updates during a local pass never copy.

The per-sample update is the hot path of the whole training stack (millions
of steps per experiment grid), so the rank-1 weight updates go through BLAS
``ger`` on transposed views instead of allocating ``np.outer`` temporaries —
roughly a 4x step-time difference at the default 784-64-10 shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.linalg.blas import dger

from .seeds import generator


@dataclass(frozen=True)
class NetSpec:
    """Architecture and training hyperparameters.

    Hidden activation is the rectifier and the output is softmax with
    cross-entropy loss (fixed by construction, not configurable fields).
    ``hidden_dims`` may be empty: that is a linear softmax classifier.
    """

    input_dim: int
    hidden_dims: Tuple[int, ...]
    output_dim: int
    learning_rate: float = 0.05
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dimensions must be >= 1")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")

    def layer_dims(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) per layer, input to output."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class ModelVector:
    """Flat parameter vector plus its layer layout.

    ``layout`` holds (name, shape) pairs in storage order: W0, b0, W1, b1, ...
    with weight matrices shaped (fan_out, fan_in). The vector is shared
    mutable state only within one local pass; across clients and rounds it is
    copied, never aliased.
    """

    values: np.ndarray
    layout: Tuple[Tuple[str, Tuple[int, ...]], ...]

    def __post_init__(self):
        expected = sum(int(np.prod(shape)) for _, shape in self.layout)
        if self.values.shape != (expected,):
            raise ValueError(
                f"flat vector length {self.values.shape} does not match layout "
                f"total {expected}"
            )

    def copy(self) -> "ModelVector":
        return ModelVector(values=self.values.copy(), layout=self.layout)

    def views(self) -> List[np.ndarray]:
        """Per-entry array views into the flat vector, in layout order."""
        out, offset = [], 0
        for _, shape in self.layout:
            size = int(np.prod(shape))
            out.append(self.values[offset : offset + size].reshape(shape))
            offset += size
        return out


def layout_for(spec: NetSpec) -> Tuple[Tuple[str, Tuple[int, ...]], ...]:
    entries = []
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        entries.append((f"W{i}", (fan_out, fan_in)))
        entries.append((f"b{i}", (fan_out,)))
    return tuple(entries)


def init_model(spec: NetSpec) -> ModelVector:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    rng = generator(spec.init_seed)
    layout = layout_for(spec)
    model = ModelVector(
        values=np.zeros(sum(int(np.prod(s)) for _, s in layout)), layout=layout
    )
    for (name, _), view in zip(layout, model.views()):
        if name.startswith("W"):
            bound = 1.0 / np.sqrt(view.shape[1])
            view[...] = rng.uniform(-bound, bound, size=view.shape)
    return model


def _split_views(model: ModelVector):
    views = model.views()
    return views[0::2], views[1::2]  # weights, biases


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: ModelVector, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector."""
    weights, biases = _split_views(model)
    if x.shape != (weights[0].shape[1],):
        raise ValueError(
            f"input length {x.shape} does not match input_dim {weights[0].shape[1]}"
        )
    a = x
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(W @ a + b, 0.0)
    return _softmax(weights[-1] @ a + biases[-1])


def forward_batch(model: ModelVector, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a (n, input_dim) batch."""
    weights, biases = _split_views(model)
    if X.ndim != 2 or X.shape[1] != weights[0].shape[1]:
        raise ValueError("batch must be (n, input_dim)")
    A = X
    for W, b in zip(weights[:-1], biases[:-1]):
        A = np.maximum(A @ W.T + b, 0.0)
    return _softmax(A @ weights[-1].T + biases[-1])


def loss(model: ModelVector, x: np.ndarray, label: int) -> float:
    """Cross-entropy of one sample (clipped away from log 0)."""
    p = forward(model, x)
    return float(-np.log(max(p[label], 1e-300)))


def _sgd_step_inplace(weights, biases, x: np.ndarray, label: int, lr: float):
    """One exact gradient step on the views, modifying them in place.

    Backprop signal g_l is computed against the pre-update weights of layer l
    before that layer is touched. Weight updates are BLAS rank-1 ger calls on
    the transposed views (a C-contiguous (out, in) matrix is Fortran-ordered
    as its (in, out) transpose, which ger updates without a temporary).
    """
    activations = [x]
    pre = []
    a = x
    for W, b in zip(weights[:-1], biases[:-1]):
        z = W @ a + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        activations.append(a)
    p = _softmax(weights[-1] @ a + biases[-1])
    g = p
    g[label] -= 1.0  # softmax cross-entropy gradient at the logits
    for layer in range(len(weights) - 1, -1, -1):
        W, b = weights[layer], biases[layer]
        if layer > 0:
            g_prev = (W.T @ g) * (pre[layer - 1] > 0.0)
        dger(-lr, activations[layer], g, a=W.T, overwrite_a=1)
        b -= lr * g
        if layer > 0:
            g = g_prev


def sgd_step(
    model: ModelVector, sample: Tuple[np.ndarray, int], lr: float
) -> ModelVector:
    """model - lr * grad(cross-entropy at sample), as a new vector."""
    x, label = sample
    weights, _ = _split_views(model)
    if x.shape != (weights[0].shape[1],):
        raise ValueError("sample feature length does not match input_dim")
    if not 0 <= label < weights[-1].shape[0]:
        raise ValueError("label outside the output alphabet")
    updated = model.copy()
    w, b = _split_views(updated)
    _sgd_step_inplace(w, b, np.ascontiguousarray(x, dtype=float), int(label), lr)
    return updated


def _as_arrays(dataset):
    """Accept a dataset object (``.features``/``.labels``) or a pair."""
    if hasattr(dataset, "features"):
        return dataset.features, dataset.labels
    features, labels = dataset
    return features, labels


def sgd_pass(model: ModelVector, dataset, lr: float) -> ModelVector:
    """One sequential single-sample pass over the dataset in stored order.

    Pure function of (model, data): no rng, no shuffling — the local update
    each client performs per round.
    """
    features, labels = _as_arrays(dataset)
    updated = model.copy()
    weights, biases = _split_views(updated)
    if features.ndim != 2 or features.shape[1] != weights[0].shape[1]:
        raise ValueError("features must be (n, input_dim)")
    X = np.ascontiguousarray(features, dtype=float)
    for x, label in zip(X, labels):
        _sgd_step_inplace(weights, biases, x, int(label), lr)
    return updated


def evaluate(model: ModelVector, dataset) -> float:
    """Fraction of samples whose argmax probability hits the label.

    Argmax ties resolve to the lowest class index.
    """
    features, labels = _as_arrays(dataset)
    if len(features) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = forward_batch(model, np.asarray(features, dtype=float))
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))
