"""Semi-supervised training of a UnifiedGM network with a softmax head.

Backpropagation is derived by hand for the fixed layer form
``X_i = phi(A_i X_{i-1} W_i)`` followed by ``softmax(X_k W_out)``.
"""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import ParamSet, check_layer_shapes, dropout_mask, propagate
from .graph import SPLITS, Dataset

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class WeightStack:
    layers: list
    head: np.ndarray
    trainable: tuple | None = None
    tied: bool = False

    def __post_init__(self):
        if self.trainable is None:
            self.trainable = (True,) * (len(self.layers) + 1)
        if len(self.trainable) != len(self.layers) + 1:
            raise ValueError("trainable needs one flag per layer plus the head")

    @property
    def matrices(self):
        return [*self.layers, self.head]

    def copy(self) -> "WeightStack":
        return WeightStack([W.copy() for W in self.layers], self.head.copy(),
                           tuple(self.trainable), self.tied)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(W)) for W in self.matrices)

    def __eq__(self, other):
        if not isinstance(other, WeightStack):
            return NotImplemented
        return (len(self.layers) == len(other.layers)
                and all(np.array_equal(a, b) for a, b in zip(self.matrices, other.matrices)))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive and weight_decay non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.max_epochs < 0 or self.patience < 1:
            raise ValueError("max_epochs must be >= 0 and patience >= 1")


@dataclass
class TrainedModel:
    params: ParamSet
    weights: WeightStack
    train_seconds: float = 0.0
    epochs_run: int = 0
    best_epoch: int = -1
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    inference_seconds: float


def init_weights(d0: int, d: int, k: int, C: int, seed: int, *, tied: bool = False,
                 trainable=None) -> WeightStack:
    """Glorot-uniform weights for ``k`` layers and a ``d x C`` head."""
    if min(d0, d, k, C) < 1:
        raise ValueError("d0, d, k and C must all be >= 1")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    layers = [glorot(d0, d)] + [glorot(d, d) for _ in range(k - 1)]
    if tied:
        for i in range(2, k):
            layers[i] = layers[1].copy()
    return WeightStack(layers, glorot(d, C), trainable, tied)


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(labels.size), labels].mean()


def loss_and_gradient(dataset: Dataset, params: ParamSet, weights: WeightStack, rng=None, *,
                      split: str = "train", dropout: float = 0.0, weight_decay: float = 0.0,
                      literal_degree: bool = False):
    """Cross-entropy over ``split`` (plus optional L2) and its gradient per matrix.

    Returns ``(loss, grads)`` with ``grads`` a list aligned with
    ``weights.matrices``.  Frozen matrices get zero gradients.
    """
    cache = []
    train_mode = dropout > 0
    with np.errstate(over="ignore", invalid="ignore"):
        xk = propagate(dataset.graph, dataset.features, params, weights, rng,
                       train_mode=train_mode, dropout=dropout,
                       literal_degree=literal_degree, cache=cache)
        head_mask = dropout_mask(xk.shape, dropout, rng) if train_mode else None
        h_in = xk * head_mask if head_mask is not None else xk
        mask = dataset.mask(split)
        idx = np.flatnonzero(mask)
        logits = h_in[idx] @ weights.head
        labels = dataset.labels[idx]
        loss = _cross_entropy(logits, labels)

        dlogits = _softmax(logits)
        dlogits[np.arange(idx.size), labels] -= 1.0
        dlogits /= idx.size
        g_head = h_in[idx].T @ dlogits
        dx = np.zeros_like(xk)
        dx[idx] = dlogits @ weights.head.T
        if head_mask is not None:
            dx *= head_mask

        grads = [None] * params.k
        for i in range(params.k - 1, -1, -1):
            x_in, in_mask, agg, z = cache[i]
            dz = dx * (z > 0) if params.l else dx
            g = agg.T @ dz
            grads[i] = x_in.T @ g
            if i > 0:
                dx = g @ weights.layers[i].T
                if in_mask is not None:
                    dx *= in_mask
        grads.append(g_head)

    if weight_decay:
        for j, (W, flag) in enumerate(zip(weights.matrices, weights.trainable)):
            if flag:
                loss += 0.5 * weight_decay * float(np.sum(W * W))
                grads[j] = grads[j] + weight_decay * W
    for j, flag in enumerate(weights.trainable):
        if not flag:
            grads[j] = np.zeros_like(grads[j])
    if weights.tied and params.k > 2:
        shared = sum(grads[1:params.k])
        for j in range(1, params.k):
            grads[j] = shared.copy()
    return float(loss), grads


def gradient(dataset: Dataset, params: ParamSet, weights: WeightStack, rng=None, **kwargs):
    """Analytic gradient of the train-split cross-entropy w.r.t. every matrix."""
    check_layer_shapes(weights.layers, dataset.feature_dim, params)
    if weights.head.shape != (params.d, dataset.class_count):
        raise ValueError(f"head has shape {weights.head.shape}, "
                         f"expected {(params.d, dataset.class_count)}")
    return loss_and_gradient(dataset, params, weights, rng, **kwargs)[1]


class Adam:
    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        """Update ``params`` (list of arrays) in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _epoch_rng(seed: int, epoch: int, stream: int):
    return np.random.default_rng([seed, epoch, stream])


def predict_logits(model: TrainedModel, dataset: Dataset, rng=None) -> np.ndarray:
    if rng is None and model.params.w != -1:
        rng = np.random.default_rng(0)
    xk = propagate(dataset.graph, dataset.features, model.params, model.weights, rng)
    return xk @ model.weights.head


def train(dataset: Dataset, params: ParamSet, config: TrainConfig = TrainConfig(), *,
          weights: WeightStack | None = None, literal_degree: bool = False) -> TrainedModel:
    """Full-batch Adam on the train split with early stopping on validation loss.

    Returns the weights of the epoch with the lowest validation loss.
    Neighbor sampling and dropout draw from generators seeded by
    ``(config.seed, epoch, stream)`` so runs are reproducible.
    """
    start = time.perf_counter()
    if weights is None:
        weights = init_weights(dataset.feature_dim, params.d, params.k, dataset.class_count, config.seed)
    else:
        weights = weights.copy()
    if weights.head.shape != (params.d, dataset.class_count):
        raise ValueError("head shape does not match params/dataset")
    check_layer_shapes(weights.layers, dataset.feature_dim, params)

    opt = Adam(lr=config.learning_rate)
    best = weights.copy()
    best_val = np.inf
    best_epoch = -1
    stale = 0
    history = []
    epoch = 0
    for epoch in range(config.max_epochs):
        loss, grads = loss_and_gradient(
            dataset, params, weights, _epoch_rng(config.seed, epoch, 0), split="train",
            dropout=config.dropout, weight_decay=config.weight_decay, literal_degree=literal_degree)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDiverged(f"non-finite training loss at epoch {epoch} for {params}")
        opt.step(weights.matrices, grads)

        with np.errstate(over="ignore", invalid="ignore"):
            xk = propagate(dataset.graph, dataset.features, params, weights,
                           _epoch_rng(config.seed, epoch, 1), literal_degree=literal_degree)
            val = dataset.mask("val")
            val_loss = _cross_entropy(xk[val] @ weights.head, dataset.labels[val])
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch} for {params}")
        history.append((loss, float(val_loss)))
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            best = weights.copy()
        else:
            stale += 1
            if stale >= config.patience:
                break
    epochs_run = len(history)
    logger.debug("trained %s for %d epochs (best %d, val loss %.4f)", params, epochs_run, best_epoch, best_val)
    return TrainedModel(params, best, time.perf_counter() - start, epochs_run, best_epoch, history)


def evaluate_accuracy(model: TrainedModel, dataset: Dataset, split: str = "val", rng=None) -> float:
    """Fraction of ``split`` nodes whose argmax class equals the label."""
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    mask = dataset.mask(split)
    if not mask.any():
        raise ValueError(f"split {split!r} is empty")
    with np.errstate(over="ignore", invalid="ignore"):
        pred = predict_logits(model, dataset, rng).argmax(axis=1)
    return float(np.mean(pred[mask] == dataset.labels[mask]))


def measure_inference_time(model: TrainedModel, dataset: Dataset, rng=None, *,
                           repeats: int = 5) -> float:
    """Median wall-clock seconds of ``repeats`` full-graph predictions after one warm-up."""
    if rng is None:
        rng = np.random.default_rng(0)
    params, weights = model.params, model.weights
    graph, x0 = dataset.graph, dataset.features
    times = []
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(repeats + 1):
            t0 = time.perf_counter()
            xk = propagate(graph, x0, params, weights, rng)
            (xk @ weights.head).argmax(axis=1)
            if i:
                times.append(time.perf_counter() - t0)
    return max(statistics.median(times), 1e-9)


def estimate_inference_cost(params: ParamSet, dataset: Dataset) -> float:
    """Deterministic stand-in for inference time: floating-point operation count * 1e-9.

    Counts the sparse aggregation, dense transforms and the head.  Used where
    reproducible "timings" matter more than wall-clock fidelity.
    """
    n = dataset.node_count
    deg = np.diff(dataset.graph.row_offsets)
    if params.w == -1:
        nnz = deg.sum()
    else:
        nnz = np.minimum(deg, params.w).sum()  # distinct sampled neighbors, upper bound
    if params.a.self_loop:
        nnz += n
    flops = 0.0
    d_in = dataset.feature_dim
    for _ in range(params.k):
        width = min(d_in, params.d)
        flops += 2.0 * nnz * width + 2.0 * n * d_in * params.d
        if params.l:
            flops += n * params.d
        d_in = params.d
    flops += 2.0 * n * params.d * dataset.class_count
    return flops * 1e-9


def evaluate(model: TrainedModel, dataset: Dataset, *, split: str = "val", seed: int = 0,
             timing: str = "wall") -> EvalResult:
    """Accuracy on ``split`` plus inference time, as consumed by the objective."""
    acc = evaluate_accuracy(model, dataset, split, np.random.default_rng([seed, 2]))
    if timing == "wall":
        secs = measure_inference_time(model, dataset, np.random.default_rng([seed, 3]))
    elif timing == "ops":
        secs = estimate_inference_cost(model.params, dataset)
    else:
        raise ValueError(f"unknown timing mode {timing!r}")
    return EvalResult(acc, secs)


def with_frozen_layers(weights: WeightStack, value: float) -> WeightStack:
    """Copy of ``weights`` with every layer filled with ``value`` and frozen."""
    layers = [np.full_like(W, value) for W in weights.layers]
    return replace(weights, layers=layers, trainable=(False,) * len(layers) + (weights.trainable[-1],))
