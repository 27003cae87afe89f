"""The scoring function: a fully-connected network with hand-written
forward/backward passes, plus its mini-batch training loop.

Layer widths follow the [d, 2d, 4d, ceil(d/2), 1] pattern with a ReLU after
every layer. The final ReLU is kept for the ranking losses and dropped for
mse, where negative targets must be reachable. One "batch" is a set of
batch_size weeks; each week is a full ranked list and per-list losses and
gradients are averaged over the batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, FactorPanel, RankedBatch, WindowPlan, build_ranked_batch
from .losses import LossSpec, evaluate_loss

__all__ = [
    "ScoringNet",
    "TrainConfig",
    "AdamState",
    "SgdState",
    "TrainingDivergenceError",
    "NonFiniteLossError",
    "init_network",
    "forward",
    "forward_cached",
    "backward",
    "list_loss_and_grad",
    "make_optimizer",
    "train_step",
    "train",
    "score_week",
    "save_checkpoint",
    "load_checkpoint",
    "load_checkpoint_norm",
]


class NonFiniteLossError(RuntimeError):
    """A single batch produced a non-finite loss; the update was skipped."""


class TrainingDivergenceError(RuntimeError):
    """Ten consecutive batches produced non-finite losses."""


@dataclass
class ScoringNet:
    """Shared scoring function: the same parameters map every stock's
    factor vector to a scalar."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    final_relu: bool
    seed: int

    def copy(self) -> "ScoringNet":
        return ScoringNet(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            final_relu=self.final_relu,
            seed=self.seed,
        )

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec
    batch_size: int = 32
    total_batches: int = 1000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    final_relu: bool = True
    seed: int = 0
    reverse_labels: bool = False
    levels: int = 10
    patience: int | None = None  # stop after this many batches without improvement

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_batches < 0:
            raise ValueError("total_batches must be >= 0")


def init_network(feature_dim: int, seed: int, final_relu: bool = True) -> ScoringNet:
    """Widths [d, 2d, 4d, ceil(d/2), 1]; weights uniform in
    +-sqrt(6/(fan_in+fan_out)), biases zero. Deterministic per seed.

    Biases start slightly positive (0.01 hidden, 0.5 at the output when the
    final ReLU is on): an all-zero start drops whole layers dead at small
    widths (non-negative activations against one bad weight sign clamp the
    entire cross-section to a constant, and no gradient ever flows). The
    ranking losses are shift invariant, so the operating point is free.
    """
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    d = feature_dim
    dims = [d, 2 * d, 4 * d, (d + 1) // 2, 1]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.full(fan_out, 0.01))
    biases[-1][:] = 0.5 if final_relu else 0.0
    return ScoringNet(dims, weights, biases, final_relu, seed)


def forward_cached(net: ScoringNet, features: np.ndarray):
    """Scores plus the per-layer inputs and pre-activations backward needs."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.layer_dims[0]:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match network input {net.layer_dims[0]}"
        )
    inputs, preacts = [], []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        if i < last or net.final_relu:
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h[:, 0], (inputs, preacts)


def forward(net: ScoringNet, features: np.ndarray) -> np.ndarray:
    """One score per input row, order preserving."""
    scores, _ = forward_cached(net, features)
    return scores


def backward(net: ScoringNet, cache, dscores: np.ndarray):
    """Parameter gradients from dLoss/dscore via the chain rule.

    ReLU subgradient at exactly 0 is taken as 0.
    """
    inputs, preacts = cache
    last = len(net.weights) - 1
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    delta = np.asarray(dscores, dtype=float)[:, None]
    for i in range(last, -1, -1):
        if i < last or net.final_relu:
            delta = delta * (preacts[i] > 0.0)
        grad_w[i] = inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
    return grad_w, grad_b


def list_loss_and_grad(net: ScoringNet, scores: np.ndarray, batch: RankedBatch,
                       spec: LossSpec, reverse_labels: bool = False):
    """Per-list loss and dLoss/dscore in *row* order.

    The loss sees the scores in truth order (reversed when training a
    bottom-up model); the returned gradient is scattered back to the rows
    the network produced.
    """
    order = batch.truth_order[::-1] if reverse_labels else batch.truth_order
    sorted_scores = scores[order]
    if spec.family == "mse":
        res = evaluate_loss(spec, sorted_scores, batch.returns[order])
    else:
        res = evaluate_loss(spec, sorted_scores)
    dscores = np.zeros_like(scores)
    dscores[order] = res.gradient
    return res.value, dscores


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass
class SgdState:
    lr: float

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return AdamState(lr=lr)
    if name == "sgd":
        return SgdState(lr=lr)
    raise ValueError(f"unknown optimizer: {name!r}")


def train_step(net: ScoringNet, batch: list[RankedBatch], spec: LossSpec,
               optimizer, reverse_labels: bool = False) -> float:
    """One optimizer update from a batch of ranked lists.

    Lists are stacked into a single forward/backward pass; losses and
    parameter gradients are averaged over the batch. Raises
    NonFiniteLossError (before touching the parameters) when the averaged
    loss is not finite.
    """
    if not batch:
        raise ValueError("empty batch")
    feats = np.vstack([b.features for b in batch])
    scores, cache = forward_cached(net, feats)
    total = 0.0
    dscores = np.empty_like(scores)
    pos = 0
    for b in batch:
        n = b.list_length
        value, ds = list_loss_and_grad(net, scores[pos : pos + n], b, spec, reverse_labels)
        total += value
        dscores[pos : pos + n] = ds
        pos += n
    mean_loss = total / len(batch)
    if not np.isfinite(mean_loss):
        raise NonFiniteLossError(f"batch loss is not finite: {mean_loss}")
    grad_w, grad_b = backward(net, cache, dscores / len(batch))
    params, grads = [], []
    for w, b, gw, gb in zip(net.weights, net.biases, grad_w, grad_b):
        params += [w, b]
        grads += [gw, gb]
    optimizer.update(params, grads)
    return mean_loss


def train(panel: FactorPanel, window: WindowPlan, config: TrainConfig,
          access_log: list | None = None) -> ScoringNet:
    """Train a fresh network on the window's training weeks.

    One RankedBatch per training week; week order reshuffles with the
    seeded RNG whenever the pool is exhausted, until exactly total_batches
    batches have been consumed. Training never reads a week outside
    train_range (pass access_log to record every index touched).
    """
    lo, hi = window.train_range
    if hi <= lo:
        raise DataError("empty train range")
    even = config.loss.family in ("listfold", "naive_pt")
    lists = []
    for idx in range(lo, hi):
        if access_log is not None:
            access_log.append(idx)
        lists.append(
            build_ranked_batch(panel, panel.dates[idx], levels=config.levels, require_even=even)
        )
    net = init_network(panel.n_factors, config.seed, final_relu=config.final_relu)
    if config.total_batches == 0:
        return net
    optimizer = make_optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    queue: list[int] = []
    consecutive_bad = 0
    best = np.inf
    stale = 0
    for _ in range(config.total_batches):
        while len(queue) < config.batch_size:
            queue.extend(rng.permutation(len(lists)).tolist())
        picks, queue = queue[: config.batch_size], queue[config.batch_size :]
        try:
            loss = train_step(net, [lists[i] for i in picks], config.loss, optimizer,
                              reverse_labels=config.reverse_labels)
        except NonFiniteLossError:
            consecutive_bad += 1
            if consecutive_bad >= 10:
                raise TrainingDivergenceError(
                    "loss non-finite for 10 consecutive batches; reduce the learning rate"
                ) from None
            continue
        consecutive_bad = 0
        if config.patience is not None:
            if loss < best - 1e-12:
                best = loss
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return net


def score_week(net: ScoringNet, panel: FactorPanel, week: str) -> np.ndarray:
    """Scores aligned to panel.stocks for the given week."""
    feats = panel.week_features(week)
    return forward(net, feats)


def config_digest(config: TrainConfig) -> str:
    text = repr(
        (
            config.loss.family,
            None if config.loss.transform is None else config.loss.transform.kind,
            config.batch_size,
            config.total_batches,
            config.learning_rate,
            config.optimizer,
            config.final_relu,
            config.seed,
            config.reverse_labels,
            config.levels,
            config.patience,
        )
    )
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_checkpoint(net: ScoringNet, path, config_hash: str = "",
                    norm_params=None) -> None:
    """Flat .npz of layer dims and row-major parameter arrays; loading
    reproduces forward outputs bit identically. When the model was trained
    on min-max normalized factors, pass the fitted (min, max) pair so
    scoring a raw panel later applies the same mapping."""
    payload = {
        "layer_dims": np.asarray(net.layer_dims, dtype=np.int64),
        "final_relu": np.asarray([int(net.final_relu)], dtype=np.int64),
        "seed": np.asarray([net.seed], dtype=np.int64),
        "config_hash": np.asarray([config_hash]),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    if norm_params is not None:
        payload["norm_min"], payload["norm_max"] = norm_params
    np.savez(path, **payload)


def load_checkpoint(path) -> ScoringNet:
    with np.load(path, allow_pickle=False) as blob:
        dims = blob["layer_dims"].tolist()
        n_layers = len(dims) - 1
        weights = [blob[f"w{i}"] for i in range(n_layers)]
        biases = [blob[f"b{i}"] for i in range(n_layers)]
        return ScoringNet(
            layer_dims=dims,
            weights=weights,
            biases=biases,
            final_relu=bool(blob["final_relu"][0]),
            seed=int(blob["seed"][0]),
        )


def load_checkpoint_norm(path):
    """The (min, max) arrays stored with the checkpoint, or None."""
    with np.load(path, allow_pickle=False) as blob:
        if "norm_min" in blob:
            return blob["norm_min"], blob["norm_max"]
    return None
