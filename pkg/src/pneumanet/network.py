"""The binary CNN classifier: architecture, initialization, loss, optimizer,
early stopping, and the training loop.

Model parameters live in an ordered name -> array dict (float32 by default)
so the same structure serves the optimizer, snapshots, and the on-disk
checkpoint format. Images enter as channel-last (n, h, w, 1) batches in
[0, 1] and are transposed to NCHW internally.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .validation import check_binary_labels, check_image_batch, require, shape_mismatch

POSITIVE_LABEL = "PNEUMONIA"
NEGATIVE_LABEL = "NORMAL"
DECISION_THRESHOLD = 0.5
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
BCE_EPS = 1e-7


@dataclass(frozen=True)
class ConvBlock:
    """One conv -> batchnorm -> relu -> maxpool stage."""

    filters: int
    kernel_size: int = 3
    batchnorm: bool = True
    pool: int = 2


@dataclass(frozen=True)
class CnnArchitecture:
    input_shape: tuple[int, int, int] = (148, 148, 1)
    blocks: tuple[ConvBlock, ...] = (ConvBlock(32), ConvBlock(64))

    def validate(self):
        h, w, c = self.input_shape
        require(h > 0 and w > 0 and c == 1, f"input shape must be (h, w, 1), got {self.input_shape}")
        require(len(self.blocks) > 0, "architecture needs at least one conv block")
        filters = [b.filters for b in self.blocks]
        require(
            all(a <= b for a, b in zip(filters, filters[1:])),
            f"filter counts must be non-decreasing across blocks, got {filters}",
        )
        for blk in self.blocks:
            require(blk.filters > 0, "filter count must be positive")
            require(blk.kernel_size % 2 == 1, "kernel size must be odd (same padding)")
            require(blk.pool >= 1, "pool window must be >= 1")
        fh, fw = self.feature_shape()[1:]
        require(fh >= 1 and fw >= 1, "input too small: spatial dims vanish before the head")
        return self

    def feature_shape(self):
        """(channels, h, w) entering the dense head."""
        h, w, _ = self.input_shape
        c = self.input_shape[2]
        for blk in self.blocks:
            # conv keeps spatial dims (stride 1, same padding)
            c = blk.filters
            if blk.pool > 1:
                h = (h - blk.pool) // blk.pool + 1
                w = (w - blk.pool) // blk.pool + 1
        return c, h, w

    def flat_features(self):
        c, h, w = self.feature_shape()
        return c * h * w


def default_architecture(image_size=148):
    """Two blocks, 32 then 64 filters, 3x3 same-padding convs, batchnorm,
    relu, 2x2 pooling, then flatten -> dense(1) -> sigmoid."""
    return CnnArchitecture(input_shape=(image_size, image_size, 1))


def he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class CnnModel:
    """Architecture plus its parameter and running-statistic tensors."""

    def __init__(self, arch: CnnArchitecture, tensors: dict[str, np.ndarray]):
        self.arch = arch
        self.tensors = tensors

    def trainable_names(self):
        return [k for k in self.tensors if not k.endswith(("running_mean", "running_var"))]

    def parameter_count(self):
        return sum(self.tensors[k].size for k in self.trainable_names())

    def copy_tensors(self):
        return {k: v.copy() for k, v in self.tensors.items()}

    def load_tensors(self, tensors):
        if set(tensors) != set(self.tensors):
            missing = set(self.tensors) - set(tensors)
            extra = set(tensors) - set(self.tensors)
            raise KeyError(f"tensor name mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for k in self.tensors:
            if tensors[k].shape != self.tensors[k].shape:
                raise shape_mismatch(f"tensor {k!r}", self.tensors[k].shape, tensors[k].shape)
        self.tensors = {k: tensors[k].copy() for k in self.tensors}

    def _running(self, i):
        return layers.RunningStats(
            mean=self.tensors[f"block{i}.running_mean"],
            var=self.tensors[f"block{i}.running_var"],
        )

    def forward(self, x_nchw, mode="infer"):
        """Run the network. Returns (probabilities (n,), caches for backward)."""
        t = self.tensors
        h = x_nchw
        caches = []
        for i, blk in enumerate(self.arch.blocks):
            pad = blk.kernel_size // 2
            conv_in = h
            h = layers.conv2d_forward(h, t[f"block{i}.kernels"], t[f"block{i}.bias"], 1, pad)
            bn_cache = None
            if blk.batchnorm:
                h, bn_cache = layers.batchnorm_forward(
                    h, t[f"block{i}.gamma"], t[f"block{i}.beta"], BN_EPS,
                    mode, self._running(i), BN_MOMENTUM,
                )
            act_in = h
            h = layers.activation(h, "relu")
            pool_in_shape, argmax = h.shape, None
            if blk.pool > 1:
                h, argmax = layers.maxpool2d_forward(h, blk.pool, blk.pool)
            caches.append((conv_in, bn_cache, act_in, pool_in_shape, argmax))
        flat = h.reshape(h.shape[0], -1)
        z = layers.dense_forward(flat, t["head.weights"], t["head.bias"])
        p = layers.activation(z, "sigmoid")
        caches.append((flat, h.shape, p))
        return p.ravel(), caches

    def backward(self, caches, d_prob):
        """Backpropagate d(loss)/d(probability) to every trainable tensor."""
        t = self.tensors
        grads = {}
        flat, pre_flat_shape, p = caches[-1]
        dz = (d_prob.reshape(p.shape) * p * (1.0 - p)).astype(flat.dtype)
        head = layers.dense_backward(flat, t["head.weights"], dz)
        grads["head.weights"], grads["head.bias"] = head.param_grads
        dh = head.input_grad.reshape(pre_flat_shape)
        for i in reversed(range(len(self.arch.blocks))):
            blk = self.arch.blocks[i]
            conv_in, bn_cache, act_in, pool_in_shape, argmax = caches[i]
            if blk.pool > 1:
                dh = layers.maxpool2d_backward(argmax, dh, pool_in_shape, blk.pool, blk.pool)
            dh = layers.activation_backward(act_in, "relu", dh)
            if blk.batchnorm:
                bn = layers.batchnorm_backward(bn_cache, dh)
                grads[f"block{i}.gamma"], grads[f"block{i}.beta"] = bn.param_grads
                dh = bn.input_grad
            pad = blk.kernel_size // 2
            conv = layers.conv2d_backward(conv_in, t[f"block{i}.kernels"], dh, 1, pad)
            grads[f"block{i}.kernels"], grads[f"block{i}.bias"] = conv.param_grads
            dh = conv.input_grad
        return grads


def build_model(arch: CnnArchitecture, seed: int, dtype=np.float32) -> CnnModel:
    """Deterministically initialize a model: He-uniform conv/dense weights,
    zero biases, unit gamma, zero beta, fresh running statistics."""
    arch.validate()
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    in_c = arch.input_shape[2]
    for i, blk in enumerate(arch.blocks):
        k = blk.kernel_size
        fan_in = in_c * k * k
        tensors[f"block{i}.kernels"] = he_uniform(rng, (blk.filters, in_c, k, k), fan_in, dtype)
        tensors[f"block{i}.bias"] = np.zeros(blk.filters, dtype=dtype)
        if blk.batchnorm:
            tensors[f"block{i}.gamma"] = np.ones(blk.filters, dtype=dtype)
            tensors[f"block{i}.beta"] = np.zeros(blk.filters, dtype=dtype)
            tensors[f"block{i}.running_mean"] = np.zeros(blk.filters, dtype=dtype)
            tensors[f"block{i}.running_var"] = np.ones(blk.filters, dtype=dtype)
        in_c = blk.filters
    flat = arch.flat_features()
    tensors["head.weights"] = he_uniform(rng, (flat, 1), flat, dtype)
    tensors["head.bias"] = np.zeros(1, dtype=dtype)
    return CnnModel(arch, tensors)


def bce_loss(p, y):
    """Mean binary cross-entropy with the gradient w.r.t. the probabilities.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = np.asarray(p, dtype=np.float64 if np.asarray(p).dtype == np.float64 else np.float32)
    y = np.asarray(y)
    if p.shape != y.shape:
        raise shape_mismatch("probabilities vs labels", p.shape, y.shape)
    check_binary_labels(y.ravel())
    y = y.astype(p.dtype)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    n = pc.size
    loss = float(-np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) / n)
    grad = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n
    return loss, grad.astype(p.dtype)


@dataclass
class AdamState:
    """Bias-corrected Adam over a name -> array parameter dict."""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, np.ndarray], alpha=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        alpha=alpha, beta1=beta1, beta2=beta2, eps=eps, t=0,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One in-place Adam update; increments the step count."""
    state.t += 1
    b1c = 1.0 - state.beta1 ** state.t
    b2c = 1.0 - state.beta2 ** state.t
    for k, g in grads.items():
        if k not in params:
            raise KeyError(f"gradient for unknown parameter {k!r}")
        if g.shape != params[k].shape:
            raise shape_mismatch(f"gradient {k!r}", params[k].shape, g.shape)
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= (state.alpha * (m / b1c) / (np.sqrt(v / b2c) + state.eps)).astype(
            params[k].dtype
        )


@dataclass
class EarlyStopping:
    """Stop when validation accuracy has not improved for `patience` epochs,
    keeping a snapshot of the best parameters seen."""

    patience: int = 5
    best_value: float = -math.inf
    best_params_snapshot: dict[str, np.ndarray] | None = None
    best_epoch: int = 0
    epochs_since_improve: int = 0

    def update(self, value: float, tensors: dict[str, np.ndarray], epoch: int) -> bool:
        """Record one epoch's monitored value; returns True when training
        should stop."""
        if value > self.best_value:
            self.best_value = value
            self.best_params_snapshot = {k: v.copy() for k, v in tensors.items()}
            self.best_epoch = epoch
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
        return self.epochs_since_improve >= self.patience


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


class TrainingHistory:
    """Per-epoch loss/accuracy curves, exportable as CSV."""

    def __init__(self):
        self.rows: list[EpochStats] = []
        self.best_epoch: int = 0
        self.stopped_early: bool = False

    def append(self, stats: EpochStats):
        self.rows.append(stats)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for r in self.rows:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc),
                                 repr(r.val_loss), repr(r.val_acc)])


def to_nchw(batch_hwc):
    return np.transpose(batch_hwc, (0, 3, 1, 2))


def evaluate_probs(model: CnnModel, X_hwc, batch_size=64):
    """Infer-mode probabilities for a channel-last batch."""
    X = check_image_batch(X_hwc, model.arch.input_shape[0])
    probs = np.empty(X.shape[0], dtype=np.float64)
    for start in range(0, X.shape[0], batch_size):
        stop = min(start + batch_size, X.shape[0])
        p, _ = model.forward(to_nchw(X[start:stop]), mode="infer")
        probs[start:stop] = p
    return probs


def train(model: CnnModel, train_set, val_set, epochs, batch_size, early_stop=None,
          seed=0, stop_train_acc=None):
    """Train with Adam on shuffled minibatches; the model is left holding the
    parameters from the epoch with the best validation accuracy.

    train_set/val_set are (X, y) pairs of channel-last image batches and
    binary labels. stop_train_acc, when set, ends training as soon as an
    epoch's training accuracy reaches that target. Returns the
    TrainingHistory.
    """
    X_train, y_train = train_set
    X_val, y_val = val_set
    size = model.arch.input_shape[0]
    X_train = check_image_batch(X_train, size)
    X_val = check_image_batch(X_val, size)
    y_train = check_binary_labels(y_train, X_train.shape[0])
    y_val = check_binary_labels(y_val, X_val.shape[0])
    require(X_train.shape[0] >= 2, "training set needs at least 2 images")
    require(X_val.shape[0] > 0, "validation set must be non-empty")
    require(batch_size >= 2, f"batch size must be >= 2 for batchnorm, got {batch_size}")

    rng = np.random.default_rng(seed)
    trainable = {k: model.tensors[k] for k in model.trainable_names()}
    opt = init_adam(trainable)
    history = TrainingHistory()
    best = EarlyStopping(patience=epochs + 1) if early_stop is None else early_stop

    for epoch in range(1, epochs + 1):
        order = rng.permutation(X_train.shape[0])
        total_loss = 0.0
        total_correct = 0
        total_seen = 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            if len(idx) < 2:
                continue  # batchnorm needs at least 2 samples
            xb = to_nchw(X_train[idx])
            yb = y_train[idx]
            p, caches = model.forward(xb, mode="train")
            loss, d_p = bce_loss(p, yb.astype(p.dtype))
            grads = model.backward(caches, d_p)
            adam_step(trainable, grads, opt)
            total_loss += loss * len(idx)
            total_correct += int(((p >= DECISION_THRESHOLD).astype(int) == yb).sum())
            total_seen += len(idx)
        train_loss = total_loss / max(total_seen, 1)
        train_acc = total_correct / max(total_seen, 1)

        val_p = evaluate_probs(model, X_val)
        val_loss, _ = bce_loss(val_p, y_val.astype(val_p.dtype))
        val_acc = float(((val_p >= DECISION_THRESHOLD).astype(int) == y_val).mean())
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        if best.update(val_acc, model.tensors, epoch):
            history.stopped_early = True
            break
        if stop_train_acc is not None and train_acc >= stop_train_acc:
            break

    if best.best_params_snapshot is not None:
        model.load_tensors(best.best_params_snapshot)
        history.best_epoch = best.best_epoch
    return history


def predict(model: CnnModel, image) -> float:
    """Probability of the positive class for one preprocessed (h, w, 1) image."""
    image = np.asarray(image)
    size = model.arch.input_shape[0]
    if image.shape != (size, size, 1):
        raise shape_mismatch("image", (size, size, 1), image.shape)
    p, _ = model.forward(to_nchw(image[None, ...]), mode="infer")
    return float(p[0])


def label_for(probability: float) -> str:
    """Threshold rule; the tie at exactly 0.5 goes to the positive class."""
    return POSITIVE_LABEL if probability >= DECISION_THRESHOLD else NEGATIVE_LABEL
