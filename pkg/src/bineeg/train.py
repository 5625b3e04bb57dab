"""Training loop: binarized forward, surrogate-gradient backward, Adam updates.

Each step runs the network in train mode (batch statistics in the
normalization layers), takes cross-entropy on the softmax output, and
backpropagates with the straight-through estimator at every sign site. The
optimizer updates the latent full-precision weights, which are then clamped
to [-1, 1]; binarization only ever happens in the forward pass.

Deterministic for a fixed seed under serial execution.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import bits, data, metrics
from .errors import InvalidDataset, TrainingDiverged
from .layers import cross_entropy_batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float
    val_auc: float
    seconds: float

    def log_line(self):
        return f"{self.epoch}\t{self.loss:.6f}\t{self.val_auc:.6f}\t{self.seconds:.3f}"


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    steps: int = 0


class Adam:
    """Adaptive moment estimation over the model's named parameters."""

    def __init__(self, model, cfg):
        self.lr = cfg.learning_rate
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.eps = cfg.adam_eps
        self.t = 0
        self.params = model.named_params()
        self.m = {name: np.zeros_like(arr) for name, arr, _ in self.params}
        self.v = {name: np.zeros_like(arr) for name, arr, _ in self.params}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, arr, is_latent in self.params:
            g = grads.get(name)
            if g is None:
                continue
            g = g.astype(arr.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            update = (self.lr * (m / bc1)) / (np.sqrt(v / bc2) + self.eps)
            arr -= update.astype(arr.dtype, copy=False)
            if is_latent:
                bits.clip_latent_array(arr, out=arr)


def split_validation(windows, fraction):
    """Per class, the last `fraction` of windows by time becomes validation.

    Chronological splitting keeps overlapping preictal windows from leaking
    across the boundary.
    """
    train, val = [], []
    for label in (data.INTERICTAL, data.PREICTAL):
        group = sorted((w for w in windows if w.label == label),
                       key=lambda w: (w.recording_id, w.start_s))
        n_val = int(round(len(group) * fraction)) if fraction > 0 else 0
        cut = len(group) - n_val
        train.extend(group[:cut])
        val.extend(group[cut:])
    return train, val


def stack_batch(batch):
    xb = np.stack([w.data.data for w in batch]).astype(np.float32, copy=False)
    labels = np.array([w.label for w in batch], dtype=np.int64)
    return xb, labels


def score_windows(model, windows, batch=64):
    """Infer-mode preictal probabilities; returns ScoredWindow list."""
    scored = []
    for lo in range(0, len(windows), batch):
        chunk = windows[lo : lo + batch]
        xb, _ = stack_batch(chunk)
        probs = model.forward_batch(xb, mode="infer")
        for w, p in zip(chunk, probs[:, 1]):
            scored.append(metrics.ScoredWindow(w.recording_id, w.start_s, w.label, float(p)))
    return scored


def evaluate_epoch(model, holdout):
    """Window-level AUC of infer-mode scores on a holdout set."""
    if not holdout:
        raise InvalidDataset("holdout is empty")
    scored = score_windows(model, holdout)
    return metrics.roc_auc([s.score for s in scored], [s.label for s in scored])


def train(model, windows, cfg, log=None):
    """Run the full training loop; returns (model, TrainHistory).

    `log` is called with one tab-separated line per epoch:
    epoch<TAB>loss<TAB>val_auc<TAB>seconds.
    """
    train_windows, val_windows = split_validation(windows, cfg.validation_fraction)
    val_classes = {w.label for w in val_windows}
    optimizer = Adam(model, cfg)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        hits = 0
        seen = 0
        for bi, batch in enumerate(data.balanced_batches(
                train_windows, batch_size=cfg.batch_size, seed=cfg.seed, epoch=epoch)):
            xb, labels = stack_batch(batch)
            probs, caches = model.forward_batch(xb, mode="train", collect=True)
            loss = cross_entropy_batch(probs, labels)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, bi, loss)
            onehot = np.zeros_like(probs)
            onehot[np.arange(len(labels)), labels] = 1.0
            dprobs = -(onehot / np.maximum(probs, 1e-12)) / len(labels)
            grads = model.backward_batch(caches, dprobs.astype(np.float32))
            optimizer.step(grads)
            model.invalidate_caches()
            losses.append(loss)
            hits += int((probs.argmax(axis=1) == labels).sum())
            seen += len(labels)
            history.steps += 1
        if len(val_classes) == 2:
            val_auc = evaluate_epoch(model, val_windows)
        else:
            val_auc = float("nan")
        stats = EpochStats(
            epoch=epoch,
            loss=float(np.mean(losses)) if losses else float("nan"),
            train_accuracy=hits / seen if seen else float("nan"),
            val_auc=val_auc,
            seconds=time.perf_counter() - t0,
        )
        history.epochs.append(stats)
        if log is not None:
            log(stats.log_line())
    return model, history
