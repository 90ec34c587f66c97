"""Training procedures: supervised, contrastive pretraining, fine-tuning.

All three loops are deterministic given (data, config, seed): shuffling
and augmentation draws come from generators seeded here, and dropout from
the network's own generator (seeded at build time).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..augment import make_views
from .losses import cross_entropy, info_nce
from .network import Checkpoint, Network, checkpoint_from
from .optim import make_optimizer


class TrainingDiverged(Exception):
    def __init__(self, epoch):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    patience: int = 5
    min_delta: float = 0.001
    max_epochs: int = 500
    temperature: float = 0.07
    optimizer: str = "adam"

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.patience,
               self.max_epochs, self.temperature) <= 0:
            raise ValueError("train config values must be positive")
        if self.min_delta < 0:
            raise ValueError("min_delta must be nonnegative")


class EarlyStopper:
    """Patience-based stopping: halt after `patience` epochs without an
    improvement of more than min_delta."""

    def __init__(self, patience, min_delta, maximize=False):
        self.patience = patience
        self.min_delta = min_delta
        self.maximize = maximize
        self.best = None
        self.stale = 0

    def update(self, value) -> bool:
        """Record an epoch metric; returns True when training should stop."""
        improved = self.best is None or (
            value > self.best + self.min_delta if self.maximize
            else value < self.best - self.min_delta
        )
        if improved:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _as_batch_input(x):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 3:
        x = x[:, None, :, :]
    return x


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_supervised(network: Network, train_x, train_y, val_x, val_y,
                     cfg: TrainConfig, seed: int = 0) -> Checkpoint:
    """Minimize cross-entropy with early stopping on validation loss.

    Returns the checkpoint with the best validation loss seen.
    """
    train_x = _as_batch_input(train_x)
    val_x = _as_batch_input(val_x)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ValueError("train and validation sets must be nonempty")
    rng = np.random.default_rng(seed)
    opt = make_optimizer(cfg.optimizer, network.trainable_parameters(), cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    best = None
    for epoch in range(cfg.max_epochs):
        for idx in _batches(len(train_x), cfg.batch_size, rng):
            logits = network.forward(train_x[idx], train=True)
            loss, grad = cross_entropy(logits, train_y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            network.backward(grad)
            opt.step(network.gradients())
        val_logits = network.forward(val_x, train=False)
        val_loss, _ = cross_entropy(val_logits, val_y)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch)
        history.append(val_loss)
        if best is None or val_loss < best[0]:
            best = (val_loss, checkpoint_from(network))
        if stopper.update(val_loss):
            break
    ckpt = best[1]
    ckpt.metadata.update({
        "seed": seed, "epoch": len(history), "val_loss_history": history,
        "best_val_loss": best[0],
    })
    return ckpt


def pretrain_simclr(network: Network, samples, pair, cfg: TrainConfig,
                    resolution: int, window: float, seed: int = 0,
                    patience: int = 3) -> Checkpoint:
    """Contrastive pretraining on unlabeled packet series.

    Every mini-batch of B samples becomes a double batch of 2B augmented
    views; stops when the epoch-average top-5 agreement stops improving.
    """
    if network.config.mode != "simclr_pretrain":
        raise ValueError("network mode must be simclr_pretrain")
    rng = np.random.default_rng(seed)
    aug_rng = np.random.default_rng(rng.integers(2**63))
    opt = make_optimizer(cfg.optimizer, network.trainable_parameters(), cfg.learning_rate)
    stopper = EarlyStopper(patience, 0.0, maximize=True)
    history = []
    best = None
    samples = list(samples)
    for epoch in range(cfg.max_epochs):
        agreements = []
        for idx in _batches(len(samples), cfg.batch_size, rng):
            if len(idx) < 2:
                continue
            views = []
            for j in idx:
                a, b = make_views(samples[j], pair, resolution, window, aug_rng)
                views.append(a)
                views.append(b)
            batch = _as_batch_input(np.stack(views))
            proj = network.forward(batch, train=True)
            loss, grad, agreement = info_nce(proj, cfg.temperature)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            network.backward(grad)
            opt.step(network.gradients())
            agreements.append(agreement)
        epoch_agreement = float(np.mean(agreements))
        history.append(epoch_agreement)
        if best is None or epoch_agreement > best[0]:
            best = (epoch_agreement, checkpoint_from(network))
        if stopper.update(epoch_agreement):
            break
    ckpt = best[1]
    ckpt.metadata.update({
        "seed": seed, "epoch": len(history), "top5_history": history,
        "best_top5": best[0],
    })
    return ckpt


def finetune(pretrained: Checkpoint, x, y, num_classes: int,
             cfg: TrainConfig, seed: int = 0) -> Checkpoint:
    """Train only a fresh final classifier on a frozen pretrained backbone.

    Early stopping watches the training loss (few-shot regime has no
    validation set to spare).
    """
    if pretrained.config.mode != "simclr_pretrain":
        raise ValueError("finetune requires a simclr_pretrain checkpoint")
    from .network import NetworkConfig, build_network

    config = NetworkConfig(
        flowpic_dim=pretrained.config.flowpic_dim,
        num_classes=num_classes,
        with_dropout=False,
        mode="finetune",
        projection_dim=pretrained.config.projection_dim,
    )
    network = build_network(config, seed=seed)
    backbone = {
        name: arr for name, arr in pretrained.parameters.items()
        if name.split(".")[0] in ("conv1", "conv2", "fc1")
    }
    network.set_parameters(backbone)

    x = _as_batch_input(x)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    opt = make_optimizer(cfg.optimizer, network.trainable_parameters(), cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience, cfg.min_delta)
    history = []
    for epoch in range(cfg.max_epochs):
        losses = []
        for idx in _batches(len(x), cfg.batch_size, rng):
            logits = network.forward(x[idx], train=True)
            loss, grad = cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            network.backward(grad)
            opt.step(network.gradients())
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if stopper.update(history[-1]):
            break
    ckpt = checkpoint_from(network)
    ckpt.metadata.update({
        "seed": seed, "epoch": len(history), "train_loss_history": history,
    })
    return ckpt


def evaluate(network: Network, x) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward pass; argmax ties break to the lowest class index."""
    logits = network.forward(_as_batch_input(x), train=False)
    return logits.argmax(axis=1), logits
