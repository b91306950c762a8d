"""Minibatch training with SGD/Adam and final-hidden-layer dropout."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import network as nn
from .network import Network


class DivergedTrainingError(ArithmeticError):
    def __init__(self, epoch, step):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class DropoutConfig:
    """Dropout on the weight matrix of the final hidden (dense) layer.

    mode "weight_mask" draws an independent Bernoulli entry per weight;
    "unit_mask" shares one mask entry per output unit (column).  Masks are
    redrawn every training step and never applied at evaluation time.
    """

    rate: float = 0.0
    mode: str = "weight_mask"
    rescale: bool = False

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.mode not in ("weight_mask", "unit_mask"):
            raise ValueError(f"unknown dropout mode {self.mode!r}")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid training hyperparameters")


def _draw_mask(rng, shape, config, dtype):
    if config.mode == "weight_mask":
        mask = (rng.random(shape) >= config.rate).astype(dtype)
    else:
        cols = (rng.random(shape[-1]) >= config.rate).astype(dtype)
        mask = np.broadcast_to(cols, shape).copy()
    if config.rescale:
        mask = mask / (1.0 - config.rate)
    return mask


def accuracy(network: Network, points: np.ndarray, labels: np.ndarray, batch: int = 512) -> float:
    """Fraction of resolved predictions matching integer labels."""
    hits = 0
    for lo in range(0, len(points), batch):
        pred = nn.predict_batch(network, points[lo : lo + batch])
        hits += int(np.sum(pred == labels[lo : lo + batch]))
    return hits / len(points)


def train(
    network: Network,
    dataset,
    train_config: TrainConfig,
    dropout_config: Optional[DropoutConfig] = None,
):
    """Train a copy of the network; returns (trained network, history).

    History is a list of per-epoch dicts with mean minibatch loss and
    end-of-epoch training accuracy.  Shuffling and dropout masks are
    deterministic functions of the config seed.
    """
    points, labels_onehot = dataset.points, dataset.labels
    m = len(points)
    if m == 0:
        raise ValueError("empty dataset")
    if train_config.batch_size > m:
        raise ValueError("batch_size exceeds dataset size")
    labels = np.argmax(labels_onehot, axis=-1)

    net = network.copy()
    dtype = net.dtype
    x_all = points.astype(dtype)
    y_all = labels_onehot.astype(dtype)
    if len(net.input_shape) == 3:
        x_all = x_all.reshape((-1,) + net.input_shape)

    use_dropout = dropout_config is not None and dropout_config.rate > 0.0
    mask_layer = nn.final_hidden_dense_index(net) if use_dropout else None
    mask_rng = np.random.Generator(
        np.random.Philox(key=(train_config.seed & ((1 << 64) - 1)) ^ 0xD0)
    )

    adam_m = [np.zeros_like(w) if w is not None else None for w in net.weights]
    adam_v = [np.zeros_like(w) if w is not None else None for w in net.weights]
    adam_mb = [np.zeros_like(b) if b is not None else None for b in net.biases]
    adam_vb = [np.zeros_like(b) if b is not None else None for b in net.biases]
    t = 0

    history = []
    for epoch in range(train_config.epochs):
        perm_rng = np.random.Generator(
            np.random.Philox(key=((train_config.seed & ((1 << 64) - 1)) << 32) + epoch)
        )
        order = perm_rng.permutation(m)
        losses = []
        for step, lo in enumerate(range(0, m - train_config.batch_size + 1, train_config.batch_size)):
            idx = order[lo : lo + train_config.batch_size]
            mask = None
            if use_dropout:
                mask = _draw_mask(mask_rng, net.weights[mask_layer].shape, dropout_config, dtype)
            loss, dws, dbs, _, _ = nn.backprop(net, x_all[idx], y_all[idx], mask, mask_layer)
            if not np.isfinite(loss):
                raise DivergedTrainingError(epoch, step)
            losses.append(loss)
            t += 1
            for i in range(len(net.specs)):
                if dws[i] is None:
                    continue
                if train_config.optimizer == "sgd":
                    net.weights[i] -= train_config.learning_rate * dws[i]
                    net.biases[i] -= train_config.learning_rate * dbs[i]
                else:
                    _adam_update(net.weights[i], dws[i], adam_m[i], adam_v[i], t, train_config)
                    _adam_update(net.biases[i], dbs[i], adam_mb[i], adam_vb[i], t, train_config)
        history.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)) if losses else float("nan"),
                "accuracy": accuracy(net, x_all, labels),
            }
        )
    return net, history


def _adam_update(param, grad, m, v, t, cfg):
    m *= cfg.beta1
    m += (1 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1 - cfg.beta2) * grad * grad
    mhat = m / (1 - cfg.beta1**t)
    vhat = v / (1 - cfg.beta2**t)
    param -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps_adam)
