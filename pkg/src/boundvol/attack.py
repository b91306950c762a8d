"""Distance-to-boundary probes: FGSM, flip search, segment bisection."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import network as nn
from .network import Network


class InvalidPairError(ValueError):
    """Segment endpoints share a (resolved) label."""


@dataclass(frozen=True)
class AttackConfig:
    """Grid of l-infinity radii probed in ascending order.

    zero-gradient points never flip: they count as "no adversarial found"
    at every radius and are tallied separately by the volume estimators.
    """

    epsilon_grid: tuple
    label_policy: str = "predicted"

    def __post_init__(self):
        grid = tuple(float(e) for e in self.epsilon_grid)
        object.__setattr__(self, "epsilon_grid", grid)
        if not grid:
            raise ValueError("empty epsilon grid")
        if any(e <= 0 for e in grid) or any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("epsilon grid must be strictly increasing and positive")
        if self.label_policy not in ("predicted", "provided"):
            raise ValueError(f"unknown label policy {self.label_policy!r}")


@dataclass
class AttackOutcome:
    flipped: bool
    min_flip_epsilon: Optional[float]
    adversarial_point: Optional[np.ndarray]
    original_label: int
    adversarial_label: Optional[int]
    zero_gradient: bool = False


@dataclass
class BoundaryPoint:
    point: np.ndarray
    source_pair: tuple
    gap_bound: float


def default_epsilon_grid(epsilon_target: float, steps: int = 20) -> tuple:
    """Geometric grid from epsilon_target/10 up to epsilon_target."""
    return tuple(np.geomspace(epsilon_target / 10, epsilon_target, steps))


def fgsm_step(network: Network, x: np.ndarray, y_onehot: np.ndarray, epsilon: float) -> np.ndarray:
    """x + epsilon * sign(input gradient of the loss); sign(0) = 0."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    _, grad, _ = nn.loss_and_input_grad(network, x, y_onehot)
    return np.asarray(x, dtype=network.dtype) + network.dtype(epsilon) * np.sign(grad)


def min_flip_epsilon(network: Network, x: np.ndarray, config: AttackConfig,
                     label: Optional[int] = None) -> AttackOutcome:
    """Smallest grid radius whose FGSM step changes the resolved label.

    The loss gradient is evaluated once at x; each grid radius reuses its
    sign.  With policy "predicted" the attacked label is the resolved
    prediction at x.
    """
    x = np.asarray(x, dtype=network.dtype)
    if config.label_policy == "predicted" or label is None:
        label = nn.resolve_label(nn.predict(network, x))
    flat = x.reshape(-1)
    eps_arr, adv_labels, zero_grad = _flip_scan(network, flat[None], np.array([label]),
                                                config.epsilon_grid)
    if np.isnan(eps_arr[0]):
        return AttackOutcome(False, None, None, label, None, bool(zero_grad[0]))
    eps = float(eps_arr[0])
    y = np.zeros(network.n_outputs, dtype=network.dtype)
    y[label] = 1.0
    adv = fgsm_step(network, x, y, eps)
    return AttackOutcome(True, eps, adv, label, int(adv_labels[0]), False)


def _flip_scan(network: Network, x_batch: np.ndarray, labels: np.ndarray,
               grid: Sequence[float]):
    """Batched flip search over a shared epsilon grid.

    Returns (min_flip_eps, flip_labels, zero_grad) arrays; min_flip_eps is
    NaN where no grid radius flips, flip_labels is -1 there.
    """
    grads = nn.input_grad_batch(network, x_batch, labels)
    signs = np.sign(grads.reshape(len(x_batch), -1))
    zero_grad = ~np.any(signs != 0, axis=1)
    eps_out = np.full(len(x_batch), np.nan)
    lab_out = np.full(len(x_batch), -1, dtype=int)
    open_idx = np.flatnonzero(~zero_grad)
    for eps in grid:
        if len(open_idx) == 0:
            break
        adv = x_batch[open_idx] + network.dtype(eps) * signs[open_idx]
        new_labels = nn.predict_batch(network, adv)
        flipped = new_labels != labels[open_idx]
        hit = open_idx[flipped]
        eps_out[hit] = eps
        lab_out[hit] = new_labels[flipped]
        open_idx = open_idx[~flipped]
    return eps_out, lab_out, zero_grad


def bisect_boundary_point(network: Network, x: np.ndarray, x_prime: np.ndarray,
                          alpha: int = 10) -> BoundaryPoint:
    """Midpoint bisection of the segment [x, x'] toward the label change.

    The endpoints must carry different resolved labels.  After alpha
    midpoint evaluations the bracketing segment has length
    d(x, x')/2^alpha; the returned point is its midpoint.
    """
    x = np.asarray(x, dtype=network.dtype)
    x_prime = np.asarray(x_prime, dtype=network.dtype)
    la = nn.resolve_label(nn.predict(network, x))
    lb = nn.resolve_label(nn.predict(network, x_prime))
    if la == lb:
        raise InvalidPairError(f"both endpoints predict label {la}")
    lo, hi = 0.0, 1.0
    for _ in range(alpha):
        mid = 0.5 * (lo + hi)
        lm = nn.resolve_label(nn.predict(network, x + network.dtype(mid) * (x_prime - x)))
        if lm == la:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    gap = float(np.max(np.abs(x_prime - x))) / 2**alpha
    return BoundaryPoint(x + network.dtype(t) * (x_prime - x), (None, None), gap)


def bisect_boundary_points_batch(network: Network, xs: np.ndarray, xps: np.ndarray,
                                 alpha: int = 10) -> np.ndarray:
    """Vectorized bisection over many segments; same contract per row."""
    xs = xs.astype(network.dtype)
    xps = xps.astype(network.dtype)
    la = nn.predict_batch(network, xs)
    lb = nn.predict_batch(network, xps)
    if np.any(la == lb):
        raise InvalidPairError("some endpoint pairs share a resolved label")
    lo = np.zeros(len(xs), dtype=network.dtype)
    hi = np.ones(len(xs), dtype=network.dtype)
    for _ in range(alpha):
        mid = 0.5 * (lo + hi)
        pts = xs + mid[:, None] * (xps - xs)
        lm = nn.predict_batch(network, pts)
        same = lm == la
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = 0.5 * (lo + hi)
    return xs + t[:, None] * (xps - xs)


def sample_class_pairs(dataset, count: int, seed: int):
    """Uniform sample of (x, x') index pairs with different labels.

    Rejection-samples uniform index pairs; deterministic given seed.
    """
    labels = np.argmax(dataset.labels, axis=-1)
    if len(np.unique(labels)) < 2:
        raise ValueError("dataset has a single class; no opposite-label pairs")
    rng = np.random.Generator(np.random.Philox(key=(seed & ((1 << 64) - 1)) ^ 0xCB))
    m = len(labels)
    pairs = []
    while len(pairs) < count:
        need = count - len(pairs)
        i = rng.integers(0, m, size=2 * need + 8)
        j = rng.integers(0, m, size=2 * need + 8)
        ok = labels[i] != labels[j]
        pairs.extend(zip(i[ok].tolist(), j[ok].tolist()))
    return pairs[:count]
