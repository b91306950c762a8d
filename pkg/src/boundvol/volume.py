"""Monte Carlo boundary-volume estimation over cube and ball-union regions.

The estimator counts samples whose distance to the decision boundary is
at most epsilon; for trained networks the distance probe is the FGSM flip
search, for analytic oracles the exact distance.  Volume(U) is always
normalized to 1 (estimates are Bernoulli parameters); region sizes are
recorded as metadata only.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from . import attack as atk
from . import network as nn
from .attack import AttackConfig, InvalidPairError
from .rng import chunk_bounds, chunk_generator, n_chunks


@dataclass(frozen=True)
class RegionSpec:
    """Sampling domain: the unit cube, or a union of l-infinity delta-balls.

    Ball unions are sampled as a disjoint union (uniform center choice,
    then uniform in the ball); overlaps are not rejected.  Balls are not
    clipped to [0,1]^n unless clip_to_cube is set.
    """

    variant: str
    dim: int
    centers: Optional[np.ndarray] = None
    delta: Optional[float] = None
    clip_to_cube: bool = False

    def __post_init__(self):
        if self.variant not in ("unit_cube", "ball_union"):
            raise ValueError(f"unknown region variant {self.variant!r}")
        if self.variant == "ball_union":
            if self.centers is None or len(self.centers) == 0:
                raise ValueError("ball_union needs at least one center")
            if self.delta is None or self.delta <= 0:
                raise ValueError("ball_union needs delta > 0")
            object.__setattr__(
                self, "centers", np.ascontiguousarray(self.centers, dtype=np.float64)
            )


def unit_cube(dim: int) -> RegionSpec:
    return RegionSpec("unit_cube", dim)


def ball_union(centers, delta: float, clip_to_cube: bool = False) -> RegionSpec:
    centers = np.atleast_2d(centers)
    return RegionSpec("ball_union", centers.shape[1], centers, delta, clip_to_cube)


@dataclass
class VolumeEstimate:
    epsilon: float
    trials: int
    successes: int
    estimate: float
    clt_halfwidth: float
    zero_grad_count: int
    seed: int
    delta: Optional[float] = None
    alpha: Optional[int] = None
    measure: str = "bvol"
    hoeffding_bound: Optional[float] = None
    wilson_interval: Optional[tuple] = None
    n_centers: Optional[int] = None


def sample_region_batch(region: RegionSpec, seed: int, chunk: int, count: int) -> np.ndarray:
    """Samples for one counter-based chunk; depends only on (seed, chunk)."""
    rng = chunk_generator(seed, 0, chunk)
    if region.variant == "unit_cube":
        pts = rng.random((count, region.dim))
    else:
        idx = rng.integers(0, len(region.centers), size=count)
        offsets = rng.uniform(-region.delta, region.delta, size=(count, region.dim))
        pts = region.centers[idx] + offsets
    if region.clip_to_cube:
        np.clip(pts, 0.0, 1.0, out=pts)
    return pts


def sample_region(region: RegionSpec, seed: int = 0, count: int = 1) -> np.ndarray:
    """Uniform samples from the region (convenience, single chunk stream)."""
    out = []
    for c in range(n_chunks(count)):
        lo, hi = chunk_bounds(c, count)
        out.append(sample_region_batch(region, seed, c, hi - lo))
    return np.concatenate(out) if len(out) > 1 else out[0]


def clt_halfwidth(successes: int, trials: int, confidence: float = 0.95) -> float:
    """Wald normal-approximation halfwidth z * sqrt(p(1-p)/l)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    return z * math.sqrt(p * (1 - p) / trials)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple:
    """Wilson score interval; stays informative at p-hat in {0, 1}."""
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


def hoeffding_tail(trials: int, xi: float, vol_u: float = 1.0) -> float:
    """Hoeffding bound exp(-2 l xi^2 / Volume(U)^2) on the estimator error."""
    if trials < 1 or xi <= 0:
        raise ValueError("need trials >= 1 and xi > 0")
    return math.exp(-2 * trials * xi * xi / (vol_u * vol_u))


def _min_flip_distances(model, points: np.ndarray, grid: Sequence[float]):
    """Per-sample flip distance (NaN when none) and zero-gradient count."""
    if hasattr(model, "distance_to_boundary"):
        return np.asarray(model.distance_to_boundary(points), dtype=float), 0
    labels = nn.predict_batch(model, points)
    eps_arr, _, zero_grad = atk._flip_scan(model, points.astype(model.dtype), labels, grid)
    return eps_arr, int(zero_grad.sum())


def estimate_bvol(
    model,
    region: RegionSpec,
    epsilon: float,
    trials: int,
    attack_config: Optional[AttackConfig] = None,
    seed: int = 0,
    workers: int = 1,
) -> VolumeEstimate:
    """Bernoulli estimate of the epsilon-neighbourhood boundary volume.

    model is a Network (probed with FGSM over attack_config's grid,
    default the single-point grid {epsilon}) or an oracle with exact
    distances.  Deterministic given seed; independent of workers.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = attack_config.epsilon_grid if attack_config else (epsilon,) if epsilon > 0 else ()

    def do_chunk(c):
        lo, hi = chunk_bounds(c, trials)
        pts = sample_region_batch(region, seed, c, hi - lo)
        if epsilon <= 0:
            return 0, 0
        dists, zg = _min_flip_distances(model, pts, grid)
        hits = int(np.sum(dists <= epsilon))
        return hits, zg

    chunks = range(n_chunks(trials))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(do_chunk, chunks))
    else:
        results = [do_chunk(c) for c in chunks]
    successes = sum(r[0] for r in results)
    zero_grad = sum(r[1] for r in results)

    est = VolumeEstimate(
        epsilon=epsilon,
        trials=trials,
        successes=successes,
        estimate=successes / trials,
        clt_halfwidth=clt_halfwidth(successes, trials),
        zero_grad_count=zero_grad,
        seed=seed,
        delta=region.delta,
        n_centers=None if region.centers is None else len(region.centers),
    )
    if successes in (0, trials):
        est.wilson_interval = wilson_interval(successes, trials)
    return est


def epsilon_sweep(
    model,
    region: RegionSpec,
    epsilons: Sequence[float],
    trials: int,
    seed: int = 0,
    workers: int = 1,
) -> list:
    """Estimates over an increasing epsilon sequence from one sample set.

    Each sample's minimal flip radius is computed once over the swept
    grid, so the resulting curve is non-decreasing by construction.
    """
    epsilons = [float(e) for e in epsilons]
    if any(a >= b for a, b in zip(epsilons, epsilons[1:])) or epsilons[0] <= 0:
        raise ValueError("epsilon sequence must be positive and strictly increasing")

    def do_chunk(c):
        lo, hi = chunk_bounds(c, trials)
        pts = sample_region_batch(region, seed, c, hi - lo)
        dists, zg = _min_flip_distances(model, pts, epsilons)
        hits = np.array([int(np.sum(dists <= e)) for e in epsilons])
        return hits, zg

    chunks = range(n_chunks(trials))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(do_chunk, chunks))
    else:
        results = [do_chunk(c) for c in chunks]
    hit_totals = np.sum([r[0] for r in results], axis=0)
    zero_grad = sum(r[1] for r in results)

    out = []
    for e, s in zip(epsilons, hit_totals.tolist()):
        est = VolumeEstimate(
            epsilon=e,
            trials=trials,
            successes=s,
            estimate=s / trials,
            clt_halfwidth=clt_halfwidth(s, trials),
            zero_grad_count=zero_grad,
            seed=seed,
            delta=region.delta,
            n_centers=None if region.centers is None else len(region.centers),
        )
        if s in (0, trials):
            est.wilson_interval = wilson_interval(s, trials)
        out.append(est)
    return out


# --- the three named measurements ---

def run_bvol(network, dim: int, epsilon: float, trials: int = 100_000,
             seed: int = 0, workers: int = 1, attack_config=None) -> VolumeEstimate:
    """Boundary volume over the whole unit cube."""
    est = estimate_bvol(network, unit_cube(dim), epsilon, trials, attack_config,
                        seed, workers)
    est.measure = "bvol"
    return est


def run_train_bvol(network, dataset, epsilon: float, delta: float,
                   trials: int = 100_000, subset: Optional[int] = 10_000,
                   seed: int = 0, workers: int = 1, attack_config=None,
                   clip_to_cube: bool = False) -> VolumeEstimate:
    """Boundary volume in delta-balls around (a subset of) the training points."""
    centers = dataset.points
    if subset is not None and subset < len(centers):
        rng = np.random.Generator(np.random.Philox(key=(seed & ((1 << 64) - 1)) ^ 0x7B))
        centers = centers[np.sort(rng.choice(len(centers), size=subset, replace=False))]
    region = ball_union(centers, delta, clip_to_cube)
    est = estimate_bvol(network, region, epsilon, trials, attack_config, seed, workers)
    est.measure = "train_bvol"
    return est


def run_ladv_bvol(network, dataset, epsilon: float, delta: float, alpha: int = 10,
                  boundary_points: int = 10_000, trials: int = 100_000,
                  seed: int = 0, workers: int = 1, attack_config=None,
                  clip_to_cube: bool = False) -> VolumeEstimate:
    """Boundary volume in delta-balls around bisection-found boundary points.

    Candidate pairs are drawn from opposite data classes; pairs whose
    endpoints share a resolved prediction are rejected and resampled.
    Raises InvalidPairError when no usable pair exists.
    """
    centers = _boundary_centers(network, dataset, alpha, boundary_points, seed)
    region = ball_union(centers, delta, clip_to_cube)
    est = estimate_bvol(network, region, epsilon, trials, attack_config, seed, workers)
    est.measure = "ladv_bvol"
    est.alpha = alpha
    return est


def _boundary_centers(network, dataset, alpha, count, seed, max_rounds=50):
    pts = dataset.points
    collected = []
    have = 0
    for round_ in range(max_rounds):
        pairs = atk.sample_class_pairs(dataset, count, seed + round_)
        i = np.array([p[0] for p in pairs])
        j = np.array([p[1] for p in pairs])
        la = nn.predict_batch(network, pts[i])
        lb = nn.predict_batch(network, pts[j])
        ok = la != lb
        if np.any(ok):
            found = atk.bisect_boundary_points_batch(network, pts[i[ok]], pts[j[ok]], alpha)
            collected.append(found)
            have += len(found)
        if have >= count:
            break
    if have == 0:
        raise InvalidPairError(
            "no opposite-label pairs under the network's resolved predictions"
        )
    return np.concatenate(collected)[:count]
