"""High-dimensional geometry: tube volumes, distance-ratio moments,
concentration bounds, and pairwise-distance statistics.

Closed forms involving Gamma ratios at large argument are computed as
exp of log-Gamma differences; log-Gamma uses a Lanczos approximation
implemented here (cross-checked against the recursion and quadrature in
the test suite).
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .rng import CHUNK_SIZE, chunk_bounds, chunk_generator, n_chunks

# Lanczos g=7, n=9 coefficients (double precision, relative error < 1e-13
# on the positive real axis).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def log_gamma(z: float) -> float:
    """Natural log of Gamma(z) for z > 0, Lanczos approximation."""
    if z <= 0:
        raise ValueError("log_gamma requires z > 0")
    if z < 0.5:
        # reflection keeps the series argument away from the pole
        return math.log(math.pi / math.sin(math.pi * z)) - log_gamma(1.0 - z)
    z -= 1.0
    a = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        a += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return 0.5 * math.log(2 * math.pi) + (z + 0.5) * math.log(t) - t + math.log(a)


def gamma_ratio(a: float, b: float) -> float:
    """Gamma(a) / Gamma(b) via log differences (overflow safe)."""
    return math.exp(log_gamma(a) - log_gamma(b))


# --- Weyl tube volume ---

@dataclass(frozen=True)
class TubeSpec:
    """A q-manifold embedded in R^n with curvature invariants k_{2i}.

    invariants[i] is k_{2i}; invariants[0] is the manifold volume.  A
    closed even-dimensional manifold has k_q = (2*pi)^(q/2) times its
    Euler characteristic.
    """

    ambient_dim: int
    manifold_dim: int
    invariants: tuple

    def __post_init__(self):
        object.__setattr__(self, "invariants", tuple(float(k) for k in self.invariants))
        if self.ambient_dim < 1 or not 0 <= self.manifold_dim <= self.ambient_dim:
            raise ValueError("need n >= 1 and 0 <= q <= n")
        if len(self.invariants) != self.manifold_dim // 2 + 1:
            raise ValueError(
                f"expected {self.manifold_dim // 2 + 1} invariants, got {len(self.invariants)}"
            )


def weyl_tube_volume(spec: TubeSpec, epsilon: float) -> float:
    """Volume of the epsilon-tube around the manifold (l2, non-self-intersecting).

    Polynomial in epsilon: the codimension prefactor is
    (pi eps^2)^(c/2) / (c/2)! with the half-integer factorial taken as
    Gamma(c/2 + 1), and term i is scaled by prod_j (c + 2j) for j = 1..i.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n, q = spec.ambient_dim, spec.manifold_dim
    c = n - q
    pref = (math.pi * epsilon**2) ** (c / 2) / math.exp(log_gamma(c / 2 + 1))
    total = 0.0
    denom = 1.0
    for i, k in enumerate(spec.invariants):
        if i > 0:
            denom *= c + 2 * i
        total += epsilon ** (2 * i) * k / denom
    return pref * total


# --- l2/l-infinity distance ratio to a random hyperplane ---

@dataclass(frozen=True)
class RatioMoments:
    n: int
    expectation: float
    second_moment: float
    variance: float
    variance_bound: float


def ratio_expectation(n: int) -> float:
    """Expected l2/l-infinity distance ratio to a random hyperplane in R^n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(n / math.pi) * gamma_ratio(n / 2, (n + 1) / 2)


def ratio_moments(n: int) -> RatioMoments:
    e = ratio_expectation(n)
    m2 = (2 / math.pi) * (n - 1) / n + 1 / n
    return RatioMoments(n, e, m2, m2 - e * e, (math.pi - 2) / n)


@dataclass(frozen=True)
class SimulatedMoments:
    n: int
    trials: int
    mean: float
    variance: float
    second_moment: float

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.trials)


def simulate_ratio(n: int, trials: int, seed: int = 0) -> SimulatedMoments:
    """Monte Carlo moments of the distance ratio.

    Samples unit vectors uniformly on the nonnegative orthant of the
    sphere (normalized absolute Gaussians) and dots them with the
    normalized all-ones vector.  Chunked counter-based streams keep the
    result independent of any parallel split.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    total = 0.0
    total_sq = 0.0
    inv_sqrt_n = 1.0 / math.sqrt(n)
    for c in range(n_chunks(trials)):
        lo, hi = chunk_bounds(c, trials)
        rng = chunk_generator(seed, 1, c)
        v = np.abs(rng.standard_normal((hi - lo, n)))
        dots = v.sum(axis=1) / np.linalg.norm(v, axis=1) * inv_sqrt_n
        total += float(dots.sum())
        total_sq += float((dots * dots).sum())
    mean = total / trials
    m2 = total_sq / trials
    return SimulatedMoments(n, trials, mean, m2 - mean * mean, m2)


def chebyshev_tail(n: int, eps_dev: float) -> float:
    """Chebyshev bound (pi-2)/(n eps^2) on the ratio deviating by >= eps."""
    if eps_dev <= 0:
        raise ValueError("eps_dev must be positive")
    return (math.pi - 2) / (n * eps_dev**2)


# --- pairwise distance statistics ---

@dataclass
class SpreadStats:
    """Relative spread of pairwise distances.

    max_min_ratio_statistic is the global (max - min)/min over all
    distinct pairs; the histogram bins the per-anchor relative spreads
    (max_j d(x, x_j) - min_j d(x, x_j)) / min_j d(x, x_j).
    """

    max_min_ratio_statistic: float
    max_distance: float
    min_distance: float
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    coincident_points: bool


def relative_spread(
    points: np.ndarray,
    p_norm: float = 2,
    anchors: Optional[int] = None,
    bins: int = 100,
    chunk: int = 512,
    seed: int = 0,
) -> SpreadStats:
    """Global and per-anchor relative spread of pairwise distances.

    Streams the O(m^2) distance scan in chunks; the full matrix is never
    materialized.  anchors limits the per-anchor histogram to a random
    subset (None = all points).  Duplicate points make the statistic
    undefined; they are flagged and excluded from the histogram.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = len(pts)
    if m < 2:
        raise ValueError("need at least 2 points")
    anchor_idx = np.arange(m)
    if anchors is not None and anchors < m:
        rng = np.random.Generator(np.random.Philox(key=seed))
        anchor_idx = np.sort(rng.choice(m, size=anchors, replace=False))

    per_min = np.full(m, np.inf)
    per_max = np.zeros(m)
    sq = None
    if p_norm == 2:
        sq = np.einsum("ij,ij->i", pts, pts)
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        if p_norm == 2:
            # clipped Gram trick; exact enough for spread statistics
            d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (pts[lo:hi] @ pts.T)
            d = np.sqrt(np.clip(d2, 0.0, None))
        elif np.isinf(p_norm):
            d = np.max(np.abs(pts[lo:hi, None, :] - pts[None, :, :]), axis=-1)
        else:
            d = np.sum(np.abs(pts[lo:hi, None, :] - pts[None, :, :]) ** p_norm, axis=-1) ** (
                1.0 / p_norm
            )
        rows = np.arange(lo, hi)
        d[rows - lo, rows] = np.inf  # exclude self-pairs from minima
        per_min[lo:hi] = np.minimum(per_min[lo:hi], d.min(axis=1))
        d[rows - lo, rows] = 0.0
        per_max[lo:hi] = np.maximum(per_max[lo:hi], d.max(axis=1))

    gmin = float(per_min.min())
    gmax = float(per_max.max())
    coincident = gmin == 0.0
    stat = (gmax - gmin) / gmin if gmin > 0 else float("nan")

    a_min, a_max = per_min[anchor_idx], per_max[anchor_idx]
    ok = a_min > 0
    ratios = (a_max[ok] - a_min[ok]) / a_min[ok]
    counts, edges = np.histogram(ratios, bins=bins)
    return SpreadStats(stat, gmax, gmin, counts, edges, coincident)


@dataclass
class MinDistanceStats:
    min: float
    mean_of_min: float
    fractions_below: dict


def min_pairwise_stats(
    a: np.ndarray,
    b: Optional[np.ndarray] = None,
    thresholds: Sequence[float] = (0.2, 0.1, 0.05),
    chunk: int = 256,
) -> MinDistanceStats:
    """Minimal l-infinity distances: cross-pairs of two sets, or per-point
    nearest-other within one set (self-pairs excluded).

    Reports the overall minimum, the mean of the per-point minima, and
    the fraction of per-point minima below each threshold.
    """
    a = np.asarray(a, dtype=np.float64)
    single = b is None
    b = a if single else np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty point set")
    per_min = np.full(len(a), np.inf)
    for lo in range(0, len(a), chunk):
        hi = min(lo + chunk, len(a))
        d = np.max(np.abs(a[lo:hi, None, :] - b[None, :, :]), axis=-1)
        if single:
            rows = np.arange(lo, hi)
            d[rows - lo, rows] = np.inf
        per_min[lo:hi] = np.minimum(per_min[lo:hi], d.min(axis=1))
    fracs = {t: float(np.mean(per_min < t)) for t in thresholds}
    return MinDistanceStats(float(per_min.min()), float(per_min.mean()), fracs)


# --- near-orthogonality capacity ---

def orthogonality_capacity(eps: float, theta: float, n: int) -> int:
    """Number of uniform ball vectors pairwise eps-orthogonal with
    probability > theta: floor(exp(eps^2 n / 4) * sqrt(log(1/theta)))."""
    if eps <= 0 or not 0 < theta < 1:
        raise ValueError("need eps > 0 and 0 < theta < 1")
    return int(math.floor(math.exp(eps * eps * n / 4) * math.sqrt(math.log(1 / theta))))


def orthogonality_trial(n: int, count: int, eps: float, trials: int, seed: int = 0) -> float:
    """Empirical frequency of `count` uniform unit-ball vectors being
    pairwise eps-orthogonal (unit-vector dot products below eps)."""
    successes = 0
    for t in range(trials):
        rng = chunk_generator(seed, 2, t)
        v = rng.standard_normal((count, n))
        # direction is uniform on the sphere; radius does not affect angles
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        dots = np.abs(v @ v.T)
        np.fill_diagonal(dots, 0.0)
        if np.all(dots < eps):
            successes += 1
    return successes / trials


# --- cube overlap ---

def cube_overlap_bound(m: int, zeta: float, n: int) -> tuple:
    """(pairwise bound C(m,2) zeta^n, loose bound m^2 zeta^n / 2)."""
    if m < 2 or not 0 <= zeta < 1:
        raise ValueError("need m >= 2 and 0 <= zeta < 1")
    z = zeta**n
    return (m * (m - 1) / 2 * z, m * m * z / 2)


def cos_sin_integral(a: int, b: int) -> float:
    """Closed form of the integral of cos^a sin^b over [0, pi/2]."""
    if a < 0 or b < 0:
        raise ValueError("exponents must be non-negative")
    return math.exp(
        log_gamma((a + 1) / 2) + log_gamma((b + 1) / 2) - log_gamma((a + b) / 2 + 1)
    ) / 2
