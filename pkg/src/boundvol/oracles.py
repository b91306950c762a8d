"""Synthetic classifiers with analytically known boundaries.

These plug into the volume estimators in place of a trained network: any
object exposing predict_batch and distance_to_boundary is accepted there,
and detection uses the exact distance instead of an adversarial probe.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HalfspaceOracle:
    """Two-class oracle with boundary {x : x[axis] = offset}.

    Class 1 is the positive side.  For an axis-aligned hyperplane the
    l-infinity and l2 distances to the boundary coincide.
    """

    dim: int
    axis: int = 0
    offset: float = 0.5

    @property
    def n_inputs(self):
        return self.dim

    def predict_batch(self, x):
        x = np.atleast_2d(x)
        return (x[:, self.axis] > self.offset).astype(int)

    def distance_to_boundary(self, x, metric: str = "linf"):
        x = np.atleast_2d(x)
        return np.abs(x[:, self.axis] - self.offset)


@dataclass(frozen=True)
class SphereOracle:
    """Two-class oracle whose boundary is an l2 sphere.

    Class 1 is the inside.  distance_to_boundary reports the exact l2
    distance; the l-infinity distance is not implemented for spheres.
    """

    center: tuple
    radius: float

    @property
    def n_inputs(self):
        return len(self.center)

    def predict_batch(self, x):
        x = np.atleast_2d(x)
        d = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return (d < self.radius).astype(int)

    def distance_to_boundary(self, x, metric: str = "l2"):
        x = np.atleast_2d(x)
        d = np.linalg.norm(x - np.asarray(self.center), axis=1)
        return np.abs(d - self.radius)


def oracle_classifier(kind: str, **kwargs):
    """Factory: kind "halfspace" (axis, offset, dim) or "sphere" (center, radius)."""
    if kind == "halfspace":
        return HalfspaceOracle(**kwargs)
    if kind == "sphere":
        return SphereOracle(**kwargs)
    raise ValueError(f"unknown oracle kind {kind!r}")
