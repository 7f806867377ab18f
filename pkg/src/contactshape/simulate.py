"""Synthetic exploration scenarios with injected false-positive contacts.

A scenario samples the surface of a known shape at even spacing, scatters
labeled free-space and interior points uniformly over the region, and then
corrupts the data: each external point is, with a small probability,
replaced by a pair of outliers, a fake contact at the point itself plus a
fake interior point nearby.  Injected points are flagged so detection
metrics can score them.

Randomness is split over named child streams of one seed (free-point
positions, replacement coin flips, pair offsets), so the scenario is fully
reproducible from the seed and any single stream can be varied in
isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, LabeledPoint, Provenance
from .geometry import Region, ShapeModel, signed_distance, surface_samples

# Points closer to the surface than this are re-drawn, keeping free-space
# and interior labels unambiguous.
SURFACE_EXCLUSION = 1e-6

_STREAM_FREE = 0
_STREAM_REPLACE = 1
_STREAM_OFFSET = 2


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Recipe for one synthetic dataset.

    ``surface_spacing`` follows the per-kind convention of
    :func:`contactshape.geometry.surface_samples` (degrees for circles,
    metres otherwise).  ``outlier_rate`` is the per-external-point
    replacement probability and ``outlier_pair_distance`` the radius of
    the ball around the fake contact in which the fake interior point is
    drawn.
    """

    shape: ShapeModel
    region: Region
    surface_spacing: float
    n_free: int
    outlier_rate: float = 0.02
    outlier_pair_distance: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.shape.dim != self.region.dim:
            raise ValueError("shape and region dimensions differ")
        if self.n_free < 0:
            raise ValueError("n_free must be non-negative")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError("outlier_rate must lie in [0, 1]")
        if not (self.outlier_pair_distance > 0 and math.isfinite(self.outlier_pair_distance)):
            raise ValueError("outlier_pair_distance must be positive")
        lo, hi = self.shape.bounding_box()
        if not (np.all(lo >= self.region.lower) and np.all(hi <= self.region.upper)):
            raise ValueError("shape must lie inside the region")


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def generate_scenario(config: ScenarioConfig) -> Dataset:
    """Generate one labeled dataset according to ``config``.

    The dataset lists the surface samples first (in walk order), then the
    free points in draw order; a replaced external point is substituted in
    place by its outlier pair (fake contact first, fake interior second).
    """
    surf_points, surf_normals = surface_samples(config.shape, config.surface_spacing)
    points: list[LabeledPoint] = [
        LabeledPoint(x=p, y=0, normal=n) for p, n in zip(surf_points, surf_normals)
    ]

    rng_free = _stream(config.seed, _STREAM_FREE)
    rng_coin = _stream(config.seed, _STREAM_REPLACE)
    rng_offset = _stream(config.seed, _STREAM_OFFSET)
    region = config.region
    dim = region.dim

    free: list[tuple[np.ndarray, int]] = []
    while len(free) < config.n_free:
        x = region.lower + rng_free.random(dim) * region.extents
        sd = signed_distance(config.shape, x)
        if abs(sd) < SURFACE_EXCLUSION:
            continue
        free.append((x, 1 if sd > 0 else -1))

    for x, label in free:
        if label == 1 and rng_coin.random() < config.outlier_rate:
            offset = _ball_offset(rng_offset, region, x, config.outlier_pair_distance, dim)
            points.append(LabeledPoint(x=x, y=0, normal=None, is_injected_outlier=True))
            points.append(LabeledPoint(x=x + offset, y=-1, is_injected_outlier=True))
        else:
            points.append(LabeledPoint(x=x, y=label))

    return Dataset.from_points(points, region, Provenance.SIMULATED)


def _ball_offset(rng, region: Region, center: np.ndarray, radius: float, dim: int):
    """Uniform draw from the ball of ``radius`` around ``center``, re-drawn
    until the displaced point stays inside the region."""
    while True:
        v = radius * (2.0 * rng.random(dim) - 1.0)
        if np.sum(v * v) > radius * radius:
            continue
        if region.contains(center + v):
            return v


def count_labels(data: Dataset) -> tuple[int, int, int]:
    """Counts ``(n_contact, n_external, n_internal)`` for labels 0, +1, -1."""
    counts = data.label_counts()
    return counts[0], counts[1], counts[-1]
