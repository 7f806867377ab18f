import numpy as np

from contactshape import Dataset, LabeledPoint, Provenance, Region


def make_dataset(positions, labels, region=None, flags=None):
    """Dataset from raw arrays, with a region padded around the points."""
    positions = np.asarray(positions, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if region is None:
        lo = positions.min(axis=0) - 1.0
        hi = positions.max(axis=0) + 1.0
        region = Region(lo, hi)
    points = [
        LabeledPoint(
            x=positions[i],
            y=int(labels[i]),
            is_injected_outlier=bool(flags[i]) if flags is not None else False,
        )
        for i in range(len(labels))
    ]
    return Dataset.from_points(points, region, Provenance.SIMULATED)


def random_dataset(rng, n, dim=2, spread=2.0):
    """Small random dataset with all three label kinds present when n >= 3."""
    positions = rng.uniform(-spread, spread, size=(n, dim))
    labels = rng.integers(-1, 2, size=n)
    if n >= 3:
        labels[0], labels[1], labels[2] = -1, 0, 1
    return make_dataset(positions, labels)
