"""Surface extraction from a predicted potential field.

The estimated surface is read off a prediction grid as the set of points
whose predictive mean lies within a small band around zero.  This is a
point-cloud view of the zero level set; no meshing is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gp import PredictionField


@dataclass(frozen=True, eq=False)
class SurfaceEstimate:
    """Grid points whose predicted potential falls inside the band.

    ``is_empty`` flags an estimate with no points, which happens when the
    field never crosses zero within the band (for example after fitting
    free-space data only).  Metrics that average over the surface refuse
    empty estimates.
    """

    points: np.ndarray
    mean_values: np.ndarray
    band: float

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def __len__(self) -> int:
        return self.points.shape[0]


def level_set_from_mean(grid, mean: np.ndarray, band: float) -> SurfaceEstimate:
    """Select grid points with ``|mean| < band``.

    Accepts the grid and mean separately so callers that never computed
    predictive variances can still extract a surface.
    """
    if not (band > 0 and math.isfinite(band)):
        raise ValueError("band must be positive and finite")
    mean = np.asarray(mean, dtype=float)
    if mean.shape != (len(grid),):
        raise ValueError("mean must have one value per grid point")
    keep = np.abs(mean) < band
    return SurfaceEstimate(points=grid.points[keep], mean_values=mean[keep], band=float(band))


def extract_level_set(field: PredictionField, band: float = 0.01) -> SurfaceEstimate:
    """Select grid points of a prediction field with ``|mean| < band``."""
    return level_set_from_mean(field.grid, field.mean, band)


def export_surface(estimate: SurfaceEstimate, path) -> None:
    """Write rows ``x1,x2[,x3],mu`` with round-trip floats.

    An empty estimate writes the header only.
    """
    dim = estimate.points.shape[1]
    names = ["x1", "x2", "x3"][:dim] + ["mu"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for p, m in zip(estimate.points, estimate.mean_values):
            cells = [format(c, ".17g") for c in p]
            cells.append(format(m, ".17g"))
            fh.write(",".join(cells) + "\n")
