"""Labeled contact observations and dataset containers.

A dataset is an ordered collection of labeled points inside an exploration
region.  Labels follow the ternary convention used throughout the package:
``-1`` for points known to lie inside the object, ``0`` for points on the
surface (contacts), ``+1`` for points known to lie outside (free space).
Surface points may carry an outward unit normal; other points never do.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .geometry import Region

_VALID_LABELS = (-1, 0, 1)


class Provenance(Enum):
    SIMULATED = "simulated"
    FLIGHT_LOG = "flight_log"


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    """One observation: a position, a ternary label, an optional outward
    unit normal (surface points only), and a flag marking points injected
    as outliers by a simulation."""

    x: np.ndarray
    y: int
    normal: np.ndarray | None = None
    is_injected_outlier: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size not in (2, 3) or not np.all(np.isfinite(x)):
            raise ValueError("position must be a finite 2-d or 3-d vector")
        if self.y not in _VALID_LABELS:
            raise ValueError(f"label must be one of {_VALID_LABELS}, got {self.y}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", int(self.y))
        if self.normal is not None:
            n = np.asarray(self.normal, dtype=float)
            if self.y != 0:
                raise ValueError("only surface points (y = 0) may carry a normal")
            if n.shape != x.shape or abs(np.linalg.norm(n) - 1.0) > 1e-6:
                raise ValueError("normal must be a unit vector matching the position dimension")
            object.__setattr__(self, "normal", n)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered collection of labeled points within a region.

    Stored column-wise for the numerical code: ``positions`` is (n, dim),
    ``labels`` is (n,), ``normals`` is (n, dim) with NaN rows where no
    normal exists, ``outlier_flags`` is (n,) bool.  Iteration yields
    :class:`LabeledPoint` views in order.
    """

    positions: np.ndarray
    labels: np.ndarray
    normals: np.ndarray
    outlier_flags: np.ndarray
    region: Region
    provenance: Provenance

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        lab = np.asarray(self.labels, dtype=int)
        nrm = np.asarray(self.normals, dtype=float)
        flg = np.asarray(self.outlier_flags, dtype=bool)
        if pos.ndim != 2 or pos.shape[0] == 0:
            raise ValueError("dataset must contain at least one point")
        n, dim = pos.shape
        if dim != self.region.dim:
            raise ValueError(f"points are {dim}-d but the region is {self.region.dim}-d")
        if lab.shape != (n,) or nrm.shape != (n, dim) or flg.shape != (n,):
            raise ValueError("positions, labels, normals and flags must agree in length")
        if not np.all(np.isin(lab, _VALID_LABELS)):
            raise ValueError("labels must be -1, 0 or +1")
        if not np.all(self.region.contains(pos, tol=1e-9)):
            raise ValueError("all points must lie inside the region (tolerance 1e-9)")
        has_normal = ~np.isnan(nrm).any(axis=1)
        if np.any(has_normal & (lab != 0)):
            raise ValueError("normals are only allowed on surface points")
        norms = np.linalg.norm(nrm[has_normal], axis=1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("normals must be unit vectors")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "outlier_flags", flg)

    # -- collection protocol ------------------------------------------------

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> LabeledPoint:
        normal = self.normals[i]
        return LabeledPoint(
            x=self.positions[i],
            y=int(self.labels[i]),
            normal=None if np.isnan(normal).any() else normal,
            is_injected_outlier=bool(self.outlier_flags[i]),
        )

    def __iter__(self) -> Iterator[LabeledPoint]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def label_counts(self) -> dict[int, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in _VALID_LABELS}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_points(
        cls,
        points: Sequence[LabeledPoint],
        region: Region,
        provenance: Provenance,
    ) -> "Dataset":
        if len(points) == 0:
            raise ValueError("dataset must contain at least one point")
        dim = points[0].x.size
        pos = np.stack([p.x for p in points])
        lab = np.array([p.y for p in points], dtype=int)
        nrm = np.full((len(points), dim), np.nan)
        for i, p in enumerate(points):
            if p.normal is not None:
                nrm[i] = p.normal
        flg = np.array([p.is_injected_outlier for p in points], dtype=bool)
        return cls(pos, lab, nrm, flg, region, provenance)

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write the dataset as CSV with header
        ``x1,x2[,x3],y,nx,ny[,nz],outlier_flag``.

        Floats use shortest round-trip decimal (17 significant digits);
        normal columns are empty for points without a normal.
        """
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        dim = self.dim
        coord_names = ["x1", "x2", "x3"][:dim]
        normal_names = ["nx", "ny", "nz"][:dim]
        lines = [",".join(coord_names + ["y"] + normal_names + ["outlier_flag"])]
        for i in range(len(self)):
            cells = [_fmt(v) for v in self.positions[i]]
            cells.append(str(int(self.labels[i])))
            if np.isnan(self.normals[i]).any():
                cells.extend([""] * dim)
            else:
                cells.extend(_fmt(v) for v in self.normals[i])
            cells.append(str(int(self.outlier_flags[i])))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        """SHA-256 of the canonical CSV serialization."""
        return hashlib.sha256(self.csv_text().encode("utf-8")).hexdigest()

    @classmethod
    def read_csv(cls, path, region: Region, provenance: Provenance) -> "Dataset":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty dataset file") from None
            dim = 3 if "x3" in header else 2
            expected = dim + 1 + dim + 1
            if len(header) != expected:
                raise ValueError(f"{path}: expected {expected} columns, got {len(header)}")
            pos, lab, nrm, flg = [], [], [], []
            for row_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != expected:
                    raise ValueError(f"{path}: row {row_no} has {len(row)} columns")
                try:
                    pos.append([float(v) for v in row[:dim]])
                    lab.append(int(row[dim]))
                    normal_cells = row[dim + 1 : dim + 1 + dim]
                    if all(c == "" for c in normal_cells):
                        nrm.append([np.nan] * dim)
                    else:
                        nrm.append([float(v) for v in normal_cells])
                    flg.append(bool(int(row[-1])))
                except ValueError as exc:
                    raise ValueError(f"{path}: row {row_no}: {exc}") from exc
        return cls(
            np.asarray(pos), np.asarray(lab), np.asarray(nrm), np.asarray(flg),
            region, provenance,
        )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")
