"""Shapes, exploration regions, evaluation grids, and exact distance oracles.

The estimation pipeline treats an object as the zero level set of a scalar
potential over an axis-aligned exploration region.  This module supplies the
ground-truth side of that picture: parametric shape models whose signed
distance can be evaluated exactly, regular evaluation grids, and surface
samplers that generate evenly spaced boundary points with outward normals.

Signed distance conventions
---------------------------
``signed_distance`` is negative inside the shape, positive outside, and its
absolute value is the exact Euclidean distance to the nearest surface point.
For the polygonal 2D shapes and for triangle meshes this is computed as
distance-to-boundary combined with an inside test, which stays exact for
non-convex outlines where a min-over-parts composition would not be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import UnsupportedShapeError

# Relative slack used when converting real-valued extents to sample counts,
# so that spacings which divide an extent exactly in real arithmetic are not
# lost to binary rounding (0.02 is not representable, yet 6 / 0.02 must
# count as 300 intervals).
_COUNT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned exploration region in 2 or 3 dimensions.

    Parameters
    ----------
    lower, upper : array_like
        Per-axis bounds with ``lower[k] < upper[k]`` for every axis.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or upper.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("region bounds must be 1-d arrays of equal length")
        if lower.size not in (2, 3):
            raise ValueError(f"region must be 2-d or 3-d, got {lower.size} axes")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("region bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("region requires lower < upper on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def extents(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of points lying inside the region within ``tol``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, region has {self.dim}")
        ok = np.all(pts >= self.lower - tol, axis=1) & np.all(pts <= self.upper + tol, axis=1)
        return ok if np.asarray(points).ndim > 1 else bool(ok[0])


@dataclass(frozen=True, eq=False)
class EvalGrid:
    """Regular grid of prediction points covering a region.

    Points are ordered lexicographically by axis index: the first axis
    varies slowest.  ``shape`` holds the per-axis sample counts.
    """

    region: Region
    spacing: float
    shape: tuple[int, ...]
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.region.dim


def _axis_count(extent: float, spacing: float) -> int:
    return int(math.floor(extent / spacing + _COUNT_SLACK)) + 1


def make_grid(region: Region, spacing: float) -> EvalGrid:
    """Build a regular evaluation grid over ``region``.

    Each axis gets ``floor(extent / spacing) + 1`` samples (with the floor
    taken tolerantly so exact real-arithmetic divisions survive the float
    representation of the spacing).  When the spacing divides the extent
    the grid includes both bounds of the axis.

    Raises
    ------
    ValueError
        If ``spacing`` is not positive or exceeds the smallest extent.
    """
    if not (spacing > 0 and math.isfinite(spacing)):
        raise ValueError("spacing must be positive and finite")
    extents = region.extents
    if spacing > extents.min() * (1.0 + _COUNT_SLACK):
        raise ValueError(
            f"spacing {spacing} exceeds the smallest region extent {extents.min()}"
        )
    axes = []
    counts = []
    for lo, up, ext in zip(region.lower, region.upper, extents):
        n = _axis_count(ext, spacing)
        counts.append(n)
        last = lo + (n - 1) * spacing
        if abs(last - up) <= spacing * 1e-6:
            # Spacing divides the extent: pin both endpoints exactly.
            axes.append(np.linspace(lo, up, n))
        else:
            axes.append(lo + spacing * np.arange(n))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    return EvalGrid(region=region, spacing=float(spacing), shape=tuple(counts), points=points)


class ShapeKind(Enum):
    SQUARE = "square"
    CIRCLE = "circle"
    CROSS = "cross"
    BOX3D = "box3d"
    POLYMESH = "polymesh"


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """A parametric shape with an exact signed-distance oracle.

    Use the factory helpers (:func:`square`, :func:`circle`, :func:`cross`,
    :func:`box`, :func:`polymesh`, :func:`box_union_mesh`) rather than the
    constructor; they validate the parameters for each kind.

    The pose is a pure translation: ``center`` shifts the canonical,
    origin-centred shape.
    """

    kind: ShapeKind
    params: dict
    center: np.ndarray

    @property
    def dim(self) -> int:
        return 2 if self.kind in (ShapeKind.SQUARE, ShapeKind.CIRCLE, ShapeKind.CROSS) else 3

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box of the shape, as (lower, upper)."""
        if self.kind == ShapeKind.CIRCLE:
            r = self.params["radius"]
            half = np.full(2, r)
        elif self.kind == ShapeKind.SQUARE:
            half = np.full(2, self.params["side"] / 2.0)
        elif self.kind == ShapeKind.CROSS:
            half = np.full(2, self.params["arm_length"] / 2.0)
        elif self.kind == ShapeKind.BOX3D:
            half = np.asarray(self.params["size"]) / 2.0
        else:
            verts = self.params["vertices"]
            return self.center + verts.min(axis=0), self.center + verts.max(axis=0)
        return self.center - half, self.center + half


def _as_center(center, dim: int) -> np.ndarray:
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if c.shape != (dim,) or not np.all(np.isfinite(c)):
        raise ValueError(f"center must be a finite length-{dim} vector")
    return c


def square(side: float, center=None) -> ShapeModel:
    """Axis-aligned square of full side length ``side``."""
    if not (side > 0 and math.isfinite(side)):
        raise ValueError("side must be positive")
    return ShapeModel(ShapeKind.SQUARE, {"side": float(side)}, _as_center(center, 2))


def circle(radius: float, center=None) -> ShapeModel:
    if not (radius > 0 and math.isfinite(radius)):
        raise ValueError("radius must be positive")
    return ShapeModel(ShapeKind.CIRCLE, {"radius": float(radius)}, _as_center(center, 2))


def cross(arm_length: float, arm_width: float, center=None) -> ShapeModel:
    """Plus-shaped cross: two centred rectangles of full span ``arm_length``
    and width ``arm_width`` overlapping at right angles.  Requires
    ``arm_length > arm_width``."""
    if not (arm_length > 0 and arm_width > 0):
        raise ValueError("cross dimensions must be positive")
    if not arm_length > arm_width:
        raise ValueError("cross requires arm_length > arm_width")
    params = {"arm_length": float(arm_length), "arm_width": float(arm_width)}
    return ShapeModel(ShapeKind.CROSS, params, _as_center(center, 2))


def box(size, center=None) -> ShapeModel:
    """Axis-aligned 3D box with full side lengths ``size = (sx, sy, sz)``."""
    s = np.asarray(size, dtype=float)
    if s.shape != (3,) or not np.all(s > 0):
        raise ValueError("box size must be three positive lengths")
    return ShapeModel(ShapeKind.BOX3D, {"size": s}, _as_center(center, 3))


def polymesh(vertices, faces, center=None) -> ShapeModel:
    """Closed orientable triangle mesh.

    ``vertices`` is (V, 3) float, ``faces`` is (F, 3) integer indices with
    consistent outward winding.  Validity (every directed edge used exactly
    once, with its reverse present) is checked here so the signed-distance
    oracle can rely on a watertight surface.
    """
    verts = np.asarray(vertices, dtype=float)
    tris = np.asarray(faces, dtype=int)
    if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 4:
        raise ValueError("vertices must be an (V, 3) array with V >= 4")
    if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] < 4:
        raise ValueError("faces must be an (F, 3) array with F >= 4")
    if tris.min() < 0 or tris.max() >= verts.shape[0]:
        raise ValueError("face indices out of range")
    _check_closed_orientable(tris)
    return ShapeModel(
        ShapeKind.POLYMESH, {"vertices": verts, "faces": tris}, _as_center(center, 3)
    )


def _check_closed_orientable(tris: np.ndarray) -> None:
    seen: dict[tuple[int, int], int] = {}
    for f in tris:
        a, b, c = (int(f[0]), int(f[1]), int(f[2]))
        if a == b or b == c or a == c:
            raise ValueError("degenerate face with repeated vertex")
        for u, v in ((a, b), (b, c), (c, a)):
            seen[(u, v)] = seen.get((u, v), 0) + 1
    for (u, v), count in seen.items():
        if count != 1 or seen.get((v, u), 0) != 1:
            raise ValueError(
                "mesh is not closed and orientable: directed edge "
                f"({u}, {v}) used {count} times, reverse used {seen.get((v, u), 0)}"
            )


# ---------------------------------------------------------------------------
# Boundary outlines for the polygonal 2D shapes.


def boundary_polygon(shape: ShapeModel) -> np.ndarray:
    """Counter-clockwise boundary polygon of a square or cross, (V, 2)."""
    if shape.kind == ShapeKind.SQUARE:
        h = shape.params["side"] / 2.0
        poly = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    elif shape.kind == ShapeKind.CROSS:
        a = shape.params["arm_length"] / 2.0
        b = shape.params["arm_width"] / 2.0
        poly = np.array(
            [
                [a, -b], [a, b], [b, b], [b, a], [-b, a], [-b, b],
                [-a, b], [-a, -b], [-b, -b], [-b, -a], [b, -a], [b, -b],
            ]
        )
    else:
        raise UnsupportedShapeError(f"no boundary polygon for {shape.kind.value}")
    return poly + shape.center


def _point_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd crossing test, vectorized over points."""
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    x1 = poly[None, :, 0]
    y1 = poly[None, :, 1]
    x2 = np.roll(poly[:, 0], -1)[None, :]
    y2 = np.roll(poly[:, 1], -1)[None, :]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddles & (x < x_cross)
    return hits.sum(axis=1) % 2 == 1


def _polygon_distance(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = (ab * ab).sum(axis=1)
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    return np.linalg.norm(pts[:, None, :] - closest, axis=2).min(axis=1)


# ---------------------------------------------------------------------------
# Triangle-mesh distance and inside test.


def _closest_point_on_triangles(p: np.ndarray, v0, v1, v2) -> np.ndarray:
    """Distance from each point to each triangle, (N, T).

    Region-by-region closest-point computation; every case is resolved
    with masked writes so the whole (point, triangle) block is handled
    at once.
    """
    ab = v1 - v0
    ac = v2 - v0
    ap = p[:, None, :] - v0[None, :, :]
    d1 = (ap * ab[None]).sum(-1)
    d2 = (ap * ac[None]).sum(-1)
    bp = p[:, None, :] - v1[None, :, :]
    d3 = (bp * ab[None]).sum(-1)
    d4 = (bp * ac[None]).sum(-1)
    cp = p[:, None, :] - v2[None, :, :]
    d5 = (cp * ab[None]).sum(-1)
    d6 = (cp * ac[None]).sum(-1)

    n_pts, n_tri = d1.shape
    closest = np.empty((n_pts, n_tri, 3))
    done = np.zeros((n_pts, n_tri), dtype=bool)

    def assign(mask, value):
        mask = mask & ~done
        if np.any(mask):
            closest[mask] = value[mask] if value.ndim == 3 else value
            done[mask] = True

    vert_a = np.broadcast_to(v0[None], closest.shape)
    vert_b = np.broadcast_to(v1[None], closest.shape)
    vert_c = np.broadcast_to(v2[None], closest.shape)

    assign((d1 <= 0) & (d2 <= 0), vert_a)
    assign((d3 >= 0) & (d4 <= d3), vert_b)
    assign((d6 >= 0) & (d5 <= d6), vert_c)

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
    edge_ab = v0[None] + np.nan_to_num(t_ab)[..., None] * ab[None]
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), edge_ab)

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ac = d2 / (d2 - d6)
    edge_ac = v0[None] + np.nan_to_num(t_ac)[..., None] * ac[None]
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), edge_ac)

    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    edge_bc = v1[None] + np.nan_to_num(t_bc)[..., None] * (v2 - v1)[None]
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), edge_bc)

    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v_bary = vb / denom
        w_bary = vc / denom
    interior = (
        v0[None]
        + np.nan_to_num(v_bary)[..., None] * ab[None]
        + np.nan_to_num(w_bary)[..., None] * ac[None]
    )
    assign(np.ones_like(done), interior)

    return np.linalg.norm(p[:, None, :] - closest, axis=2)


def _winding_number(p: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Generalized winding number of each point w.r.t. a closed mesh.

    Sums the signed solid angle of every triangle; for a watertight mesh
    the result is (numerically) 1 inside and 0 outside, with no ray-cast
    degeneracies on axis-aligned geometry.
    """
    a = verts[tris[:, 0]][None, :, :] - p[:, None, :]
    b = verts[tris[:, 1]][None, :, :] - p[:, None, :]
    c = verts[tris[:, 2]][None, :, :] - p[:, None, :]
    la = np.linalg.norm(a, axis=2)
    lb = np.linalg.norm(b, axis=2)
    lc = np.linalg.norm(c, axis=2)
    numer = (np.cross(a, b) * c).sum(axis=2)
    denom = (
        la * lb * lc
        + (a * b).sum(axis=2) * lc
        + (b * c).sum(axis=2) * la
        + (c * a).sum(axis=2) * lb
    )
    omega = 2.0 * np.arctan2(numer, denom)
    return omega.sum(axis=1) / (4.0 * np.pi)


def _mesh_signed_distance(pts: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    out = np.empty(pts.shape[0])
    v0 = verts[tris[:, 0]]
    v1 = verts[tris[:, 1]]
    v2 = verts[tris[:, 2]]
    chunk = max(1, int(2_000_000 // max(len(tris), 1)))
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        dist = _closest_point_on_triangles(block, v0, v1, v2).min(axis=1)
        inside = _winding_number(block, verts, tris) > 0.5
        out[start : start + chunk] = np.where(inside, -dist, dist)
    return out


# ---------------------------------------------------------------------------
# Public signed distance.


def signed_distance(shape: ShapeModel, x) -> np.ndarray | float:
    """Exact signed distance from ``x`` to the shape surface.

    Negative inside, positive outside; ``|result|`` is the Euclidean
    distance to the nearest surface point.  Accepts a single point of
    shape (dim,) or a batch of shape (n, dim).
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if pts.shape[1] != shape.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, shape has {shape.dim}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")

    if shape.kind == ShapeKind.CIRCLE:
        sd = np.linalg.norm(pts - shape.center, axis=1) - shape.params["radius"]
    elif shape.kind in (ShapeKind.SQUARE, ShapeKind.CROSS):
        poly = boundary_polygon(shape)
        dist = _polygon_distance(pts, poly)
        inside = _point_in_polygon(pts, poly)
        sd = np.where(inside, -dist, dist)
    elif shape.kind == ShapeKind.BOX3D:
        half = np.asarray(shape.params["size"]) / 2.0
        q = np.abs(pts - shape.center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        sd = outside + inside
    elif shape.kind == ShapeKind.POLYMESH:
        sd = _mesh_signed_distance(
            pts - shape.center, shape.params["vertices"], shape.params["faces"]
        )
    else:  # pragma: no cover
        raise UnsupportedShapeError(f"unknown shape kind {shape.kind}")
    return float(sd[0]) if single else sd


# ---------------------------------------------------------------------------
# Surface sampling.


def surface_samples(shape: ShapeModel, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced surface points with outward unit normals.

    Returns ``(points, normals)``.  The spacing is interpreted per kind:

    - circle: angular step in degrees (3 gives 120 samples),
    - square and cross: arc-length step in metres along the perimeter walk,
      starting at the first polygon vertex; the closing point is dropped
      when the spacing divides the perimeter,
    - 3D box: grid step in metres on each face, with points shared by
      several faces emitted once (first face in -x, +x, -y, +y, -z, +z
      order wins, which fixes the normal used at edges and corners).

    A sample landing exactly on a polygon corner takes the outward normal
    of the edge that follows the corner in walk order.

    Raises
    ------
    UnsupportedShapeError
        For triangle meshes, which have no even-spacing parameterization
        here.
    """
    if not (spacing > 0 and math.isfinite(spacing)):
        raise ValueError("spacing must be positive and finite")

    if shape.kind == ShapeKind.CIRCLE:
        n = int(math.floor(360.0 / spacing + _COUNT_SLACK))
        if n < 1:
            raise ValueError("angular spacing exceeds the full circle")
        theta = np.deg2rad(spacing * np.arange(n))
        normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        points = shape.center + shape.params["radius"] * normals
        return points, normals

    if shape.kind in (ShapeKind.SQUARE, ShapeKind.CROSS):
        return _perimeter_walk(boundary_polygon(shape), spacing)

    if shape.kind == ShapeKind.BOX3D:
        return _box_face_samples(shape, spacing)

    raise UnsupportedShapeError(
        f"surface sampling is not defined for {shape.kind.value} shapes"
    )


def _perimeter_walk(poly: np.ndarray, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    edge_vec = np.roll(poly, -1, axis=0) - poly
    edge_len = np.linalg.norm(edge_vec, axis=1)
    tangents = edge_vec / edge_len[:, None]
    # Outward normal of a counter-clockwise polygon: rotate tangent by -90 deg.
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    cum = np.concatenate([[0.0], np.cumsum(edge_len)])
    perimeter = cum[-1]
    n = int(math.floor(perimeter / spacing + _COUNT_SLACK))
    if n < 1:
        raise ValueError("spacing exceeds the polygon perimeter")
    s = spacing * np.arange(n)
    # Half-open edge intervals [cum[i], cum[i+1]): a sample at a corner
    # belongs to the edge that starts there.
    idx = np.minimum(np.searchsorted(cum, s, side="right") - 1, len(poly) - 1)
    points = poly[idx] + (s - cum[idx])[:, None] * tangents[idx]
    return points, normals[idx]


def _box_face_samples(shape: ShapeModel, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    half = np.asarray(shape.params["size"]) / 2.0
    if spacing > 2.0 * half.min() * (1.0 + _COUNT_SLACK):
        raise ValueError("spacing exceeds the smallest box side")
    points: list[np.ndarray] = []
    normals: list[np.ndarray] = []
    seen: set[tuple] = set()
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
            u = _face_axis(half[u_axis], spacing)
            v = _face_axis(half[v_axis], spacing)
            uu, vv = np.meshgrid(u, v, indexing="ij")
            face = np.empty((uu.size, 3))
            face[:, axis] = sign * half[axis]
            face[:, u_axis] = uu.ravel()
            face[:, v_axis] = vv.ravel()
            normal = np.zeros(3)
            normal[axis] = sign
            for p in face:
                key = (round(p[0], 9), round(p[1], 9), round(p[2], 9))
                if key in seen:
                    continue
                seen.add(key)
                points.append(p)
                normals.append(normal)
    return shape.center + np.asarray(points), np.asarray(normals)


def _face_axis(half_extent: float, spacing: float) -> np.ndarray:
    n = _axis_count(2.0 * half_extent, spacing)
    last = -half_extent + (n - 1) * spacing
    if abs(last - half_extent) <= spacing * 1e-6:
        return np.linspace(-half_extent, half_extent, n)
    return -half_extent + spacing * np.arange(n)


# ---------------------------------------------------------------------------
# Rectilinear unions: boundary mesh of a union of axis-aligned boxes.


def box_union_mesh(boxes: Sequence[tuple], center=None) -> ShapeModel:
    """Boundary triangle mesh of a union of axis-aligned boxes.

    ``boxes`` is a sequence of ``(size, box_center)`` pairs, each box given
    by its full side lengths and centre.  Faces (or face parts) buried
    inside the union are removed, so the result is a closed orientable
    mesh suitable for the exact signed-distance oracle.  Boxes may overlap
    or touch face-to-face; unions that touch only along an edge or corner
    are rejected because their boundary is not a manifold mesh.
    """
    if len(boxes) == 0:
        raise ValueError("at least one box is required")
    lowers = []
    uppers = []
    for size, box_center in boxes:
        s = np.asarray(size, dtype=float)
        c = np.asarray(box_center, dtype=float)
        if s.shape != (3,) or c.shape != (3,) or not np.all(s > 0):
            raise ValueError("each box needs three positive side lengths and a 3-d centre")
        lowers.append(c - s / 2.0)
        uppers.append(c + s / 2.0)
    lo = np.asarray(lowers)
    hi = np.asarray(uppers)

    tri_list: list[tuple] = []
    for i in range(len(boxes)):
        for axis in range(3):
            for sign in (-1.0, 1.0):
                w = hi[i, axis] if sign > 0 else lo[i, axis]
                u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
                face = (lo[i, u_axis], hi[i, u_axis], lo[i, v_axis], hi[i, v_axis])
                blockers = []
                for j in range(len(boxes)):
                    if j == i:
                        continue
                    # Box j hides parts of this face when it occupies the
                    # space immediately outside the face plane, which lies
                    # above the plane for a positive face and below it for
                    # a negative one.
                    tol = 1e-12 * max(1.0, abs(w))
                    if sign > 0:
                        hides = lo[j, axis] <= w + tol and hi[j, axis] > w + tol
                    else:
                        hides = hi[j, axis] >= w - tol and lo[j, axis] < w - tol
                    if hides:
                        blockers.append(
                            (lo[j, u_axis], hi[j, u_axis], lo[j, v_axis], hi[j, v_axis])
                        )
                for cell in _uncovered_cells(face, blockers):
                    tri_list.extend(_cell_triangles(cell, axis, sign, w))

    verts, faces = _weld(tri_list)
    mesh_center = _as_center(center, 3)
    return polymesh(verts, faces, mesh_center)


def _uncovered_cells(face, blockers):
    ulo, uhi, vlo, vhi = face
    if uhi <= ulo or vhi <= vlo:
        return
    ucoords = {ulo, uhi}
    vcoords = {vlo, vhi}
    clipped = []
    for bulo, buhi, bvlo, bvhi in blockers:
        bulo, buhi = max(bulo, ulo), min(buhi, uhi)
        bvlo, bvhi = max(bvlo, vlo), min(bvhi, vhi)
        if buhi <= bulo or bvhi <= bvlo:
            continue
        clipped.append((bulo, buhi, bvlo, bvhi))
        ucoords.update((bulo, buhi))
        vcoords.update((bvlo, bvhi))
    us = sorted(ucoords)
    vs = sorted(vcoords)
    for iu in range(len(us) - 1):
        for iv in range(len(vs) - 1):
            cu = 0.5 * (us[iu] + us[iu + 1])
            cv = 0.5 * (vs[iv] + vs[iv + 1])
            covered = any(
                bulo <= cu <= buhi and bvlo <= cv <= bvhi
                for bulo, buhi, bvlo, bvhi in clipped
            )
            if not covered:
                yield (us[iu], us[iu + 1], vs[iv], vs[iv + 1])


def _cell_triangles(cell, axis, sign, w):
    u0, u1, v0, v1 = cell
    u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3

    def corner(u, v):
        p = [0.0, 0.0, 0.0]
        p[axis] = w
        p[u_axis] = u
        p[v_axis] = v
        return tuple(p)

    p00, p10, p11, p01 = corner(u0, v0), corner(u1, v0), corner(u1, v1), corner(u0, v1)
    if sign > 0:
        # e_u x e_v = +e_axis for the cyclic axis ordering used here.
        return [(p00, p10, p11), (p00, p11, p01)]
    return [(p00, p11, p10), (p00, p01, p11)]


def _weld(tri_list):
    index: dict[tuple, int] = {}
    verts: list[tuple] = []
    faces = []
    for tri in tri_list:
        ids = []
        for p in tri:
            key = (round(p[0], 9), round(p[1], 9), round(p[2], 9))
            if key not in index:
                index[key] = len(verts)
                verts.append(key)
            ids.append(index[key])
        faces.append(ids)
    return np.asarray(verts, dtype=float), np.asarray(faces, dtype=int)


# ---------------------------------------------------------------------------
# OFF mesh files.


def load_off(path, center=None) -> ShapeModel:
    """Load a closed triangle mesh from an ASCII OFF file.

    Expects the usual layout: an ``OFF`` keyword line, a counts line
    ``V F E``, then V vertex lines and F face lines.  Faces with more
    than three vertices are fan-triangulated.  Blank lines and ``#``
    comments are ignored.
    """
    with open(path, "r", encoding="utf-8") as fh:
        tokens: list[str] = []
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens:
        raise ValueError(f"{path}: empty OFF file")
    pos = 0
    if tokens[0].upper() == "OFF":
        pos = 1
    try:
        n_vert, n_face = int(tokens[pos]), int(tokens[pos + 1])
        pos += 3  # counts line also carries an (ignored) edge count
        verts = np.array(
            [float(t) for t in tokens[pos : pos + 3 * n_vert]], dtype=float
        ).reshape(n_vert, 3)
        pos += 3 * n_vert
        faces = []
        for _ in range(n_face):
            k = int(tokens[pos])
            idx = [int(t) for t in tokens[pos + 1 : pos + 1 + k]]
            pos += 1 + k
            if k < 3:
                raise ValueError("face with fewer than 3 vertices")
            for j in range(1, k - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed OFF file ({exc})") from exc
    return polymesh(verts, np.asarray(faces, dtype=int), center)
