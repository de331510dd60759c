"""Exact 3D primitives used by every other module.

Conventions
-----------
All coordinates are millimeters in a fixed world frame (the frame of the
volumetric scanner). Vectors are numpy float arrays of shape (3,); 2D points
are shape (2,). The laser rig sits above the workpiece at large +z and fires
downward, so calibrated beam directions have negative z.

Surface grids are row-major: ``index = row * cols + col`` with rows along the
slow scan axis (y) and columns along the fast axis (x). Grid triangulation
uses the fixed (r, c) to (r+1, c+1) diagonal so ray-trace results are
deterministic.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCloud, GridTooSmall, ParallelRay

PARALLEL_EPS = 1e-9
UNIT_TOL = 1e-12
DEGENERATE_AREA = 1e-12

LABEL_HEALTHY = 0
LABEL_TUMOR = 1
LABEL_UNKNOWN = 2


def as_vec3(p) -> np.ndarray:
    """Coerce to a finite float (3,) array."""
    v = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


def normalize(v) -> np.ndarray:
    v = as_vec3(v)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


@dataclass(frozen=True)
class Ray:
    """Beam model: an origin point plus a unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))
        object.__setattr__(self, "direction", normalize(self.direction))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class PlaneFrame:
    """Virtual plane given by a center point and a unit normal."""

    center: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        object.__setattr__(self, "normal", normalize(self.normal))


@dataclass(frozen=True)
class ReferenceFrame:
    """Commanded-motion frame: origin plus two (not necessarily orthogonal) unit axes."""

    origin: np.ndarray
    v_x: np.ndarray
    v_y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))
        object.__setattr__(self, "v_x", normalize(self.v_x))
        object.__setattr__(self, "v_y", normalize(self.v_y))
        if abs(float(np.dot(self.v_x, self.v_y))) >= 0.999:
            raise ValueError("frame axes are (near-)parallel")


@dataclass(frozen=True)
class SurfaceCloud:
    """Gridded surface points with optional per-point color, label, and validity.

    ``points`` has shape (rows*cols, 3) in row-major grid order. ``valid``
    marks grid nodes whose depth measurement succeeded; invalid nodes keep
    their slot (the grid invariant rows*cols == len(points) always holds) but
    are skipped by triangulation and projection consumers.
    """

    rows: int
    cols: int
    points: np.ndarray
    color: np.ndarray | None = None
    label: np.ndarray | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.rows * self.cols != len(pts):
            raise ValueError("rows*cols must equal point count")
        if self.color is not None:
            c = np.asarray(self.color)
            if c.shape != (len(pts), 3):
                raise ValueError("color must be (N,3)")
            object.__setattr__(self, "color", c)
        if self.label is not None:
            lab = np.asarray(self.label)
            if lab.shape != (len(pts),):
                raise ValueError("label must be (N,)")
            object.__setattr__(self, "label", lab)
        if self.valid is not None:
            v = np.asarray(self.valid, dtype=bool)
            if v.shape != (len(pts),):
                raise ValueError("valid must be (N,)")
            object.__setattr__(self, "valid", v)

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(len(self.points), dtype=bool)
        return self.valid

    def valid_points(self) -> np.ndarray:
        return self.points[self.valid_mask()]


@dataclass(frozen=True)
class TriMesh:
    """Vertex/triangle soup; indices are into ``vertices``."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")


def ray_plane_intersect(ray: Ray, plane: PlaneFrame) -> np.ndarray:
    """Intersection of a beam with a virtual plane.

    Returns p = origin - [n.(origin - center) / n.direction] * direction.
    Raises ParallelRay when |n.direction| <= 1e-9.
    """
    denom = float(np.dot(plane.normal, ray.direction))
    if abs(denom) <= PARALLEL_EPS:
        raise ParallelRay(f"|normal . direction| = {abs(denom):.3e} <= {PARALLEL_EPS}")
    t = -float(np.dot(plane.normal, ray.origin - plane.center)) / denom
    return ray.origin + t * ray.direction


def triangulate_grid(surface: SurfaceCloud) -> TriMesh:
    """Split every grid cell into two triangles along the (r,c)-(r+1,c+1) diagonal.

    Cells touching an invalid grid node are skipped, as are zero-area
    triangles (repeated points). Vertex array is the full grid, so vertex
    indices match surface point indices.
    """
    rows, cols = surface.rows, surface.cols
    if rows < 2 or cols < 2:
        raise GridTooSmall(f"grid is {rows}x{cols}; need at least 2x2")
    pts = surface.points
    ok = surface.valid_mask()

    tris = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            b = r * cols + (c + 1)
            d = (r + 1) * cols + c
            e = (r + 1) * cols + (c + 1)
            for tri in ((a, d, e), (a, e, b)):
                i, j, k = tri
                if not (ok[i] and ok[j] and ok[k]):
                    continue
                area = 0.5 * np.linalg.norm(
                    np.cross(pts[j] - pts[i], pts[k] - pts[i])
                )
                if area <= DEGENERATE_AREA:
                    continue
                tris.append(tri)
    return TriMesh(pts, np.array(tris, dtype=int).reshape(-1, 3))


def ray_mesh_intersect(ray: Ray, mesh: TriMesh):
    """Nearest positive-parameter ray/triangle hit, or None.

    Vectorized Moller-Trumbore over all triangles; ties on the ray parameter
    break to the lowest triangle index. Equivalent to brute force because
    every triangle is tested.
    """
    tris = mesh.triangles
    if len(tris) == 0:
        return None
    v0 = mesh.vertices[tris[:, 0]]
    e1 = mesh.vertices[tris[:, 1]] - v0
    e2 = mesh.vertices[tris[:, 2]] - v0
    d = ray.direction
    p = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, p)
    usable = np.abs(det) > 1e-12
    inv_det = np.where(usable, 1.0 / np.where(usable, det, 1.0), 0.0)
    tvec = ray.origin - v0
    u = np.einsum("ij,ij->i", tvec, p) * inv_det
    q = np.cross(tvec, e1)
    v = np.einsum("j,ij->i", d, q) * inv_det
    t = np.einsum("ij,ij->i", e2, q) * inv_det
    hit = usable & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-12)
    if not np.any(hit):
        return None
    t_masked = np.where(hit, t, np.inf)
    idx = int(np.argmin(t_masked))
    return ray.at(float(t[idx])), idx


def nearest_neighbor(query, cloud) -> tuple[int, float]:
    """Index and Euclidean distance of the closest cloud point (2D or 3D).

    Ties break to the lowest index.
    """
    pts = np.asarray(cloud, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise EmptyCloud("nearest_neighbor needs a nonempty (N,k) cloud")
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.shape[0] != pts.shape[1]:
        raise ValueError("query dimension does not match cloud")
    d2 = np.sum((pts - q) ** 2, axis=1)
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


def project_to_plane_z(points) -> np.ndarray:
    """Drop the z component; order preserved. Accepts (N,3), returns (N,2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts[:, :2].copy()
