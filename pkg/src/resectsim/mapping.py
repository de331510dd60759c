"""3D tumor map construction: spot location, tags, boundary, cut targets.

The laser spot seen during a scan is located three ways (nearest surface
point to each camera's pixel hit, plus a ray trace onto the triangulated
surface) and fused by averaging. Classified tags project along z to 2D,
where the boundary is their convex hull; scan points inside or on the
boundary become cut targets.

The boundary assumes a convex tumor outline. A shrink factor above zero
tightens the hull by subdividing long edges toward interior tags; that
heuristic is this package's own definition and defaults to off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CollinearTags,
    EmptyRegion,
    LengthMismatch,
    NoCalibration,
    NoRayHit,
    NoVisibleSurface,
    TooFewTumorTags,
)
from .geometry import (
    Ray,
    SurfaceCloud,
    TriMesh,
    as_vec3,
    nearest_neighbor,
    project_to_plane_z,
    ray_mesh_intersect,
    triangulate_grid,
)
from .sensors import PinholeCamera, project_points
from .spectra import HEALTHY, TUMOR

EDGE_EPS = 1e-9


# ---------------------------------------------------------------------------
# 2D polygon primitives
# ---------------------------------------------------------------------------


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain convex hull, CCW, collinear boundary points dropped.

    Returns the hull vertices without repeating the first at the end.
    Raises CollinearTags when the points do not span two dimensions.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise CollinearTags("need at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(chain_pts):
        chain = []
        for p in chain_pts:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise CollinearTags("all points are collinear")
    return hull


def point_on_segment(p, a, b, eps: float = EDGE_EPS) -> bool:
    ab = b - a
    ap = p - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return bool(np.linalg.norm(ap) <= eps)
    t = np.clip(float(ap @ ab) / denom, 0.0, 1.0)
    return bool(np.linalg.norm(ap - t * ab) <= eps)


def point_in_polygon(point, vertices, include_boundary: bool = True) -> bool:
    """Even-odd membership test; boundary points count as inside by default."""
    p = np.asarray(point, dtype=float).reshape(2)
    verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    n = len(verts)
    if include_boundary:
        for i in range(n):
            if point_on_segment(p, verts[i], verts[(i + 1) % n]):
                return True
    inside = False
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 > p[1]) != (y2 > p[1]):
            t = (p[1] - y1) / (y2 - y1)
            if p[0] < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def points_in_polygon(points, vertices) -> np.ndarray:
    """Vectorized even-odd test (no boundary handling) for raster work."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    inside = np.zeros(len(pts), dtype=bool)
    n = len(verts)
    x, y = pts[:, 0], pts[:, 1]
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        if not np.any(crosses):
            continue
        t = (y[crosses] - y1) / (y2 - y1)
        hits = x[crosses] < x1 + t * (x2 - x1)
        idx = np.flatnonzero(crosses)[hits]
        inside[idx] = ~inside[idx]
    return inside


def _segments_cross(a, b, c, d) -> bool:
    """Proper intersection of open segments ab and cd."""
    d1 = _cross(c, d, a)
    d2 = _cross(c, d, b)
    d3 = _cross(a, b, c)
    d4 = _cross(a, b, d)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_is_simple(vertices) -> bool:
    verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = verts[j], verts[(j + 1) % n]
            if _segments_cross(a, b, c, d):
                return False
    return True


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


# ---------------------------------------------------------------------------
# Tags and boundary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TumorTag:
    """One classified scan point: 3D position, label, color, spectrum id."""

    position: np.ndarray
    label: str
    color: tuple = (0, 0, 0)
    spectrum_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        if self.label not in (HEALTHY, TUMOR):
            raise ValueError(f"label must be '{HEALTHY}' or '{TUMOR}'")


@dataclass(frozen=True)
class BoundaryPolygon:
    """Closed 2D outline of the tumor region (closure implied, CCW)."""

    vertices: np.ndarray
    source_indices: tuple
    shrink: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if not polygon_is_simple(v):
            raise ValueError("polygon must be simple")
        if not (0.0 <= self.shrink <= 1.0):
            raise ValueError("shrink factor must lie in [0, 1]")


@dataclass(frozen=True)
class SpotEstimate:
    """Laser spot located by both cameras and a surface ray trace."""

    from_left_camera: np.ndarray
    from_right_camera: np.ndarray
    from_ray_trace: np.ndarray
    fused: np.ndarray
    spread: float

    @classmethod
    def from_estimates(cls, left, right, ray) -> "SpotEstimate":
        left, right, ray = as_vec3(left), as_vec3(right), as_vec3(ray)
        fused = (left + right + ray) / 3.0
        spread = float(max(
            np.linalg.norm(left - right),
            np.linalg.norm(left - ray),
            np.linalg.norm(right - ray),
        ))
        return cls(left, right, ray, fused, spread)


@dataclass(frozen=True)
class CutRegion:
    """Tags selected for resection plus the boundary that selected them."""

    member_indices: tuple
    boundary: BoundaryPolygon
    targets: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "targets",
            np.asarray(self.targets, dtype=float).reshape(-1, 3))
        if len(self.member_indices) != len(self.targets):
            raise ValueError("member indices and targets must align")


class SpotLocator:
    """Reusable spot locator: caches surface projections and the mesh.

    Locating many spots against one scan only needs the per-camera surface
    projections once; this wrapper holds them and serves repeated queries.
    """

    def __init__(self, surface: SurfaceCloud,
                 camera_left: PinholeCamera, camera_right: PinholeCamera,
                 mesh: TriMesh | None = None):
        pts = surface.valid_points()
        if len(pts) == 0:
            raise NoVisibleSurface("surface cloud has no valid points")
        self.points = pts
        self.mesh = triangulate_grid(surface) if mesh is None else mesh
        self._views = []
        for cam in (camera_left, camera_right):
            uv, in_front = project_points(cam, pts)
            if not np.any(in_front):
                raise NoVisibleSurface(
                    "no surface point projects in front of a camera")
            visible = np.flatnonzero(in_front)
            self._views.append((uv[visible], visible))

    def locate(self, pixel_left, pixel_right, laser_ray: Ray) -> SpotEstimate:
        cam_estimates = []
        for (uv, visible), pixel in zip(self._views, (pixel_left, pixel_right)):
            idx, _ = nearest_neighbor(np.asarray(pixel, dtype=float), uv)
            cam_estimates.append(self.points[visible[idx]])
        hit = ray_mesh_intersect(laser_ray, self.mesh)
        if hit is None:
            raise NoRayHit("laser ray misses the surface mesh")
        return SpotEstimate.from_estimates(
            cam_estimates[0], cam_estimates[1], hit[0])


def estimate_spot_3d(pixel_left, pixel_right,
                     camera_left: PinholeCamera, camera_right: PinholeCamera,
                     surface: SurfaceCloud, laser_ray: Ray,
                     mesh: TriMesh | None = None) -> SpotEstimate:
    """Locate one laser spot on the scanned surface.

    Per-camera estimate: the valid surface point whose projection lands
    nearest the observed pixel. Ray estimate: beam intersection with the
    triangulated surface. The fused position is the plain mean of the three.
    """
    locator = SpotLocator(surface, camera_left, camera_right, mesh=mesh)
    return locator.locate(pixel_left, pixel_right, laser_ray)


def build_tumor_tags(spots, labels, colors=None, spectrum_ids=None):
    """Zip scan outputs into tags, preserving scan order."""
    spots = np.asarray(spots, dtype=float).reshape(-1, 3)
    labels = list(labels)
    if len(spots) != len(labels):
        raise LengthMismatch(f"{len(spots)} spots vs {len(labels)} labels")
    if colors is None:
        colors = [(0, 0, 0)] * len(spots)
    elif len(colors) != len(spots):
        raise LengthMismatch("colors length mismatch")
    if spectrum_ids is None:
        spectrum_ids = list(range(len(spots)))
    elif len(spectrum_ids) != len(spots):
        raise LengthMismatch("spectrum id length mismatch")
    return [
        TumorTag(p, lab, tuple(int(c) for c in col), int(sid))
        for p, lab, col, sid in zip(spots, labels, colors, spectrum_ids)
    ]


def boundary_from_tags(tags, shrink: float = 0.0) -> BoundaryPolygon:
    """2D boundary of the tumor-labeled tags (convex hull at shrink = 0).

    For shrink > 0, hull edges longer than (1 - shrink) times the longest
    initial edge are subdivided toward the interior tumor tag nearest the
    edge midpoint, while the polygon stays simple. This concave refinement
    is a package-specific heuristic.
    """
    tumor_idx = [k for k, t in enumerate(tags) if t.label == TUMOR]
    if len(tumor_idx) < 3:
        raise TooFewTumorTags(f"{len(tumor_idx)} tumor tags; need >= 3")
    proj = project_to_plane_z([tags[k].position for k in tumor_idx])
    hull = convex_hull(proj)

    def sources(vertices):
        out = []
        for v in vertices:
            match = np.flatnonzero(np.all(np.isclose(proj, v, atol=0.0), axis=1))
            out.append(tumor_idx[int(match[0])])
        return tuple(out)

    if shrink <= 0.0:
        return BoundaryPolygon(hull, sources(hull), 0.0)

    edges = np.linalg.norm(np.diff(np.vstack([hull, hull[:1]]), axis=0), axis=1)
    limit = (1.0 - shrink) * float(edges.max())
    poly = [tuple(v) for v in hull]
    used = {tuple(v) for v in poly}
    candidates = [tuple(p) for p in proj if tuple(p) not in used]

    for _ in range(10 * len(proj)):
        n = len(poly)
        lengths = [
            np.hypot(poly[(i + 1) % n][0] - poly[i][0],
                     poly[(i + 1) % n][1] - poly[i][1])
            for i in range(n)
        ]
        order = sorted(range(n), key=lambda i: -lengths[i])
        inserted = False
        for i in order:
            if lengths[i] <= limit:
                break
            a = np.array(poly[i])
            b = np.array(poly[(i + 1) % n])
            mid = (a + b) / 2.0
            ranked = sorted(
                (c for c in candidates if c not in used),
                key=lambda c: (c[0] - mid[0]) ** 2 + (c[1] - mid[1]) ** 2,
            )
            for c in ranked:
                trial = poly[:i + 1] + [c] + poly[i + 1:]
                if polygon_is_simple(np.array(trial)):
                    poly = trial
                    used.add(c)
                    inserted = True
                    break
            if inserted:
                break
        if not inserted:
            break
    return BoundaryPolygon(np.array(poly), sources(np.array(poly)), shrink)


def select_cut_targets(tags, boundary: BoundaryPolygon) -> CutRegion:
    """Tags whose projection falls inside or on the boundary, in scan order."""
    members = []
    for k, t in enumerate(tags):
        if point_in_polygon(t.position[:2], boundary.vertices):
            members.append(k)
    if not members:
        raise EmptyRegion("no tag projects inside the boundary")
    targets = np.array([tags[k].position for k in members])
    return CutRegion(tuple(members), boundary, targets)


def colorize_surface(surface: SurfaceCloud, camera: PinholeCamera, image,
                     sentinel=(0, 0, 0)):
    """Attach per-point colors by nearest-pixel lookup.

    Returns (cloud_with_color, in_view) where in_view marks points that
    projected inside the image; the rest carry the sentinel color.
    """
    if camera is None:
        raise NoCalibration("colorize_surface needs a calibrated camera")
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    h, w = img.shape[:2]
    uv, in_front = project_points(camera, surface.points)
    color = np.tile(np.asarray(sentinel, dtype=np.uint8), (len(surface.points), 1))
    in_view = np.zeros(len(surface.points), dtype=bool)
    ok = in_front & surface.valid_mask()
    cols = np.round(uv[ok, 0]).astype(int)
    rows = np.round(uv[ok, 1]).astype(int)
    inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    sel = np.flatnonzero(ok)[inside]
    color[sel] = img[rows[inside], cols[inside]]
    in_view[sel] = True
    cloud = SurfaceCloud(surface.rows, surface.cols, surface.points,
                         color=color, label=surface.label,
                         valid=surface.valid)
    return cloud, in_view
