"""Conforming triangulations of the benchmark geometries.

All meshes are built the same way: boundary and interface polylines are laid
out at a spacing tied to the target element size, a hexagonal lattice of
interior points is added with a clearance moat around every polyline, the
point cloud is Delaunay-triangulated, triangles inside holes/cuts are removed
and the rest are tagged by region.  Every polyline segment is verified to be
an edge of the final triangulation, which makes region interfaces and tagged
boundaries exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np
from scipy.spatial import Delaunay


class Region(IntEnum):
    EXTERIOR = 0
    CLOAK = 1
    INHOMOGENEITY = 2


class BoundaryTag(IntEnum):
    OUTER_LEFT = 0
    OUTER_RIGHT = 1
    OUTER_TOP = 2
    OUTER_BOTTOM = 3
    HOLE = 4
    CUT = 5


class GeometryKind(Enum):
    ELLIPTIC_HOLE = "elliptic_hole"
    ELLIPTIC_CUT = "elliptic_cut"
    RECT_INHOM = "rect_inhom"
    RANDOM_DISKS = "random_disks"
    RECTANGLE = "rectangle"


class MeshError(ValueError):
    pass


# Interior lattice points keep this multiple of the target size clear of
# every polyline so that Delaunay recovers all constraint segments.
_CLEARANCE = 0.55


@dataclass(frozen=True)
class GeometrySpec:
    """Parameters of the benchmark geometries (lengths in units of L_o)."""

    kind: GeometryKind = GeometryKind.ELLIPTIC_HOLE
    rect_a: float = 6.0
    rect_b: float = 4.0
    target_h: float = 0.2
    # elliptic hole
    hole_semiaxes: tuple[float, float] = (2.0 / 3.0, 1.0)
    cloak_semiaxes: tuple[float, float] = (4.0 / 3.0, 5.0 / 3.0)
    # elliptic cut (carpet cloak); the minor semi-axes are free parameters,
    # defaults chosen to reproduce the reference no-cloak efficacy
    cut_semiaxes: tuple[float, float] = (1.5, 0.95)
    cut_cloak_semiaxes: tuple[float, float] = (2.0, 1.35)
    symmetric: bool = True
    # rectangular inhomogeneity; the cloak band of the given thickness starts
    # right at the inhomogeneity boundary
    inhom_sides: tuple[float, float] = (4.0 / 3.0, 8.0 / 21.0)
    cloak_thickness: float = 1.0 / 3.0
    rotation_deg: float = 45.0
    # random disk inhomogeneities with annular cloaks
    n_disks: int = 8
    disk_radius_range: tuple[float, float] = (0.15, 0.45)
    disk_cloak_factor: float = 1.5
    clearance: float = 0.1
    seed: int = 0
    max_attempts: int = 50000


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray  # (n, 2) float
    triangles: np.ndarray  # (m, 3) int, counter-clockwise
    region: np.ndarray  # (m,) Region values
    boundary_edges: np.ndarray  # (k, 2) int
    boundary_tags: np.ndarray  # (k,) BoundaryTag values
    h: float = 0.0

    def __post_init__(self):
        for name in ("nodes", "triangles", "region", "boundary_edges", "boundary_tags"):
            getattr(self, name).setflags(write=False)
        if self.h == 0.0 and len(self.triangles):
            object.__setattr__(self, "h", _max_diameter(self.nodes, self.triangles))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def has_hole(self) -> bool:
        return bool(
            np.any(self.boundary_tags == BoundaryTag.HOLE)
            or np.any(self.boundary_tags == BoundaryTag.CUT)
        )


def _max_diameter(nodes, triangles):
    p = nodes[triangles]
    e = np.stack(
        [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1
    )
    return float(np.sqrt((e**2).sum(axis=2).max()))


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Crossing-number containment test, vectorized over query points."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def _dist_to_segments(pts: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Minimum distance from each point to any of the segments."""
    out = np.full(len(pts), np.inf)
    d = seg_b - seg_a
    len2 = np.maximum((d**2).sum(axis=1), 1e-300)
    for lo in range(0, len(pts), 2048):
        p = pts[lo : lo + 2048]
        w = p[:, None, :] - seg_a[None, :, :]
        t = np.clip((w * d[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
        proj = seg_a[None, :, :] + t[:, :, None] * d[None, :, :]
        dist2 = ((p[:, None, :] - proj) ** 2).sum(axis=2)
        out[lo : lo + 2048] = np.sqrt(dist2.min(axis=1))
    return out


class _PointSet:
    """Registry of mesh points with exact-coordinate deduplication."""

    def __init__(self):
        self._coords: list[tuple[float, float]] = []
        self._index: dict[tuple[float, float], int] = {}
        self.chains: list[tuple[list[int], BoundaryTag | None, bool]] = []

    def add(self, xy) -> int:
        key = (float(xy[0]), float(xy[1]))
        idx = self._index.get(key)
        if idx is None:
            idx = len(self._coords)
            self._index[key] = idx
            self._coords.append(key)
        return idx

    def chain(self, pts, tag: BoundaryTag | None, closed: bool = False):
        self.chains.append(([self.add(p) for p in pts], tag, closed))

    def coords(self) -> np.ndarray:
        return np.array(self._coords, dtype=float)

    def segments(self):
        for idxs, tag, closed in self.chains:
            pairs = list(zip(idxs[:-1], idxs[1:]))
            if closed:
                pairs.append((idxs[-1], idxs[0]))
            for a, b in pairs:
                yield a, b, tag


def _subdivide(p0, p1, h) -> np.ndarray:
    """Points along a straight span at spacing <= h, endpoints exact."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = max(1, int(np.ceil(np.hypot(*(p1 - p0)) / h)))
    pts = np.linspace(0.0, 1.0, n + 1)[:, None] * (p1 - p0)[None, :] + p0[None, :]
    pts[0] = p0
    pts[-1] = p1
    return pts


def _ellipse_arc(center, a, b, t0, t1, h, n_min=8) -> np.ndarray:
    """Equal-arclength points on an elliptic arc, chord error <= h^2/8."""
    r_min = min(a, b) ** 2 / max(a, b)
    spacing = min(h, h * np.sqrt(r_min))
    tt = np.linspace(t0, t1, 2048)
    xy = np.stack([a * np.cos(tt), b * np.sin(tt)], axis=1)
    seg = np.sqrt(((xy[1:] - xy[:-1]) ** 2).sum(axis=1))
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(n_min, int(np.ceil(arclen[-1] / spacing)))
    t_eq = np.interp(np.linspace(0.0, arclen[-1], n + 1), arclen, tt)
    pts = np.stack(
        [center[0] + a * np.cos(t_eq), center[1] + b * np.sin(t_eq)], axis=1
    )
    return pts


def _mirror_x(pts: np.ndarray) -> np.ndarray:
    out = pts.copy()
    out[:, 0] = -out[:, 0]
    return out


def _hex_lattice(a, b, h) -> np.ndarray:
    """Hexagonal lattice covering the rectangle, symmetric about x = 0."""
    dy = h * np.sqrt(3.0) / 2.0
    xs_pos = np.arange(0.0, a / 2.0, h)
    xs_even = np.concatenate([-xs_pos[:0:-1], xs_pos])
    xs_odd_pos = np.arange(h / 2.0, a / 2.0, h)
    xs_odd = np.concatenate([-xs_odd_pos[::-1], xs_odd_pos])
    rows = []
    k = 0
    y = -b / 2.0 + dy
    while y < b / 2.0 - 0.25 * dy:
        xs = xs_even if k % 2 == 0 else xs_odd
        rows.append(np.stack([xs, np.full(len(xs), y)], axis=1))
        y += dy
        k += 1
    if not rows:
        return np.zeros((0, 2))
    return np.concatenate(rows)


def _triangulate(
    ps: _PointSet,
    lattice: np.ndarray,
    remove_polys: list[np.ndarray],
    classify,
    h: float,
) -> Mesh:
    """Shared back end: filter lattice, Delaunay, remove, tag, verify."""
    coords = ps.coords()
    seg_a, seg_b, seg_tags = [], [], {}
    for ia, ib, tag in ps.segments():
        seg_a.append(coords[ia])
        seg_b.append(coords[ib])
        seg_tags[(min(ia, ib), max(ia, ib))] = tag
    seg_a = np.array(seg_a)
    seg_b = np.array(seg_b)

    if len(lattice):
        keep = _dist_to_segments(lattice, seg_a, seg_b) >= _CLEARANCE * h
        for poly in remove_polys:
            keep &= ~points_in_polygon(lattice, poly)
        lattice = lattice[keep]

    pts = np.concatenate([coords, lattice]) if len(lattice) else coords
    tri = Delaunay(pts)
    simplices = tri.simplices.copy()

    # enforce counter-clockwise orientation
    p = pts[simplices]
    signed = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    flip = signed < 0.0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]

    centroids = pts[simplices].mean(axis=1)
    keep_tri = np.ones(len(simplices), dtype=bool)
    for poly in remove_polys:
        keep_tri &= ~points_in_polygon(centroids, poly)
    simplices = simplices[keep_tri]
    centroids = centroids[keep_tri]

    # drop unused points (e.g. none expected; guards singular FE systems)
    used = np.unique(simplices)
    if len(used) != len(pts):
        remap = -np.ones(len(pts), dtype=int)
        remap[used] = np.arange(len(used))
        old_new = remap
        pts = pts[used]
        simplices = old_new[simplices]
        seg_tags = {
            (min(old_new[i], old_new[j]), max(old_new[i], old_new[j])): t
            for (i, j), t in seg_tags.items()
            if old_new[i] >= 0 and old_new[j] >= 0
        }

    edge_count: dict[tuple[int, int], int] = {}
    for t in simplices:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1

    missing = [e for e in seg_tags if e not in edge_count]
    if missing:
        raise MeshError(
            f"{len(missing)} constraint segments not recovered by the "
            f"triangulation (first: {missing[0]}); refine target_h"
        )

    bedges, btags = [], []
    for edge, cnt in edge_count.items():
        if cnt == 1:
            tag = seg_tags.get(edge, None)
            if tag is None:
                raise MeshError(f"untagged boundary edge {edge}")
            bedges.append(edge)
            btags.append(int(tag))
        elif cnt > 2:
            raise MeshError(f"edge {edge} shared by {cnt} triangles")
    order = np.lexsort((np.array(bedges)[:, 1], np.array(bedges)[:, 0]))
    bedges = np.array(bedges, dtype=int)[order]
    btags = np.array(btags, dtype=int)[order]

    region = classify(centroids)
    return Mesh(
        nodes=pts,
        triangles=simplices,
        region=region.astype(np.int8),
        boundary_edges=bedges,
        boundary_tags=btags,
    )


def _rect_outline(ps: _PointSet, a, b, h, bottom_gap=None):
    """Rectangle boundary chains; bottom_gap=(x0, x1, anchors) opens a slot."""
    c_bl, c_br = (-a / 2.0, -b / 2.0), (a / 2.0, -b / 2.0)
    c_tr, c_tl = (a / 2.0, b / 2.0), (-a / 2.0, b / 2.0)
    ps.chain(_subdivide(c_br, c_tr, h), BoundaryTag.OUTER_RIGHT)
    ps.chain(_subdivide(c_tr, c_tl, h), BoundaryTag.OUTER_TOP)
    ps.chain(_subdivide(c_tl, c_bl, h), BoundaryTag.OUTER_LEFT)
    if bottom_gap is None:
        ps.chain(_subdivide(c_bl, c_br, h), BoundaryTag.OUTER_BOTTOM)
    else:
        x0, x1, anchors = bottom_gap
        knots = [c_bl[0]] + [x for x in anchors if x < x0] + [x0]
        for p, q in zip(knots[:-1], knots[1:]):
            ps.chain(_subdivide((p, -b / 2.0), (q, -b / 2.0), h), BoundaryTag.OUTER_BOTTOM)
        knots = [x1] + [x for x in anchors if x > x1] + [c_br[0]]
        for p, q in zip(knots[:-1], knots[1:]):
            ps.chain(_subdivide((p, -b / 2.0), (q, -b / 2.0), h), BoundaryTag.OUTER_BOTTOM)


def build_rectangle(a=6.0, b=4.0, h=0.2) -> Mesh:
    """Plain homogeneous rectangle; used for virtual bodies and patch tests."""
    ps = _PointSet()
    _rect_outline(ps, a, b, h)
    lattice = _hex_lattice(a, b, h)
    classify = lambda c: np.full(len(c), Region.EXTERIOR, dtype=int)
    return _triangulate(ps, lattice, [], classify, h)


def build_elliptic_hole(spec: GeometrySpec) -> Mesh:
    """Elliptic hole surrounded by an elliptic-annulus cloak."""
    ha, hb = spec.hole_semiaxes
    ca, cb = spec.cloak_semiaxes
    if ha <= 0 or hb <= 0 or ca <= ha or cb <= hb:
        raise MeshError("cloak outer rim must strictly contain the hole")
    if ca >= spec.rect_a / 2.0 or cb >= spec.rect_b / 2.0:
        raise MeshError("cloak must lie strictly inside the rectangle")
    h = spec.target_h
    ps = _PointSet()
    _rect_outline(ps, spec.rect_a, spec.rect_b, h)
    hole = _ellipse_arc((0.0, 0.0), ha, hb, 0.0, 2.0 * np.pi, h)[:-1]
    rim = _ellipse_arc((0.0, 0.0), ca, cb, 0.0, 2.0 * np.pi, h)[:-1]
    ps.chain(hole, BoundaryTag.HOLE, closed=True)
    ps.chain(rim, None, closed=True)
    lattice = _hex_lattice(spec.rect_a, spec.rect_b, h)

    def classify(c):
        mask = points_in_polygon(c, rim)
        return np.where(mask, Region.CLOAK, Region.EXTERIOR)

    return _triangulate(ps, lattice, [hole], classify, h)


def build_elliptic_cut(spec: GeometrySpec) -> Mesh:
    """Semi-elliptic cut on the bottom edge with a half-elliptic carpet cloak."""
    ka, kb = spec.cut_semiaxes
    ca, cb = spec.cut_cloak_semiaxes
    if ka <= 0 or kb <= 0 or ka >= ca or kb >= cb:
        raise MeshError("cloak semi-axes must strictly exceed the cut semi-axes")
    if ca >= spec.rect_a / 2.0 or cb >= spec.rect_b:
        raise MeshError("carpet cloak must fit inside the rectangle")
    h = spec.target_h
    y0 = -spec.rect_b / 2.0
    ps = _PointSet()
    _rect_outline(ps, spec.rect_a, spec.rect_b, h, bottom_gap=(-ka, ka, [-ca, ca]))

    def half_arc(a_, b_):
        if spec.symmetric:
            right = _ellipse_arc((0.0, y0), a_, b_, 0.0, np.pi / 2.0, h, n_min=4)
            right[0] = (a_, y0)
            right[-1] = (0.0, y0 + b_)
            left = _mirror_x(right[::-1])[1:]
            return np.concatenate([right, left])
        arc = _ellipse_arc((0.0, y0), a_, b_, 0.0, np.pi, h)
        arc[0] = (a_, y0)
        arc[-1] = (-a_, y0)
        return arc

    cut = half_arc(ka, kb)
    rim = half_arc(ca, cb)
    ps.chain(cut, BoundaryTag.CUT)
    ps.chain(rim, None)
    lattice = _hex_lattice(spec.rect_a, spec.rect_b, h)
    cut_poly = np.concatenate([cut, [[-ka, y0 - 0.1], [ka, y0 - 0.1]][::-1]])
    rim_poly = np.concatenate([rim, [[-ca, y0 - 0.1], [ca, y0 - 0.1]][::-1]])

    def classify(c):
        mask = points_in_polygon(c, rim_poly)
        return np.where(mask, Region.CLOAK, Region.EXTERIOR)

    return _triangulate(ps, lattice, [cut_poly], classify, h)


def _rotated_rect_loop(sides, angle_deg, h):
    w, v = sides[0] / 2.0, sides[1] / 2.0
    corners = np.array([[w, -v], [w, v], [-w, v], [-w, -v]])
    t = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    corners = corners @ rot.T
    spans = []
    for i in range(4):
        spans.append(_subdivide(corners[i], corners[(i + 1) % 4], h)[:-1])
    return np.concatenate(spans)


def build_rect_inhom(spec: GeometrySpec) -> Mesh:
    """Rotated rectangular stiff inhomogeneity hugged by a rectangular cloak band."""
    if spec.cloak_thickness <= 0:
        raise MeshError("cloak thickness must be positive")
    inner = spec.inhom_sides
    outer = (
        inner[0] + 2.0 * spec.cloak_thickness,
        inner[1] + 2.0 * spec.cloak_thickness,
    )
    half_diag = np.hypot(outer[0] / 2.0, outer[1] / 2.0)
    if half_diag >= min(spec.rect_a, spec.rect_b) / 2.0:
        raise MeshError("cloak must lie strictly inside the rectangle")
    h = spec.target_h
    ps = _PointSet()
    _rect_outline(ps, spec.rect_a, spec.rect_b, h)
    loop_in = _rotated_rect_loop(inner, spec.rotation_deg, h)
    loop_out = _rotated_rect_loop(outer, spec.rotation_deg, h)
    ps.chain(loop_in, None, closed=True)
    ps.chain(loop_out, None, closed=True)
    lattice = _hex_lattice(spec.rect_a, spec.rect_b, h)

    def classify(c):
        in_in = points_in_polygon(c, loop_in)
        in_out = points_in_polygon(c, loop_out)
        out = np.full(len(c), Region.EXTERIOR, dtype=int)
        out[in_out] = Region.CLOAK
        out[in_in] = Region.INHOMOGENEITY
        return out

    return _triangulate(ps, lattice, [], classify, h)


def place_disks(spec: GeometrySpec) -> np.ndarray:
    """Seeded rejection sampling of disk centers/radii; returns (n, 3) array."""
    rng = np.random.default_rng(spec.seed)
    radii = np.sort(
        rng.uniform(spec.disk_radius_range[0], spec.disk_radius_range[1], spec.n_disks)
    )[::-1]
    placed = []  # (x, y, r)
    attempts = 0
    for r in radii:
        rc = spec.disk_cloak_factor * r
        margin = rc + spec.clearance
        while True:
            attempts += 1
            if attempts > spec.max_attempts:
                raise MeshError(
                    f"disk placement failed after {spec.max_attempts} attempts "
                    f"(seed={spec.seed})"
                )
            x = rng.uniform(-spec.rect_a / 2.0 + margin, spec.rect_a / 2.0 - margin)
            y = rng.uniform(-spec.rect_b / 2.0 + margin, spec.rect_b / 2.0 - margin)
            ok = True
            for (px, py, pr) in placed:
                prc = spec.disk_cloak_factor * pr
                if np.hypot(x - px, y - py) < rc + prc + spec.clearance:
                    ok = False
                    break
            if ok:
                placed.append((x, y, r))
                break
    return np.array(placed) if placed else np.zeros((0, 3))


def build_random_disks(spec: GeometrySpec) -> Mesh:
    """Randomly placed stiff disks, each wrapped in an annular cloak."""
    if spec.disk_radius_range[0] > spec.disk_radius_range[1]:
        raise MeshError("empty disk radius range")
    h = spec.target_h
    disks = place_disks(spec)
    ps = _PointSet()
    _rect_outline(ps, spec.rect_a, spec.rect_b, h)
    inner_polys, outer_polys = [], []
    for (x, y, r) in disks:
        rc = spec.disk_cloak_factor * r
        inner = _ellipse_arc((x, y), r, r, 0.0, 2.0 * np.pi, h)[:-1]
        outer = _ellipse_arc((x, y), rc, rc, 0.0, 2.0 * np.pi, h)[:-1]
        ps.chain(inner, None, closed=True)
        ps.chain(outer, None, closed=True)
        inner_polys.append(inner)
        outer_polys.append(outer)
    lattice = _hex_lattice(spec.rect_a, spec.rect_b, h)

    def classify(c):
        out = np.full(len(c), Region.EXTERIOR, dtype=int)
        for poly in outer_polys:
            out[points_in_polygon(c, poly)] = Region.CLOAK
        for poly in inner_polys:
            out[points_in_polygon(c, poly)] = Region.INHOMOGENEITY
        return out

    return _triangulate(ps, lattice, [], classify, h)


def build(spec: GeometrySpec) -> Mesh:
    builders = {
        GeometryKind.ELLIPTIC_HOLE: build_elliptic_hole,
        GeometryKind.ELLIPTIC_CUT: build_elliptic_cut,
        GeometryKind.RECT_INHOM: build_rect_inhom,
        GeometryKind.RANDOM_DISKS: build_random_disks,
        GeometryKind.RECTANGLE: lambda s: build_rectangle(s.rect_a, s.rect_b, s.target_h),
    }
    return builders[spec.kind](spec)


def validate(mesh: Mesh) -> str:
    """Check all mesh invariants; returns 'OK' or the first violation."""
    if np.any(mesh.triangle_areas() <= 0.0):
        bad = int(np.argmax(mesh.triangle_areas() <= 0.0))
        return f"triangle {bad} has non-positive area"
    if np.any(mesh.triangles < 0) or np.any(mesh.triangles >= mesh.n_nodes):
        return "triangle references a node out of range"
    edge_count: dict[tuple[int, int], int] = {}
    for t in mesh.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    for edge, cnt in edge_count.items():
        if cnt > 2:
            return f"edge {edge} shared by {cnt} triangles (non-conforming)"
    listed = {tuple(e) for e in np.sort(mesh.boundary_edges, axis=1)}
    actual = {e for e, c in edge_count.items() if c == 1}
    if listed != actual:
        return "boundary edge list does not match triangulation boundary"
    if not np.all(np.isin(mesh.region, [r.value for r in Region])):
        return "invalid region tag"
    used = np.unique(mesh.triangles)
    if len(used) != mesh.n_nodes:
        return "mesh contains unused nodes"
    # hole/cut boundary edges must not touch exterior triangles
    hole_edges = {
        tuple(sorted(e))
        for e, t in zip(mesh.boundary_edges, mesh.boundary_tags)
        if t in (BoundaryTag.HOLE, BoundaryTag.CUT)
    }
    if hole_edges:
        for ti, t in enumerate(mesh.triangles):
            if mesh.region[ti] != Region.EXTERIOR:
                continue
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                if (min(a, b), max(a, b)) in hole_edges:
                    return f"exterior triangle {ti} touches a hole/cut edge"
    return "OK"


def save_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (17 significant digits)."""
    lines = ["cloakmesh 1", f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"tris {mesh.n_triangles}")
    lines += [
        f"{t[0]} {t[1]} {t[2]} {r}" for t, r in zip(mesh.triangles, mesh.region)
    ]
    lines.append(f"bedges {len(mesh.boundary_edges)}")
    lines += [
        f"{e[0]} {e[1]} {t}" for e, t in zip(mesh.boundary_edges, mesh.boundary_tags)
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read the plain-text mesh format, validating all invariants."""
    with open(path) as f:
        tokens = f.read().split("\n")
    lines = [ln for ln in tokens if ln.strip()]
    try:
        if lines[0].strip() != "cloakmesh 1":
            raise MeshError(f"unknown header {lines[0]!r}")
        pos = 1
        kw, n = lines[pos].split()
        if kw != "nodes":
            raise MeshError("expected 'nodes'")
        n = int(n)
        pos += 1
        nodes = np.array(
            [[float(v) for v in lines[pos + i].split()] for i in range(n)]
        )
        pos += n
        kw, m = lines[pos].split()
        if kw != "tris":
            raise MeshError("expected 'tris'")
        m = int(m)
        pos += 1
        rows = [[int(v) for v in lines[pos + i].split()] for i in range(m)]
        pos += m
        tris = np.array([r[:3] for r in rows], dtype=int)
        region = np.array([r[3] for r in rows], dtype=np.int8)
        kw, kk = lines[pos].split()
        if kw != "bedges":
            raise MeshError("expected 'bedges'")
        kk = int(kk)
        pos += 1
        brows = [[int(v) for v in lines[pos + i].split()] for i in range(kk)]
        bedges = np.array([r[:2] for r in brows], dtype=int).reshape(kk, 2)
        btags = np.array([r[2] for r in brows], dtype=int)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if nodes.shape != (n, 2):
        raise MeshError("node block has wrong shape")
    mesh = Mesh(
        nodes=nodes,
        triangles=tris,
        region=region,
        boundary_edges=bedges,
        boundary_tags=btags,
    )
    report = validate(mesh)
    if report != "OK":
        raise MeshError(report)
    return mesh
