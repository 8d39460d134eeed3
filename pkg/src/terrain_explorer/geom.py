"""2-D geometry kernel: polygons with holes, visibility, metrics, tile clipping.

Coordinates are plain (x, y) float tuples.  The terrain is a closed set: all
polygon boundaries belong to it, so a sight line may graze a boundary.
All predicates use double precision with a global tolerance EPS_GEOM;
generators keep features separated by >= 1e-3 so the tolerance never flips
a decision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point as ShapelyPoint, Polygon as ShapelyPolygon
from shapely.geometry.polygon import orient as shapely_orient
from shapely.prepared import prep

Point2 = tuple[float, float]

EPS_GEOM = 1e-9


class TerrainValidationError(ValueError):
    """Raised when a polygon or terrain violates its structural invariants."""


def dist(p: Point2, q: Point2) -> float:
    return math.hypot(q[0] - p[0], q[1] - p[1])


def polyline_length(pts: Sequence[Point2]) -> float:
    return sum(dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))


def signed_area(ring: Sequence[Point2]) -> float:
    """Shoelace area; positive for counterclockwise rings."""
    a = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return a / 2.0


def convex_hull(points: Sequence[Point2]) -> list[Point2]:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return list(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Point2] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point2] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hull_diameter(points: Sequence[Point2]) -> float:
    hull = convex_hull(points)
    best = 0.0
    for i in range(len(hull)):
        for j in range(i + 1, len(hull)):
            best = max(best, dist(hull[i], hull[j]))
    return best


def point_on_segment(p: Point2, a: Point2, b: Point2, tol: float = EPS_GEOM) -> bool:
    """True if p lies on the closed segment ab within tol (perpendicular distance)."""
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return dist(p, a) <= tol
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy) <= tol


def point_in_ring(p: Point2, ring: Sequence[Point2], tol: float = EPS_GEOM) -> int:
    """Classify p against a simple closed ring: 1 inside, 0 on boundary, -1 outside.

    Independent ray-casting, used as the brute-force oracle against the
    shapely-backed containment path.
    """
    n = len(ring)
    for i in range(n):
        if point_on_segment(p, ring[i], ring[(i + 1) % n], tol):
            return 0
    x, y = p
    inside = False
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xat = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xat > x:
                inside = not inside
    return 1 if inside else -1


# ---------------------------------------------------------------------------
# Boundary chains
# ---------------------------------------------------------------------------

class Chain:
    """A closed polygonal boundary parameterized by arc length.

    Vertices are stored without the duplicate closing point.  Each edge
    carries an origin tag ('terrain' or 'tile') used by cell accounting.
    """

    def __init__(self, pts: Sequence[Point2], tags: Optional[Sequence[str]] = None):
        if len(pts) < 3:
            raise TerrainValidationError("chain needs at least 3 vertices")
        self.pts: list[Point2] = [(float(x), float(y)) for x, y in pts]
        n = len(self.pts)
        self.tags: list[str] = list(tags) if tags is not None else ["terrain"] * n
        if len(self.tags) != n:
            raise TerrainValidationError("one tag per edge required")
        lens = [dist(self.pts[i], self.pts[(i + 1) % n]) for i in range(n)]
        if min(lens) <= 0.0:
            raise TerrainValidationError("degenerate zero-length edge")
        self.cum = np.concatenate([[0.0], np.cumsum(lens)])
        self.length = float(self.cum[-1])

    def __len__(self) -> int:
        return len(self.pts)

    def vertex_params(self) -> list[float]:
        return [float(t) for t in self.cum[:-1]]

    def _edge_index(self, t: float) -> tuple[int, float]:
        """Edge index and offset for an arc parameter in [0, length)."""
        t = t % self.length
        i = int(np.searchsorted(self.cum, t, side="right")) - 1
        i = min(max(i, 0), len(self.pts) - 1)
        return i, t - float(self.cum[i])

    def point_at(self, t: float) -> Point2:
        i, off = self._edge_index(t)
        a = self.pts[i]
        b = self.pts[(i + 1) % len(self.pts)]
        L = float(self.cum[i + 1] - self.cum[i])
        f = off / L
        return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))

    def locate(self, p: Point2, tol: float = 1e-6) -> float:
        """Arc parameter of a point lying on the chain (within tol)."""
        best_t, best_d = 0.0, float("inf")
        n = len(self.pts)
        for i in range(n):
            a, b = self.pts[i], self.pts[(i + 1) % n]
            dx, dy = b[0] - a[0], b[1] - a[1]
            L2 = dx * dx + dy * dy
            t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2
            t = min(1.0, max(0.0, t))
            cx, cy = a[0] + t * dx, a[1] + t * dy
            d = math.hypot(p[0] - cx, p[1] - cy)
            if d < best_d:
                best_d = d
                best_t = float(self.cum[i]) + t * math.sqrt(L2)
        if best_d > tol:
            raise ValueError(f"point {p} is {best_d:.3g} away from chain")
        return best_t % self.length

    def walk(self, t0: float, t1: float) -> list[Point2]:
        """Forward polyline from arc t0 to t1 (unwrapped: t1 may exceed length)."""
        if t1 < t0 - EPS_GEOM:
            raise ValueError("walk parameters must satisfy t1 >= t0")
        span = t1 - t0
        if span <= EPS_GEOM:
            return [self.point_at(t0)]
        pts = [self.point_at(t0)]
        n = len(self.pts)
        i, _ = self._edge_index(t0)
        t_edge_end = float(self.cum[i + 1]) + (t0 // self.length) * self.length
        if t_edge_end <= t0 + EPS_GEOM:
            i = (i + 1) % n
            t_edge_end += float(self.cum[(i) or n] - self.cum[i - 1]) if False else 0.0
        # advance vertex by vertex until t1
        t = t0
        while t_edge_end < t1 - EPS_GEOM:
            i = (i + 1) % n
            pts.append(self.pts[i])
            t = t_edge_end
            edge_len = float(self.cum[i + 1] - self.cum[i])
            t_edge_end += edge_len
        end = self.point_at(t1)
        if dist(pts[-1], end) > EPS_GEOM:
            pts.append(end)
        return pts

    def tagged_length(self, tag: str, t0: float, t1: float) -> float:
        """Arc length carrying `tag` within the unwrapped interval [t0, t1]."""
        if t1 <= t0:
            return 0.0
        total = 0.0
        n = len(self.pts)
        full_loops, rem0 = divmod(t0, self.length)
        per_loop = sum(
            float(self.cum[i + 1] - self.cum[i]) for i in range(n) if self.tags[i] == tag
        )
        # whole loops inside [t0, t1]
        span = t1 - t0
        loops = int(span // self.length)
        total += loops * per_loop
        a = t0 + loops * self.length
        t = a % self.length
        remaining = t1 - a
        while remaining > EPS_GEOM:
            i, off = self._edge_index(t)
            edge_len = float(self.cum[i + 1] - self.cum[i])
            take = min(edge_len - off, remaining)
            if self.tags[i] == tag:
                total += take
            remaining -= take
            t = (t + take) % self.length
        return total

    def edges(self) -> Iterable[tuple[float, float, Point2, Point2, str]]:
        """Yield (t_start, t_end, a, b, tag) per edge."""
        n = len(self.pts)
        for i in range(n):
            yield (
                float(self.cum[i]),
                float(self.cum[i + 1]),
                self.pts[i],
                self.pts[(i + 1) % n],
                self.tags[i],
            )


def boundary_walk(chain: Chain, frm: float, to: float) -> list[Point2]:
    """Polyline along the chain between two arc parameters, wrapping forward.

    The traversed length is (to - frm) mod total, except that a full-period
    difference with frm != to yields the complete boundary rather than an
    empty walk.
    """
    L = chain.length
    if not (-EPS_GEOM <= frm <= L + EPS_GEOM and -EPS_GEOM <= to <= L + EPS_GEOM):
        raise ValueError("arc parameters outside [0, chain length]")
    if abs(to - frm) <= EPS_GEOM:
        return [chain.point_at(frm)]
    span = (to - frm) % L
    if span <= EPS_GEOM:
        span = L
    return chain.walk(frm, frm + span)


# ---------------------------------------------------------------------------
# Core domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Square:
    """Axis-aligned square; membership is half-open.

    A square contains its East and South edges and excludes its West and
    North edges, so translated copies tile the plane exactly.
    """

    origin: Point2  # south-west corner
    side: float

    def __post_init__(self):
        if not (self.side > 0.0 and math.isfinite(self.side)):
            raise ValueError("square side must be positive and finite")

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(2.0)

    @property
    def center(self) -> Point2:
        return (self.origin[0] + self.side / 2.0, self.origin[1] + self.side / 2.0)

    def contains(self, p: Point2) -> bool:
        x0, y0 = self.origin
        return (x0 < p[0] <= x0 + self.side) and (y0 <= p[1] < y0 + self.side)

    def corners(self) -> list[Point2]:
        x0, y0 = self.origin
        s = self.side
        return [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]


def _validate_ring(ring: Sequence[Point2], what: str) -> list[Point2]:
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) >= 2 and dist(pts[0], pts[-1]) <= EPS_GEOM:
        pts = pts[:-1]
    if len(pts) < 3:
        raise TerrainValidationError(f"{what}: fewer than 3 vertices")
    for x, y in pts:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise TerrainValidationError(f"{what}: non-finite coordinate")
    for i in range(len(pts)):
        if dist(pts[i], pts[(i + 1) % len(pts)]) <= EPS_GEOM:
            raise TerrainValidationError(f"{what}: repeated consecutive vertex")
    if abs(signed_area(pts)) <= EPS_GEOM:
        raise TerrainValidationError(f"{what}: zero signed area")
    if not ShapelyPolygon(pts).is_valid:
        raise TerrainValidationError(f"{what}: self-intersecting polygon")
    return pts


class Terrain:
    """Outer polygon minus pairwise-disjoint polygonal obstacles.

    Orientation is normalized on construction: outer CCW, obstacles CW.
    Boundaries belong to the terrain (closed-set semantics).
    """

    def __init__(self, outer: Sequence[Point2], obstacles: Sequence[Sequence[Point2]] = ()):
        outer_pts = _validate_ring(outer, "outer polygon")
        if signed_area(outer_pts) < 0:
            outer_pts = outer_pts[::-1]
        obs_pts: list[list[Point2]] = []
        for i, ob in enumerate(obstacles):
            pts = _validate_ring(ob, f"obstacle {i}")
            if signed_area(pts) > 0:
                pts = pts[::-1]
            obs_pts.append(pts)
        self.outer: list[Point2] = outer_pts
        self.obstacles: list[list[Point2]] = obs_pts
        self._validate_structure()
        self._chains: Optional[list[Chain]] = None
        self._poly = None
        self._dilated = None
        self._prepared_dilated = None
        self._boundary = None

    def _validate_structure(self) -> None:
        outer_poly = ShapelyPolygon(self.outer)
        prepared_outer = prep(outer_poly)
        polys = []
        for i, ob in enumerate(self.obstacles):
            p = ShapelyPolygon(ob)
            if not prepared_outer.contains_properly(p):
                raise TerrainValidationError(f"obstacle {i} not strictly inside outer polygon")
            polys.append(p)
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                if polys[i].distance(polys[j]) <= 0.0:
                    raise TerrainValidationError(f"obstacles {i} and {j} are not disjoint")

    # -- shapely-backed derived geometry (cached) --

    @property
    def shapely_polygon(self) -> ShapelyPolygon:
        if self._poly is None:
            self._poly = ShapelyPolygon(self.outer, [ob for ob in self.obstacles])
            shapely.prepare(self._poly)
        return self._poly

    @property
    def boundary_geom(self):
        if self._boundary is None:
            self._boundary = self.shapely_polygon.boundary
            shapely.prepare(self._boundary)
        return self._boundary

    def _dilated_poly(self):
        # tiny outward dilation so points constructed on the boundary are
        # covered despite float rounding; generators keep features >= 1e-3
        # apart so this can never flip a true decision
        if self._dilated is None:
            self._dilated = self.shapely_polygon.buffer(
                EPS_GEOM, quad_segs=1, join_style="mitre", mitre_limit=4.0
            )
            shapely.prepare(self._dilated)
        return self._dilated

    @property
    def chains(self) -> list[Chain]:
        """Chain 0 is the outer boundary; chain i+1 is obstacle i."""
        if self._chains is None:
            self._chains = [Chain(self.outer)] + [Chain(ob) for ob in self.obstacles]
        return self._chains

    def chain_of(self, polygon_id: int) -> Chain:
        return self.chains[polygon_id]

    @property
    def k(self) -> int:
        return len(self.obstacles)

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.outer]
        ys = [p[1] for p in self.outer]
        return min(xs), min(ys), max(xs), max(ys)

    def contains_point(self, p: Point2, tol: float = EPS_GEOM) -> bool:
        """Closed-set membership: boundary points belong to the terrain."""
        if point_in_ring(p, self.outer, tol) < 0:
            return False
        for ob in self.obstacles:
            if point_in_ring(p, ob, tol) > 0:
                return False
        return True

    def contains_point_strict(self, p: Point2, tol: float = EPS_GEOM) -> bool:
        """Open-set membership: strictly inside the outer, off every boundary."""
        if point_in_ring(p, self.outer, tol) <= 0:
            return False
        for ob in self.obstacles:
            if point_in_ring(p, ob, tol) >= 0:
                return False
        return True

    def segment_free(self, p: Point2, q: Point2) -> bool:
        """Segment pq inside the closed terrain; no endpoint validation."""
        if dist(p, q) <= EPS_GEOM:
            return self._dilated_poly().covers(ShapelyPoint(p))
        return self._dilated_poly().covers(LineString([p, q]))

    # -- serialization --

    def to_jsonable(self) -> dict:
        return {
            "outer": [[x, y] for x, y in self.outer],
            "obstacles": [[[x, y] for x, y in ob] for ob in self.obstacles],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_jsonable(), fh)
            fh.write("\n")

    @classmethod
    def from_jsonable(cls, data: dict) -> "Terrain":
        return cls(data["outer"], data.get("obstacles", []))

    @classmethod
    def load(cls, path) -> "Terrain":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_jsonable(json.load(fh))


# ---------------------------------------------------------------------------
# Spec operations
# ---------------------------------------------------------------------------

def segment_in_terrain(t: Terrain, p: Point2, q: Point2) -> bool:
    """True iff every point of segment pq lies in the closed terrain.

    Grazing contact with a boundary counts as contained.  Raises ValueError
    if an endpoint is outside the closed terrain (caller bug).
    """
    for name, pt in (("p", p), ("q", q)):
        if not t.contains_point(pt, tol=1e-7):
            raise ValueError(f"endpoint {name}={pt} outside the closed terrain")
    return t.segment_free(p, q)


def visible(t: Terrain, p: Point2, q: Point2, vision_range: float = math.inf) -> bool:
    """Mutual visibility: segment containment plus the range cap (closed)."""
    if dist(p, q) > vision_range + EPS_GEOM:
        return False
    return segment_in_terrain(t, p, q)


def metrics(t: Terrain) -> tuple[float, float, float, int]:
    """Terrain metrics (P, A, D, k).

    P: total perimeter including obstacle boundaries; A: area of the outer
    polygon minus obstacle areas; D: diameter of the convex hull of the
    outer polygon's vertices; k: obstacle count.
    """
    P = sum(c.length for c in t.chains)
    A = abs(signed_area(t.outer)) - sum(abs(signed_area(ob)) for ob in t.obstacles)
    D = hull_diameter(t.outer)
    return P, A, D, t.k


@dataclass
class CellRegion:
    """One connected component of terrain-intersect-tile.

    Boundary edges of the outer chain are tagged by origin: 'terrain' for
    pieces inherited from the terrain boundary, 'tile' for pieces of the
    tile border.  Holes are obstacles lying wholly inside the component.
    """

    outer_chain: Chain
    holes: list[Chain]
    hole_ids: list[int]  # terrain obstacle index per hole
    tile: Square
    area: float
    terrain_boundary_length: float  # includes hole perimeters
    tile_boundary_length: float
    key: tuple = ()
    _poly: object = field(default=None, repr=False, compare=False)
    _dilated: object = field(default=None, repr=False, compare=False)

    @property
    def A_C(self) -> float:
        return self.area

    @property
    def P_C(self) -> float:
        return self.terrain_boundary_length

    @property
    def R_C(self) -> float:
        return self.tile_boundary_length

    def polygon(self):
        if self._poly is None:
            self._poly = ShapelyPolygon(self.outer_chain.pts, [h.pts for h in self.holes])
            shapely.prepare(self._poly)
        return self._poly

    def covers_point(self, p: Point2) -> bool:
        return self.polygon().distance(ShapelyPoint(p)) <= 1e-9

    def segment_free(self, p: Point2, q: Point2) -> bool:
        if self._dilated is None:
            self._dilated = self.polygon().buffer(
                EPS_GEOM, quad_segs=1, join_style="mitre", mitre_limit=4.0
            )
            shapely.prepare(self._dilated)
        if dist(p, q) <= EPS_GEOM:
            return self._dilated.covers(ShapelyPoint(p))
        return self._dilated.covers(LineString([p, q]))


def _ring_coords(ring) -> list[Point2]:
    pts = [(float(x), float(y)) for x, y in ring.coords]
    if len(pts) >= 2 and dist(pts[0], pts[-1]) <= 1e-12:
        pts = pts[:-1]
    out: list[Point2] = []
    for p in pts:
        if not out or dist(out[-1], p) > 1e-12:
            out.append(p)
    while len(out) >= 2 and dist(out[0], out[-1]) <= 1e-12:
        out.pop()
    return out


def clip_to_tile(t: Terrain, tile: Square, key_prefix: tuple = ()) -> list[CellRegion]:
    """Connected components of terrain-intersect-tile as CellRegions.

    Components are sorted by bounding box for determinism.  Returns an empty
    list when the tile misses the terrain.
    """
    x0, y0 = tile.origin
    box = shapely.box(x0, y0, x0 + tile.side, y0 + tile.side)
    inter = t.shapely_polygon.intersection(box)
    geoms = list(getattr(inter, "geoms", [inter]))
    comps = [g for g in geoms if isinstance(g, ShapelyPolygon) and g.area > 1e-12]
    comps.sort(key=lambda g: tuple(round(v, 9) for v in g.bounds))

    obstacle_centroids = [
        (abs(signed_area(ob)), _ring_centroid(ob)) for ob in t.obstacles
    ]

    cells: list[CellRegion] = []
    for ci, g in enumerate(comps):
        g = shapely_orient(g, 1.0)  # exterior CCW, interiors CW
        ext = _ring_coords(g.exterior)
        mids = [
            ((ext[i][0] + ext[(i + 1) % len(ext)][0]) / 2.0,
             (ext[i][1] + ext[(i + 1) % len(ext)][1]) / 2.0)
            for i in range(len(ext))
        ]
        d = shapely.distance(shapely.points(np.asarray(mids)), t.boundary_geom)
        tags = ["terrain" if di <= 1e-9 else "tile" for di in d]
        outer_chain = Chain(ext, tags)

        holes: list[Chain] = []
        hole_ids: list[int] = []
        for ring in g.interiors:
            pts = _ring_coords(ring)
            if signed_area(pts) > 0:
                pts = pts[::-1]
            c = _ring_centroid(pts)
            oid = min(
                range(len(obstacle_centroids)),
                key=lambda i: dist(obstacle_centroids[i][1], c),
            )
            holes.append(Chain(pts))
            hole_ids.append(oid)

        p_len = sum(
            float(outer_chain.cum[i + 1] - outer_chain.cum[i])
            for i in range(len(ext))
            if tags[i] == "terrain"
        ) + sum(h.length for h in holes)
        r_len = outer_chain.length + sum(h.length for h in holes) - p_len

        cells.append(
            CellRegion(
                outer_chain=outer_chain,
                holes=holes,
                hole_ids=hole_ids,
                tile=tile,
                area=float(g.area),
                terrain_boundary_length=p_len,
                tile_boundary_length=r_len,
                key=key_prefix + (ci,),
            )
        )
    return cells


def _ring_centroid(ring: Sequence[Point2]) -> Point2:
    a = signed_area(ring)
    cx = cy = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        w = x0 * y1 - x1 * y0
        cx += (x0 + x1) * w
        cy += (y0 + y1) * w
    if abs(a) < 1e-300:
        return ring[0]
    return (cx / (6.0 * a), cy / (6.0 * a))


def interior_point(t: Terrain, min_clearance: float = 1e-3) -> Point2:
    """Deterministic interior point with clearance from every boundary."""
    rp = t.shapely_polygon.representative_point()
    cand = (float(rp.x), float(rp.y))
    if t.boundary_geom.distance(ShapelyPoint(cand)) >= min_clearance:
        return cand
    minx, miny, maxx, maxy = t.bbox()
    n = 64
    best = None
    best_d = 0.0
    for iy in range(1, n):
        for ix in range(1, n):
            p = (minx + (maxx - minx) * ix / n, miny + (maxy - miny) * iy / n)
            if not t.contains_point_strict(p):
                continue
            d = t.boundary_geom.distance(ShapelyPoint(p))
            if d > best_d:
                best_d, best = d, p
            if d >= min_clearance:
                return p
    if best is None:
        raise ValueError("no interior point with positive clearance found")
    return best
