"""Hexagonal tiling math over a rotated, translated lattice.

Tiles are identified by integer axial pairs ``(i, j)`` relative to a
:class:`HexFrame`; floating centers are always recomputed from indices.
The hexagons have circumradius ``side`` and their edge normals point at
bearings ``theta + 30deg + k*60deg``, i.e. towards the six neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EPS_POS = 1e-6
SQRT3 = math.sqrt(3.0)
_BOUNDARY_TOL = 1e-9

# axial offsets of the six neighbours, bearing theta + 30 + k*60
AXIAL_DIRECTIONS: tuple[tuple[int, int], ...] = (
    (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
)

Axial = tuple[int, int]


class Point(NamedTuple):
    x: float
    y: float


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class HexFrame:
    """One tiling portion: lattice placement plus the starter that created it."""

    origin: Point
    theta: float
    side: float
    starter_ts: float = 0.0
    starter_id: int = -1

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side}")
        if self.starter_ts < 0:
            raise ValueError("starter_ts must be >= 0")
        object.__setattr__(self, "origin", Point(float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "theta", float(self.theta) % (math.pi / 3))

    @property
    def key(self) -> tuple[float, int]:
        """Age order of portions: lower starter timestamp is older, ID breaks ties."""
        return (self.starter_ts, self.starter_id)

    @property
    def apothem(self) -> float:
        return self.side * SQRT3 / 2

    def to_dict(self) -> dict:
        return {
            "origin": [self.origin.x, self.origin.y],
            "theta": self.theta,
            "side": self.side,
            "starter_ts": self.starter_ts,
            "starter_id": self.starter_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HexFrame":
        return cls(Point(*d["origin"]), d["theta"], d["side"], d["starter_ts"], d["starter_id"])


@lru_cache(maxsize=4096)
def _basis(theta: float, side: float) -> tuple[float, float, float, float]:
    step = SQRT3 * side
    a = theta + math.pi / 6
    b = theta + math.pi / 2
    return (step * math.cos(a), step * math.sin(a), step * math.cos(b), step * math.sin(b))


def center_of(tile: Axial, frame: HexFrame) -> Point:
    ax, ay, bx, by = _basis(frame.theta, frame.side)
    i, j = tile
    return Point(frame.origin.x + i * ax + j * bx, frame.origin.y + i * ay + j * by)


def _fractional_axial(p: Sequence[float], frame: HexFrame) -> tuple[float, float]:
    ax, ay, bx, by = _basis(frame.theta, frame.side)
    dx = p[0] - frame.origin.x
    dy = p[1] - frame.origin.y
    det = ax * by - ay * bx
    return ((dx * by - dy * bx) / det, (ax * dy - ay * dx) / det)


def neighbors(tile: Axial) -> list[Axial]:
    i, j = tile
    return [(i + di, j + dj) for di, dj in AXIAL_DIRECTIONS]


def hex_distance(a: Axial, b: Axial) -> int:
    di = a[0] - b[0]
    dj = a[1] - b[1]
    return (abs(di) + abs(dj) + abs(di + dj)) // 2


def tile_of(p: Sequence[float], frame: HexFrame) -> Axial:
    """Axial index of the hexagon containing ``p``.

    Nearest lattice center wins; exact ties go to the lexicographically
    smaller axial index.
    """
    fi, fj = _fractional_axial(p, frame)
    base = (round(fi), round(fj))
    best = None
    best_d = math.inf
    for cand in [base] + neighbors(base):
        d = dist(p, center_of(cand, frame))
        if d < best_d - _BOUNDARY_TOL or (abs(d - best_d) <= _BOUNDARY_TOL and cand < best):
            best, best_d = cand, min(d, best_d)
    return best


def lattice_tile(center: Sequence[float], frame: HexFrame, tol: float = EPS_POS) -> Axial:
    """Axial index of a point that must be a lattice center (within ``tol``)."""
    tile = tile_of(center, frame)
    if dist(center, center_of(tile, frame)) > tol:
        raise ValueError(f"{tuple(center)} is not a lattice center of {frame}")
    return tile


def is_lattice_center(p: Sequence[float], frame: HexFrame, tol: float = EPS_POS) -> bool:
    return dist(p, center_of(tile_of(p, frame), frame)) <= tol


def adjacent_centers(center: Sequence[float], frame: HexFrame) -> list[Point]:
    tile = lattice_tile(center, frame)
    return [center_of(t, frame) for t in neighbors(tile)]


def owning_center(p: Sequence[float], frame: HexFrame) -> Point:
    return center_of(tile_of(p, frame), frame)


def point_in_hex(p: Sequence[float], center: Sequence[float], frame: HexFrame) -> bool:
    dx = p[0] - center[0]
    dy = p[1] - center[1]
    if dx * dx + dy * dy > frame.side * frame.side * (1 + 1e-12):
        return False
    ap = frame.apothem
    on_edge = False
    for k in range(3):
        ang = frame.theta + math.pi / 6 + k * math.pi / 3
        proj = abs(dx * math.cos(ang) + dy * math.sin(ang))
        if proj > ap + _BOUNDARY_TOL:
            return False
        if proj > ap - _BOUNDARY_TOL:
            on_edge = True
    if not on_edge:
        return True
    return dist(owning_center(p, frame), center) <= EPS_POS


def boundary_entry(start: Sequence[float], center: Sequence[float], frame: HexFrame) -> float:
    """Distance from ``center`` at which the segment start->center enters the hexagon.

    Returns 0 when the segment is degenerate and the straight-line distance
    when ``start`` is already inside.
    """
    dx = center[0] - start[0]
    dy = center[1] - start[1]
    length = math.hypot(dx, dy)
    if length == 0:
        return 0.0
    # Parametrise q(t) = start + t*(center-start); clip against the three slabs.
    t_enter = 0.0
    ap = frame.apothem
    for k in range(3):
        ang = frame.theta + math.pi / 6 + k * math.pi / 3
        nx, ny = math.cos(ang), math.sin(ang)
        s0 = (start[0] - center[0]) * nx + (start[1] - center[1]) * ny
        ds = dx * nx + dy * ny
        if abs(s0) <= ap:
            continue
        # moving from |s0| > ap towards 0, crosses at |s| == ap
        t = (math.copysign(ap, s0) - s0) / ds
        t_enter = max(t_enter, t)
    return length * (1 - t_enter)


# --- polygons -------------------------------------------------------------


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple(Point(float(v[0]), float(v[1])) for v in self.vertices)
        if len(verts) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(verts)}")
        if abs(_signed_area(verts)) <= 0:
            raise ValueError("polygon has zero area")
        if _self_intersects(verts):
            raise ValueError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return abs(_signed_area(self.vertices))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    @property
    def centroid(self) -> Point:
        a = _signed_area(self.vertices)
        cx = cy = 0.0
        n = len(self.vertices)
        for k in range(n):
            x0, y0 = self.vertices[k]
            x1, y1 = self.vertices[(k + 1) % n]
            cross = x0 * y1 - x1 * y0
            cx += (x0 + x1) * cross
            cy += (y0 + y1) * cross
        return Point(cx / (6 * a), cy / (6 * a))

    def contains(self, p: Sequence[float]) -> bool:
        return bool(points_in_polygon(np.array([p], dtype=float), self)[0])

    def distance(self, p: Sequence[float]) -> float:
        """Euclidean distance to the boundary (0 is not special-cased for the interior)."""
        best = math.inf
        n = len(self.vertices)
        for k in range(n):
            best = min(best, _seg_dist(p, self.vertices[k], self.vertices[(k + 1) % n]))
        return best

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls((Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)))


def _signed_area(verts: Sequence[Point]) -> float:
    s = 0.0
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _self_intersects(verts: Sequence[Point]) -> bool:
    n = len(verts)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]):
                return True
    return False


def _seg_dist(p, a, b) -> float:
    abx, aby = b[0] - a[0], b[1] - a[1]
    denom = abx * abx + aby * aby
    t = 0.0 if denom == 0 else ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (a[0] + t * abx), p[1] - (a[1] + t * aby))


def points_in_polygon(pts: np.ndarray, poly: Polygon) -> np.ndarray:
    """Vectorised even-odd ray casting."""
    x = pts[:, 0]
    y = pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    verts = poly.vertices
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        if y0 == y1:
            continue
        crosses = (y0 > y) != (y1 > y)
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < xint)
    return inside


def tile_needed(tile: Axial, frame: HexFrame, aoi: Polygon) -> bool:
    """A tile is a snap position when its inscribed disk reaches the AoI.

    Equivalently: its center is inside the AoI or within one apothem of it.
    """
    return _tile_needed(tile, frame, aoi)


@lru_cache(maxsize=200_000)
def _tile_needed(tile: Axial, frame: HexFrame, aoi: Polygon) -> bool:
    c = center_of(tile, frame)
    return aoi.contains(c) or aoi.distance(c) <= frame.apothem


def needed_tiles(frame: HexFrame, aoi: Polygon) -> set[Axial]:
    """All snap positions of ``frame`` for ``aoi`` (flood fill from the AoI interior)."""
    x0, y0, x1, y1 = aoi.bounds
    reach = frame.apothem + frame.side
    out: set[Axial] = set()
    seeds = [tile_of(p, frame) for p in aoi.vertices] + [tile_of(aoi.centroid, frame)]
    # grid of seeds guarantees every connected component of a concave AoI is hit
    step = frame.side
    for gx in np.arange(x0, x1 + step, step):
        for gy in np.arange(y0, y1 + step, step):
            if aoi.contains((gx, gy)):
                seeds.append(tile_of((gx, gy), frame))
    stack = [t for t in seeds if tile_needed(t, frame, aoi)]
    while stack:
        t = stack.pop()
        if t in out:
            continue
        c = center_of(t, frame)
        if not (x0 - reach <= c.x <= x1 + reach and y0 - reach <= c.y <= y1 + reach):
            continue
        out.add(t)
        stack.extend(n for n in neighbors(t) if n not in out and tile_needed(n, frame, aoi))
    return out


# --- coverage -------------------------------------------------------------


@lru_cache(maxsize=32)
def sample_grid(aoi: Polygon, resolution: float) -> np.ndarray:
    """Cell-center sample points of a square grid that fall inside ``aoi``."""
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    x0, y0, x1, y1 = aoi.bounds
    xs = np.arange(x0 + resolution / 2, x1, resolution)
    ys = np.arange(y0 + resolution / 2, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[points_in_polygon(pts, aoi)]
    pts.setflags(write=False)
    return pts


def coverage_fraction(snapped: Iterable[Sequence[float]], aoi: Polygon, r_s: float,
                      resolution: float = 0.25) -> float:
    if aoi is None:
        raise ValueError("empty AoI")
    pts = sample_grid(aoi, resolution)
    if len(pts) == 0:
        raise ValueError("AoI contains no sample points at this resolution")
    sensors = np.asarray(list(snapped), dtype=float).reshape(-1, 2)
    if len(sensors) == 0:
        return 0.0
    covered = np.zeros(len(pts), dtype=bool)
    r2 = r_s * r_s
    for sx, sy in sensors:
        covered |= (pts[:, 0] - sx) ** 2 + (pts[:, 1] - sy) ** 2 <= r2
    return float(covered.mean())


class CoverageCounter:
    """Incremental coverage: add/remove sensing disks, read the fraction."""

    def __init__(self, aoi: Polygon, r_s: float, resolution: float = 0.25):
        self.pts = sample_grid(aoi, resolution)
        self.r2 = r_s * r_s
        self.counts = np.zeros(len(self.pts), dtype=np.int32)
        self._covered = 0

    def _mask(self, p) -> np.ndarray:
        return (self.pts[:, 0] - p[0]) ** 2 + (self.pts[:, 1] - p[1]) ** 2 <= self.r2

    def add(self, p) -> None:
        m = self._mask(p)
        self._covered += int(np.count_nonzero(self.counts[m] == 0))
        self.counts[m] += 1

    def remove(self, p) -> None:
        m = self._mask(p)
        self.counts[m] -= 1
        self._covered -= int(np.count_nonzero(self.counts[m] == 0))

    @property
    def fraction(self) -> float:
        return self._covered / len(self.pts)
