"""Geodesic helpers: distances, hulls, extent of occurrence and env grids."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from arete.errors import (
    EmptyGridError,
    EmptyInputError,
    GridFormatError,
    GridStateError,
    LongitudeSpanError,
    OutsideGridError,
)
from arete.records import Coordinate

EARTH_RADIUS_KM = 6371.0


def great_circle_km(a: Coordinate, b: Coordinate) -> float:
    """Haversine distance on a sphere of radius 6371 km."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def distance_matrix_km(points: Sequence[Coordinate]) -> np.ndarray:
    lat = np.radians([p.latitude for p in points])
    lon = np.radians([p.longitude for p in points])
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


@dataclass(frozen=True)
class GeoPolygon:
    """Convex polygon, counterclockwise in the (lon, lat) plane, no repeats."""

    vertices: tuple[Coordinate, ...]

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) < 3

    @property
    def planar_area(self) -> float:
        """Shoelace area in square degrees."""
        v = self.vertices
        if len(v) < 3:
            return 0.0
        s = 0.0
        for p, q in zip(v, v[1:] + v[:1]):
            s += p.longitude * q.latitude - q.longitude * p.latitude
        return abs(s) / 2

    @property
    def area_km2(self) -> float:
        return eoo_area_km2(self.vertices) if not self.is_degenerate else 0.0


def _cross(o: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _monotone_chain(pts: list[tuple[float, float]]) -> list[int]:
    """Indices of the strict convex hull of 2-D points, counterclockwise."""
    order = sorted(range(len(pts)), key=lambda i: pts[i])
    uniq: list[int] = []
    for i in order:
        if not uniq or pts[i] != pts[uniq[-1]]:
            uniq.append(i)
    if len(uniq) <= 2:
        return uniq

    def half(seq: list[int]) -> list[int]:
        chain: list[int] = []
        for i in seq:
            while len(chain) >= 2 and _cross(pts[chain[-2]], pts[chain[-1]], pts[i]) <= 0:
                chain.pop()
            chain.append(i)
        return chain

    lower, upper = half(uniq), half(uniq[::-1])
    return lower[:-1] + upper[:-1]


def convex_hull(points: Iterable[Coordinate]) -> GeoPolygon:
    """Planar hull over (lon, lat); collinear and interior points are dropped."""
    points = list(points)
    if not points:
        raise EmptyInputError("convex hull of an empty point set")
    idx = _monotone_chain([(p.longitude, p.latitude) for p in points])
    return GeoPolygon(tuple(points[i] for i in idx))


def _unit_vectors(points: Sequence[Coordinate]) -> np.ndarray:
    lat = np.radians([p.latitude for p in points])
    lon = np.radians([p.longitude for p in points])
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def _check_span(points: Sequence[Coordinate]) -> None:
    lons = [p.longitude for p in points]
    if max(lons) - min(lons) >= 180:
        raise LongitudeSpanError("points span 180 degrees of longitude or more; global hulls are unsupported")


def spherical_hull(points: Sequence[Coordinate]) -> list[Coordinate]:
    """Vertices of the spherical convex hull, via a gnomonic projection.

    The gnomonic projection maps great circles to straight lines, so a planar
    hull of the projected points is exactly the hull on the sphere.
    """
    xyz = _unit_vectors(points)
    center = xyz.sum(axis=0)
    norm = np.linalg.norm(center)
    if norm == 0:
        raise LongitudeSpanError("points do not lie within one hemisphere")
    center /= norm
    dots = xyz @ center
    if np.any(dots <= 1e-9):
        raise LongitudeSpanError("points do not lie within one hemisphere")
    helper = np.array([0.0, 0.0, 1.0]) if abs(center[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, center)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(center, e1)
    proj = xyz / dots[:, None]
    plane = [(float(u), float(v)) for u, v in zip(proj @ e1, proj @ e2)]
    return [points[i] for i in _monotone_chain(plane)]


def _lhuilier_excess(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    def arc(u: np.ndarray, v: np.ndarray) -> float:
        return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))

    sa, sb, sc = arc(b, c), arc(a, c), arc(a, b)
    s = (sa + sb + sc) / 2
    t = math.tan(s / 2) * math.tan((s - sa) / 2) * math.tan((s - sb) / 2) * math.tan((s - sc) / 2)
    return 4 * math.atan(math.sqrt(max(t, 0.0)))


def eoo_area_km2(points: Iterable[Coordinate]) -> float:
    """Extent of occurrence: area of the minimum convex polygon on the sphere.

    The hull is taken on the sphere itself and its area summed from
    L'Huilier spherical excesses of a triangle fan. Point sets that are
    degenerate in the (lon, lat) plane yield 0.
    """
    points = list(points)
    if not points:
        raise EmptyInputError("extent of occurrence of an empty point set")
    _check_span(points)
    if convex_hull(points).is_degenerate:
        return 0.0
    hull = spherical_hull(points)
    if len(hull) < 3:
        return 0.0
    v = _unit_vectors(hull)
    excess = sum(_lhuilier_excess(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1))
    return excess * EARTH_RADIUS_KM**2


def _on_segment(p: tuple[float, float], a: tuple[float, float], b: tuple[float, float], eps: float = 1e-12) -> bool:
    if abs(_cross(a, b, p)) > eps * max(1.0, abs(b[0] - a[0]) + abs(b[1] - a[1])):
        return False
    return min(a[0], b[0]) - eps <= p[0] <= max(a[0], b[0]) + eps and min(a[1], b[1]) - eps <= p[1] <= max(a[1], b[1]) + eps


def point_in_polygon(p: Coordinate, polygon: GeoPolygon | Region | Sequence[Coordinate]) -> bool:
    """Even-odd ray casting in the (lon, lat) plane; the boundary counts as inside."""
    verts = getattr(polygon, "vertices", polygon)
    pts = [(v.longitude, v.latitude) for v in verts]
    q = (p.longitude, p.latitude)
    if not pts:
        return False
    if len(pts) == 1:
        return q == pts[0]
    edges = list(zip(pts, pts[1:] + pts[:1]))
    if any(_on_segment(q, a, b) for a, b in edges):
        return True
    inside = False
    x, y = q
    for (x1, y1), (x2, y2) in edges:
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


@dataclass(frozen=True)
class Region:
    """Named, possibly non-convex polygon such as a country boundary."""

    name: str
    vertices: tuple[Coordinate, ...]


def load_regions(path: str | Path) -> list[Region]:
    """Read ``[{"name": ..., "vertices": [[lon, lat], ...]}, ...]``."""
    data = json.loads(Path(path).read_text("utf-8"))
    regions = []
    for item in data:
        verts = tuple(Coordinate(float(lat), float(lon)) for lon, lat in item["vertices"])
        regions.append(Region(str(item["name"]), verts))
    return regions


@dataclass(frozen=True)
class EnvFeatureGrid:
    cell_size_degrees: float
    origin: tuple[float, float]  # (lat, lon) of the lower-left corner
    n_features: int
    cells: Mapping[tuple[int, int], tuple[float, ...]] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self) -> None:
        if not self.cell_size_degrees > 0:
            raise GridFormatError("cell size must be positive")
        if self.n_features < 1:
            raise GridFormatError("grid needs at least one feature")
        for key, vec in self.cells.items():
            if len(vec) != self.n_features or not all(math.isfinite(x) for x in vec):
                raise GridFormatError(f"cell {key}: expected {self.n_features} finite features")

    def cell_of(self, p: Coordinate) -> tuple[int, int]:
        lat0, lon0 = self.origin
        return (
            math.floor((p.latitude - lat0) / self.cell_size_degrees),
            math.floor((p.longitude - lon0) / self.cell_size_degrees),
        )


def normalize_features(grid: EnvFeatureGrid) -> EnvFeatureGrid:
    """Min-max scale each feature to [0, 1]; constant features become 0."""
    if grid.normalized:
        raise GridStateError("grid is already normalized")
    if not grid.cells:
        raise EmptyGridError("grid has no populated cells")
    keys = sorted(grid.cells)
    values = np.array([grid.cells[k] for k in keys], dtype=float)
    lo, hi = values.min(axis=0), values.max(axis=0)
    span = hi - lo
    scaled = np.where(span > 0, (values - lo) / np.where(span > 0, span, 1.0), 0.0)
    cells = {k: tuple(float(x) for x in row) for k, row in zip(keys, scaled)}
    return replace(grid, cells=cells, normalized=True)


def env_vector_at(grid: EnvFeatureGrid, p: Coordinate) -> tuple[float, ...]:
    """Feature vector of the cell holding ``p``, else of the nearest populated neighbour."""
    if not grid.normalized:
        raise GridStateError("grid must be normalized before lookup")
    key = grid.cell_of(p)
    if key in grid.cells:
        return grid.cells[key]
    row, col = key
    neighbours = [
        (r, c)
        for r in (row - 1, row, row + 1)
        for c in (col - 1, col, col + 1)
        if (r, c) != key and (r, c) in grid.cells
    ]
    if not neighbours:
        raise OutsideGridError(f"no populated cell within one cell of ({p.latitude}, {p.longitude})")

    def dist2(k: tuple[int, int]) -> tuple[float, tuple[int, int]]:
        lat0, lon0 = grid.origin
        cs = grid.cell_size_degrees
        dlat = lat0 + (k[0] + 0.5) * cs - p.latitude
        dlon = lon0 + (k[1] + 0.5) * cs - p.longitude
        return (dlat * dlat + dlon * dlon, k)

    return grid.cells[min(neighbours, key=dist2)]


def _infer_spacing(values: list[float]) -> float | None:
    uniq = sorted(set(values))
    if len(uniq) < 2:
        return None
    return min(b - a for a, b in zip(uniq, uniq[1:]))


def read_env_grid(path: str | Path, tol: float = 1e-6) -> EnvFeatureGrid:
    """Load a ``lon,lat,f1,...,fn`` CSV of cell centres with uniform spacing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if len(header) < 3 or header[:2] != ["lon", "lat"]:
            raise GridFormatError("grid CSV header must start with lon,lat followed by feature columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise GridFormatError(f"line {lineno}: expected {len(header)} fields")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise GridFormatError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise EmptyGridError("grid CSV has no rows")
    lons = [r[0] for r in rows]
    lats = [r[1] for r in rows]
    spacings = [s for s in (_infer_spacing(lons), _infer_spacing(lats)) if s is not None]
    if not spacings:
        raise GridFormatError("cannot infer cell size from a single cell")
    cs = min(spacings)
    if max(spacings) - cs > tol:
        raise GridFormatError("grid spacing differs between lon and lat")
    lat0, lon0 = min(lats) - cs / 2, min(lons) - cs / 2
    cells: dict[tuple[int, int], tuple[float, ...]] = {}
    for r in rows:
        fr, fc = (r[1] - lat0) / cs - 0.5, (r[0] - lon0) / cs - 0.5
        if abs(fr - round(fr)) > 1e-6 or abs(fc - round(fc)) > 1e-6:
            raise GridFormatError(f"cell centre ({r[0]}, {r[1]}) is off the uniform grid")
        key = (int(round(fr)), int(round(fc)))
        if key in cells:
            raise GridFormatError(f"duplicate cell centre ({r[0]}, {r[1]})")
        cells[key] = tuple(r[2:])
    return EnvFeatureGrid(cs, (lat0, lon0), len(header) - 2, cells)


def write_env_grid(grid: EnvFeatureGrid, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lon", "lat", *(f"f{i + 1}" for i in range(grid.n_features))])
        lat0, lon0 = grid.origin
        cs = grid.cell_size_degrees
        for (row, col) in sorted(grid.cells):
            writer.writerow([repr(lon0 + (col + 0.5) * cs), repr(lat0 + (row + 0.5) * cs), *map(repr, grid.cells[(row, col)])])
