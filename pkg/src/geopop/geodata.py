"""Vector footprints, raster grids, and their on-disk formats.

Footprints travel as GeoJSON FeatureCollections restricted to Polygon
geometries in planar meter coordinates. Rasters use the GPR1 container:

    b"GPR1" | uint32 LE header length N | N bytes UTF-8 JSON header | payload

where the header carries width, height, bands, origin_x, origin_y,
pixel_size and ``"dtype": "f32le"``, and the payload is band-sequential,
row-major little-endian float32 starting at the top-left pixel.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .errors import (
    GeoJSONError,
    GeometryError,
    RasterFormatError,
    TruncationError,
    UnsupportedGeometryError,
)

logger = logging.getLogger(__name__)

SQFT_PER_SQM = 10.763910417
AREA_RATIO_RTOL = 1e-4

Ring = tuple  # tuple of (x, y) float pairs


def ring_signed_area(ring) -> float:
    pts = np.asarray(ring, dtype=np.float64)
    x, y = pts[:-1, 0], pts[:-1, 1]
    x1, y1 = pts[1:, 0], pts[1:, 1]
    return 0.5 * float(np.sum(x * y1 - x1 * y))


def points_in_ring(px, py, ring) -> np.ndarray:
    """Even-odd ray casting for arrays of query points."""
    pts = np.asarray(ring, dtype=np.float64)
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    for (xa, ya), (xb, yb) in zip(pts[:-1], pts[1:]):
        if ya == yb:
            continue
        crosses = (ya > py) != (yb > py)
        xint = xa + (py - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (px < xint)
    return inside


def _normalize_ring(ring, what) -> Ring:
    try:
        pts = tuple((float(p[0]), float(p[1])) for p in ring)
    except (TypeError, ValueError, IndexError):
        raise GeometryError(f"{what}: coordinates must be [x, y] number pairs") from None
    if len(pts) < 4:
        raise GeometryError(f"{what}: ring needs at least 4 points, got {len(pts)}")
    if pts[0] != pts[-1]:
        raise GeometryError(f"{what}: ring is not closed")
    if not all(math.isfinite(v) for p in pts for v in p):
        raise GeometryError(f"{what}: non-finite coordinate")
    return pts


@dataclass(frozen=True)
class Polygon:
    """Closed exterior ring plus optional holes, planar meters."""

    exterior: Ring
    holes: tuple = ()

    def __post_init__(self):
        ext = _normalize_ring(self.exterior, "exterior")
        holes = tuple(_normalize_ring(h, f"hole {i}") for i, h in enumerate(self.holes))
        if ring_signed_area(ext) == 0.0:
            raise GeometryError("exterior ring has zero area")
        for i, h in enumerate(holes):
            hx = [p[0] for p in h[:-1]]
            hy = [p[1] for p in h[:-1]]
            if not points_in_ring(hx, hy, ext).all():
                raise GeometryError(f"hole {i} is not inside the exterior ring")
        object.__setattr__(self, "exterior", ext)
        object.__setattr__(self, "holes", holes)

    @classmethod
    def from_coordinates(cls, rings):
        if not rings:
            raise GeometryError("polygon has no rings")
        return cls(rings[0], tuple(rings[1:]))

    def rings(self):
        return (self.exterior,) + self.holes

    def bounds(self):
        pts = np.asarray(self.exterior)
        return float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max())

    def contains(self, px, py) -> np.ndarray:
        inside = points_in_ring(px, py, self.exterior)
        for h in self.holes:
            inside &= ~points_in_ring(px, py, h)
        return inside

    @classmethod
    def rectangle(cls, x0, y0, x1, y1):
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)))


@dataclass(frozen=True)
class FeatureRecord:
    """One building footprint and its derived attributes.

    ``res`` is 1 (residential), 0 (non-residential) or None (unknown).
    Derived numeric fields are None until computed. Unrecognised GeoJSON
    properties are carried in ``extra``.
    """

    uid: str
    geometry: Polygon
    build_type: Optional[str] = None
    roof_color: Optional[str] = None
    mean_elev: Optional[float] = None
    area_sqft: Optional[float] = None
    area_sqm: Optional[float] = None
    res: Optional[int] = None
    ht: Optional[float] = None
    population: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.res not in (None, 0, 1):
            raise ValueError(f"record {self.uid}: res must be 0, 1 or None, got {self.res!r}")
        if self.ht is not None and self.ht < 0:
            raise ValueError(f"record {self.uid}: negative height {self.ht}")
        if self.population is not None and self.res == 0 and self.population != 0:
            raise ValueError(f"record {self.uid}: non-residential building with population {self.population}")

    def evolve(self, **changes) -> "FeatureRecord":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Georeferenced float32 grid; ``data`` has shape (bands, height, width)."""

    data: np.ndarray
    origin_x: float
    origin_y: float
    pixel_size: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or 0 in arr.shape:
            raise RasterFormatError(f"raster data must be (bands, height, width), got {arr.shape}")
        if not self.pixel_size > 0:
            raise RasterFormatError(f"pixel_size must be positive, got {self.pixel_size}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def world_to_pixel(self, x, y):
        """Map ground coordinates to (row, col), north-up, top-left origin."""
        col = math.floor((x - self.origin_x) / self.pixel_size)
        row = math.floor((self.origin_y - y) / self.pixel_size)
        return row, col

    def pixel_centers(self, rows, cols):
        xs = self.origin_x + (np.asarray(cols) + 0.5) * self.pixel_size
        ys = self.origin_y - (np.asarray(rows) + 0.5) * self.pixel_size
        return xs, ys

    def extent(self):
        """(xmin, ymin, xmax, ymax) in ground units."""
        return (self.origin_x, self.origin_y - self.height * self.pixel_size,
                self.origin_x + self.width * self.pixel_size, self.origin_y)

    def header(self) -> dict:
        return {
            "width": self.width, "height": self.height, "bands": self.bands,
            "origin_x": self.origin_x, "origin_y": self.origin_y,
            "pixel_size": self.pixel_size, "dtype": "f32le",
        }

    def equals(self, other: "RasterGrid") -> bool:
        return self.header() == other.header() and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32))


@dataclass(frozen=True)
class Scene:
    imagery: RasterGrid
    dem: RasterGrid
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.dem.bands != 1:
            raise RasterFormatError(f"DEM must have one band, got {self.dem.bands}")
        a, b = self.imagery.extent(), self.dem.extent()
        if a[0] >= b[2] or b[0] >= a[2] or a[1] >= b[3] or b[1] >= a[3]:
            raise RasterFormatError("imagery and DEM extents do not overlap")


# GeoJSON ---------------------------------------------------------------------

_ALIASES = {
    "uid": ("UID", "uid"),
    "build_type": ("BuildType", "build_type"),
    "roof_color": ("RoofColor", "roof_color"),
    "mean_elev": ("_mean",),
    "area_sqft": ("Area_sqft",),
    "area_sqm": ("Area_sqm",),
    "res": ("res",),
    "ht": ("ht",),
    "population": ("population",),
}
_NUMERIC = ("mean_elev", "area_sqft", "area_sqm", "ht", "population")


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def parse_geojson(data: bytes | str) -> list[FeatureRecord]:
    """Parse a FeatureCollection of Polygon features into records."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        off = _byte_offset(text, exc.pos)
        raise GeoJSONError(f"malformed JSON at byte {off}: {exc.msg}", offset=off) from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise GeoJSONError("top-level object must be a FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise GeoJSONError("FeatureCollection.features must be an array")
    records = []
    for i, feat in enumerate(features):
        geom = (feat or {}).get("geometry") or {}
        gtype = geom.get("type")
        if gtype != "Polygon":
            raise UnsupportedGeometryError(
                f"feature {i}: unsupported geometry type {gtype!r} (Polygon only)", feature_index=i)
        try:
            poly = Polygon.from_coordinates(geom.get("coordinates") or [])
        except GeometryError as exc:
            raise GeometryError(f"feature {i}: {exc}") from None
        props = dict(feat.get("properties") or {})
        fields: dict[str, Any] = {}
        for name, keys in _ALIASES.items():
            for key in keys:
                if key in props:
                    fields[name] = props.pop(key)
                    break
        for name in _NUMERIC:
            if fields.get(name) is not None:
                fields[name] = float(fields[name])
        if fields.get("res") is not None:
            fields["res"] = int(fields["res"])
        uid = fields.pop("uid", None)
        if uid is None:
            uid = str(feat.get("id", i))
        try:
            rec = FeatureRecord(uid=str(uid), geometry=poly, extra=props, **fields)
        except ValueError as exc:
            raise GeoJSONError(f"feature {i}: {exc}", feature_index=i) from None
        records.append(rec)
    bad = check_area_consistency(records)
    if bad:
        logger.warning("%d record(s) have inconsistent Area_sqft/Area_sqm: %s",
                       len(bad), ", ".join(bad[:10]))
    return records


def check_area_consistency(records: Sequence[FeatureRecord], rtol=AREA_RATIO_RTOL) -> list[str]:
    """UIDs whose Area_sqft / Area_sqm ratio strays from 10.763910417."""
    bad = []
    for r in records:
        if r.area_sqft is None or r.area_sqm is None or r.area_sqm == 0:
            continue
        if abs(r.area_sqft / r.area_sqm / SQFT_PER_SQM - 1.0) > rtol:
            bad.append(r.uid)
    return bad


def _num(v) -> str:
    if isinstance(v, float) and v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return json.dumps(v)


def _ring_json(ring) -> str:
    return "[" + ",".join(f"[{x:.6f},{y:.6f}]" for x, y in ring) + "]"


def write_geojson(records: Sequence[FeatureRecord]) -> bytes:
    """Serialize records; coordinates carry 6 decimal places."""
    parts = []
    for r in records:
        if not isinstance(r.geometry, Polygon):
            raise GeometryError(f"record {r.uid}: geometry is not a Polygon")
        # re-validate in case a caller bypassed the constructor
        Polygon(r.geometry.exterior, r.geometry.holes)
        props: dict[str, Any] = {"UID": r.uid}
        if r.build_type is not None:
            props["BuildType"] = r.build_type
        if r.roof_color is not None:
            props["RoofColor"] = r.roof_color
        for name, key in (("mean_elev", "_mean"), ("area_sqft", "Area_sqft"),
                          ("area_sqm", "Area_sqm"), ("res", "res"), ("ht", "ht"),
                          ("population", "population")):
            v = getattr(r, name)
            if v is not None:
                props[key] = v
        for k, v in r.extra.items():
            props.setdefault(k, v)
        prop_json = "{" + ",".join(
            f"{json.dumps(k)}:{_num(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else json.dumps(v)}"
            for k, v in props.items()) + "}"
        coords = "[" + ",".join(_ring_json(ring) for ring in r.geometry.rings()) + "]"
        parts.append('{"type":"Feature","properties":' + prop_json
                     + ',"geometry":{"type":"Polygon","coordinates":' + coords + "}}")
    return ('{"type":"FeatureCollection","features":[' + ",\n".join(parts) + "]}\n").encode("utf-8")


# GPR1 ------------------------------------------------------------------------

GPR_MAGIC = b"GPR1"


def save_raster(grid: RasterGrid) -> bytes:
    header = json.dumps(grid.header(), sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    return GPR_MAGIC + struct.pack("<I", len(header)) + header + payload


def load_raster(data: bytes) -> RasterGrid:
    if len(data) < 8 or data[:4] != GPR_MAGIC:
        raise RasterFormatError("not a GPR1 raster (bad magic)")
    (hlen,) = struct.unpack("<I", data[4:8])
    if 8 + hlen > len(data):
        raise TruncationError("GPR1 header extends past end of file")
    try:
        h = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RasterFormatError(f"unreadable GPR1 header: {exc}") from None
    if h.get("dtype") != "f32le":
        raise RasterFormatError(f"unsupported dtype {h.get('dtype')!r}")
    try:
        w, ht, b = int(h["width"]), int(h["height"]), int(h["bands"])
        ox, oy, ps = float(h["origin_x"]), float(h["origin_y"]), float(h["pixel_size"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterFormatError(f"incomplete GPR1 header: {exc}") from None
    expected = w * ht * b
    payload = data[8 + hlen:]
    if len(payload) != 4 * expected:
        raise TruncationError(
            f"header declares {w}x{ht}x{b} = {expected} samples, payload holds {len(payload) / 4:g}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(b, ht, w)
    return RasterGrid(arr, ox, oy, ps)


def window_read(grid: RasterGrid, center_px, size: int) -> Optional[np.ndarray]:
    """Return the (bands, size, size) window around ``center_px`` or None.

    The window spans rows ``row - size//2 .. row + size//2 - 1`` (same for
    columns). None means the window would cross the grid edge.
    """
    if size <= 0 or size % 2:
        raise ValueError(f"window size must be even and positive, got {size}")
    row, col = center_px
    r0, c0 = row - size // 2, col - size // 2
    if r0 < 0 or c0 < 0 or r0 + size > grid.height or c0 + size > grid.width:
        return None
    return grid.data[:, r0:r0 + size, c0:c0 + size]
