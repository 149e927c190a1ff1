"""Per-building attributes (area, elevation, height) and CNN input patches."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CoverageError, GeometryError
from .geodata import (
    SQFT_PER_SQM,
    FeatureRecord,
    Polygon,
    RasterGrid,
    Scene,
    ring_signed_area,
    window_read,
)

logger = logging.getLogger(__name__)

PATCH_SIZE = 64
DEGENERATE_AREA = 1e-9


@dataclass(frozen=True)
class Patch:
    uid: str
    values: np.ndarray  # (C, 64, 64), float32 in [0, 1]
    label: Optional[int] = None


@dataclass(frozen=True)
class SceneStats:
    band_min: tuple
    band_max: tuple
    ground_elev: float

    def to_dict(self):
        return {"band_min": list(self.band_min), "band_max": list(self.band_max),
                "ground_elev": self.ground_elev}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["band_min"]), tuple(d["band_max"]), float(d["ground_elev"]))


def polygon_area_sqm(p: Polygon) -> float:
    area = abs(ring_signed_area(p.exterior)) - sum(abs(ring_signed_area(h)) for h in p.holes)
    if area < DEGENERATE_AREA:
        raise GeometryError(f"degenerate polygon (area {area:g})")
    return area


def area_sqm_to_sqft(a: float) -> float:
    return a * SQFT_PER_SQM


def _ring_moments(ring):
    pts = np.asarray(ring, dtype=np.float64)
    x, y = pts[:-1, 0], pts[:-1, 1]
    x1, y1 = pts[1:, 0], pts[1:, 1]
    cross = x * y1 - x1 * y
    a = 0.5 * cross.sum()
    return a, ((x + x1) * cross).sum() / 6.0, ((y + y1) * cross).sum() / 6.0


def centroid(p: Polygon) -> tuple[float, float]:
    """Area-weighted centroid; holes subtract their moments."""
    a, mx, my = _ring_moments(p.exterior)
    sign = 1.0 if a > 0 else -1.0
    a, mx, my = a * sign, mx * sign, my * sign
    for h in p.holes:
        ha, hx, hy = _ring_moments(h)
        s = 1.0 if ha > 0 else -1.0
        a -= ha * s
        mx -= hx * s
        my -= hy * s
    if abs(a) < DEGENERATE_AREA:
        raise GeometryError(f"degenerate polygon (area {a:g})")
    return mx / a, my / a


def zonal_mean(dem: RasterGrid, p: Polygon, band: int = 0) -> float:
    """Mean of cells whose centre lies inside ``p``.

    Footprints too small to contain any cell centre fall back to the cell
    under the centroid (clamped to the grid).
    """
    xmin, ymin, xmax, ymax = p.bounds()
    exmin, eymin, exmax, eymax = dem.extent()
    if xmax <= exmin or xmin >= exmax or ymax <= eymin or ymin >= eymax:
        raise CoverageError("polygon lies outside the raster extent")
    ps = dem.pixel_size
    c0 = max(0, math.floor((xmin - dem.origin_x) / ps - 0.5))
    c1 = min(dem.width - 1, math.ceil((xmax - dem.origin_x) / ps - 0.5))
    r0 = max(0, math.floor((dem.origin_y - ymax) / ps - 0.5))
    r1 = min(dem.height - 1, math.ceil((dem.origin_y - ymin) / ps - 0.5))
    values = np.empty(0)
    if c1 >= c0 and r1 >= r0:
        rows, cols = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        xs, ys = dem.pixel_centers(rows, cols)
        inside = p.contains(xs, ys)
        values = dem.data[band, r0:r1 + 1, c0:c1 + 1][inside]
    if values.size:
        return float(np.mean(values, dtype=np.float64))
    cx, cy = centroid(p)
    row, col = dem.world_to_pixel(cx, cy)
    row = min(max(row, 0), dem.height - 1)
    col = min(max(col, 0), dem.width - 1)
    return float(dem.data[band, row, col])


def derive_height(mean_elev: float, stats: SceneStats) -> float:
    return max(0.0, mean_elev - stats.ground_elev)


def band_ranges(imagery: RasterGrid):
    """Per-band (min, max) over finite imagery values."""
    mins, maxs = [], []
    for band in imagery.data:
        finite = band[np.isfinite(band)]
        if finite.size == 0:
            raise ValueError("imagery band has no finite values")
        mins.append(float(finite.min()))
        maxs.append(float(finite.max()))
    return tuple(mins), tuple(maxs)


def compute_scene_stats(scene: Scene, ground_percentile: float = 0.05,
                        ground_elev: Optional[float] = None) -> SceneStats:
    """Per-band imagery min/max and the ground reference elevation.

    ``ground_elev`` overrides the DEM percentile when given.
    """
    if not 0.0 <= ground_percentile <= 1.0:
        raise ValueError(f"ground_percentile must be in [0, 1], got {ground_percentile}")
    if scene.dem.data.size == 0:
        raise ValueError("empty raster")
    mins, maxs = band_ranges(scene.imagery)
    if ground_elev is None:
        dem = scene.dem.data.ravel()
        dem = dem[np.isfinite(dem)]
        if dem.size == 0:
            raise ValueError("DEM has no finite values")
        ground_elev = float(np.quantile(dem.astype(np.float64), ground_percentile))
    return SceneStats(mins, maxs, float(ground_elev))


def normalize_window(window: np.ndarray, stats: SceneStats) -> np.ndarray:
    lo = np.asarray(stats.band_min, dtype=np.float64)[:, None, None]
    hi = np.asarray(stats.band_max, dtype=np.float64)[:, None, None]
    span = hi - lo
    out = (window - lo) / np.where(span == 0, 1.0, span)
    out = np.where(span == 0, 0.0, out)
    # values outside the fitted range (another scene) are clipped
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def extract_patch(scene: Scene, rec: FeatureRecord, stats: SceneStats,
                  size: int = PATCH_SIZE) -> Optional[Patch]:
    """Normalized window centred on the footprint centroid, or None if discarded."""
    cx, cy = centroid(rec.geometry)
    window = window_read(scene.imagery, scene.imagery.world_to_pixel(cx, cy), size)
    if window is None or not np.all(np.isfinite(window)):
        return None
    if len(stats.band_min) != window.shape[0]:
        raise ValueError(f"stats cover {len(stats.band_min)} bands, imagery has {window.shape[0]}")
    return Patch(rec.uid, normalize_window(window, stats), rec.res)


def extract_patches(scene: Scene, stats: SceneStats, size: int = PATCH_SIZE):
    """Patches for every record, None where discarded; order follows ``scene.records``."""
    return [extract_patch(scene, r, stats, size) for r in scene.records]


def intensity_mean(imagery: RasterGrid, p: Polygon) -> float:
    """Mean over bands of the per-band footprint zonal means."""
    return float(np.mean([zonal_mean(imagery, p, band=b) for b in range(imagery.bands)]))


@dataclass
class DeriveReport:
    scene: Scene
    errors: list  # [{"uid", "error"}]


def derive_attributes(scene: Scene, stats: SceneStats, with_intensity: bool = False) -> DeriveReport:
    """Fill area, mean elevation and height for every record.

    Records that fail (degenerate or outside the DEM) keep their previous
    values and are listed in the report.
    """
    out, errors = [], []
    for rec in scene.records:
        try:
            area = polygon_area_sqm(rec.geometry)
            mean_elev = zonal_mean(scene.dem, rec.geometry)
            changes = dict(area_sqm=area, area_sqft=area_sqm_to_sqft(area),
                           mean_elev=mean_elev, ht=derive_height(mean_elev, stats))
            if with_intensity:
                extra = dict(rec.extra)
                extra["intensity_mean"] = intensity_mean(scene.imagery, rec.geometry)
                changes["extra"] = extra
            out.append(rec.evolve(**changes))
        except (CoverageError, GeometryError) as exc:
            errors.append({"uid": rec.uid, "error": f"{type(exc).__name__}: {exc}"})
            out.append(rec)
    if errors:
        logger.warning("attribute derivation failed for %d record(s)", len(errors))
    return DeriveReport(Scene(scene.imagery, scene.dem, out), errors)
