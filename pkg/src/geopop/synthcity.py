"""Seeded synthetic city: imagery, DEM, rectangular footprints, true labels.

Buildings sit on a jittered lattice so footprints never overlap. Class
counts are allocated exactly (round(n * nonres_fraction) non-residential)
and then shuffled over the lattice. All randomness comes from one
``numpy.random.Generator`` consumed in a fixed order, so a config maps to
exactly one scene.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError
from .geodata import FeatureRecord, Polygon, RasterGrid, Scene, write_geojson


@dataclass
class SynthConfig:
    seed: int = 0
    n_buildings: int = 200
    nonres_fraction: float = 0.0261
    ground_elev: float = 17.5
    pixel_size: float = 0.3
    dem_pixel_size: float = 0.5
    bands: int = 4
    width_m: Optional[float] = None  # None sizes the scene to fit n_buildings
    height_m: Optional[float] = None
    margin: float = 10.0
    gap: float = 2.0
    res_side: tuple = (5.0, 13.0)
    nonres_side: tuple = (14.0, 20.0)
    res_height: tuple = (3.0, 24.0)
    nonres_height: tuple = (6.0, 30.0)
    ground_signature: tuple = (0.25, 0.30, 0.22, 0.45)
    res_signature: tuple = (0.50, 0.32, 0.28, 0.35)
    nonres_signature: tuple = (0.85, 0.85, 0.82, 0.60)
    texture: float = 0.08
    image_noise: float = 0.03
    dem_noise: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.nonres_fraction <= 1.0:
            raise ValueError("nonres_fraction must be in [0, 1]")
        for name in ("res_side", "nonres_side", "res_height", "nonres_height"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a non-empty positive range, got {(lo, hi)}")
        for name in ("ground_signature", "res_signature", "nonres_signature"):
            if len(getattr(self, name)) < self.bands:
                raise ValueError(f"{name} needs one value per band")

    @property
    def cell_size(self):
        return max(self.res_side[1], self.nonres_side[1]) + self.gap

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def _scene_size(cfg: SynthConfig):
    cell = cfg.cell_size
    side = max(1, math.ceil(math.sqrt(max(cfg.n_buildings, 1))))
    width = cfg.width_m if cfg.width_m is not None else 2 * cfg.margin + side * cell
    height = cfg.height_m if cfg.height_m is not None else 2 * cfg.margin + side * cell
    return width, height


def _cell_span(lo, hi, origin, ps, flip=False):
    """Inclusive pixel index range whose centres fall in [lo, hi]."""
    if flip:  # rows count downward from origin_y
        a = math.ceil((origin - hi) / ps - 0.5)
        b = math.floor((origin - lo) / ps - 0.5)
    else:
        a = math.ceil((lo - origin) / ps - 0.5)
        b = math.floor((hi - origin) / ps - 0.5)
    return a, b


def _snap(values):
    """Coordinates of the form k/1000 + 0.0005 m.

    Such values survive the 6-decimal GeoJSON encoding bit-for-bit and never
    coincide with a pixel centre, so painted cells and cell-centre-in-polygon
    tests agree exactly.
    """
    return [float(f"{math.floor(v * 1000) / 1000 + 0.0005:.4f}") for v in values]


def generate_scene(cfg: SynthConfig) -> Scene:
    rng = np.random.default_rng(cfg.seed)
    width, height = _scene_size(cfg)
    cell = cfg.cell_size
    ncols = int((width - 2 * cfg.margin) // cell)
    nrows = int((height - 2 * cfg.margin) // cell)
    n = cfg.n_buildings
    if n > max(ncols, 0) * max(nrows, 0):
        raise CapacityError(
            f"cannot place {n} buildings on a {ncols}x{nrows} lattice; "
            "use fewer buildings or a larger scene")

    n_nonres = int(round(n * cfg.nonres_fraction))
    is_res = np.ones(n, dtype=bool)
    is_res[:n_nonres] = False
    rng.shuffle(is_res)
    cells = rng.choice(ncols * nrows, size=n, replace=False) if n else np.zeros(0, dtype=int)

    u = rng.random((n, 5))
    side_lo = np.where(is_res, cfg.res_side[0], cfg.nonres_side[0])
    side_hi = np.where(is_res, cfg.res_side[1], cfg.nonres_side[1])
    w = side_lo + u[:, 0] * (side_hi - side_lo)
    d = side_lo + u[:, 1] * (side_hi - side_lo)
    h_lo = np.where(is_res, cfg.res_height[0], cfg.nonres_height[0])
    h_hi = np.where(is_res, cfg.res_height[1], cfg.nonres_height[1])
    heights = h_lo + u[:, 4] * (h_hi - h_lo)
    cx0 = cfg.margin + (cells % ncols) * cell
    cy0 = height - cfg.margin - (cells // ncols + 1) * cell
    half_gap = cfg.gap / 2
    x0 = cx0 + half_gap + u[:, 2] * (cell - cfg.gap - w)
    y0 = cy0 + half_gap + u[:, 3] * (cell - cfg.gap - d)
    x1 = _snap(x0 + w)
    y1 = _snap(y0 + d)
    x0 = _snap(x0)
    y0 = _snap(y0)

    # DEM: ground + noise, then building heights over covered cell centres
    ps_d = cfg.dem_pixel_size
    dem_w, dem_h = math.ceil(width / ps_d), math.ceil(height / ps_d)
    dem = np.full((dem_h, dem_w), cfg.ground_elev, dtype=np.float64)
    for i in range(n):
        r0, r1 = _cell_span(y0[i], y1[i], height, ps_d, flip=True)
        c0, c1 = _cell_span(x0[i], x1[i], 0.0, ps_d)
        dem[r0:r1 + 1, c0:c1 + 1] += heights[i]
    if cfg.dem_noise > 0:
        dem += rng.normal(0.0, cfg.dem_noise, size=dem.shape)

    # imagery: ground signature, roofs painted per class, then sensor noise
    ps = cfg.pixel_size
    img_w, img_h = math.ceil(width / ps), math.ceil(height / ps)
    img = np.empty((cfg.bands, img_h, img_w), dtype=np.float32)
    for b in range(cfg.bands):
        img[b] = cfg.ground_signature[b]
    for i in range(n):
        r0, r1 = _cell_span(y0[i], y1[i], height, ps, flip=True)
        c0, c1 = _cell_span(x0[i], x1[i], 0.0, ps)
        if r1 < r0 or c1 < c0:
            continue
        if is_res[i]:
            rows = np.arange(r1 - r0 + 1)
            # pitched roof: two planes split at the ridge, plus tile striping
            ridge = np.where(rows < (r1 - r0 + 1) / 2, 1.0, -1.0)
            stripes = np.where((rows // 2) % 2 == 0, 0.5, -0.5)
            pattern = (ridge + stripes)[:, None] * np.ones(c1 - c0 + 1)
            for b in range(cfg.bands):
                img[b, r0:r1 + 1, c0:c1 + 1] = cfg.res_signature[b] + cfg.texture * pattern
        else:
            for b in range(cfg.bands):
                img[b, r0:r1 + 1, c0:c1 + 1] = cfg.nonres_signature[b]
    if cfg.image_noise > 0:
        for b in range(cfg.bands):
            img[b] += rng.normal(0.0, cfg.image_noise, size=(img_h, img_w)).astype(np.float32)

    records = []
    for i in range(n):
        res = int(is_res[i])
        records.append(FeatureRecord(
            uid=f"b{i:06d}",
            geometry=Polygon.rectangle(x0[i], y0[i], x1[i], y1[i]),
            build_type="residential" if res else "non_residential",
            roof_color="red" if res else "white",
            res=res,
            extra={"true_ht": float(heights[i])},
        ))
    imagery = RasterGrid(img, 0.0, float(height), ps)
    dem_grid = RasterGrid(dem.astype(np.float32), 0.0, float(height), ps_d)
    return Scene(imagery, dem_grid, records)


def label_truth(scene: Scene) -> tuple[bytes, bytes]:
    """GeoJSON with labels and true heights, plus a JSON truth sidecar."""
    truth = {
        r.uid: {"res": r.res, "height": r.extra.get("true_ht")}
        for r in scene.records
    }
    sidecar = json.dumps(truth, sort_keys=True, indent=1).encode("utf-8")
    return write_geojson(scene.records), sidecar
