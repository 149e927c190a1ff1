import json

import numpy as np
import pytest

from geopop.errors import CapacityError
from geopop.features import compute_scene_stats, derive_attributes, zonal_mean
from geopop.geodata import parse_geojson, save_raster, write_geojson
from geopop.synthcity import SynthConfig, generate_scene, label_truth


def test_deterministic():
    cfg = SynthConfig(seed=3, n_buildings=30)
    a, b = generate_scene(cfg), generate_scene(cfg)
    assert save_raster(a.imagery) == save_raster(b.imagery)
    assert save_raster(a.dem) == save_raster(b.dem)
    assert write_geojson(a.records) == write_geojson(b.records)
    c = generate_scene(SynthConfig(seed=4, n_buildings=30))
    assert save_raster(c.dem) != save_raster(a.dem)


def test_empty_scene():
    sc = generate_scene(SynthConfig(seed=1, n_buildings=0))
    assert sc.records == ()
    assert np.std(sc.dem.data) > 0 and np.std(sc.imagery.data) > 0
    vectors, truth = label_truth(sc)
    assert parse_geojson(vectors) == [] and json.loads(truth) == {}


def test_zonal_mean_recovers_height():
    cfg = SynthConfig(seed=2, n_buildings=120)
    sc = generate_scene(cfg)
    for r in sc.records:
        err = zonal_mean(sc.dem, r.geometry) - cfg.ground_elev - r.extra["true_ht"]
        assert abs(err) < 2 * cfg.dem_noise


def test_export_then_derive():
    cfg = SynthConfig(seed=5, n_buildings=80)
    sc = generate_scene(cfg)
    vectors, truth = label_truth(sc)
    truth = json.loads(truth)
    recs = parse_geojson(vectors)
    assert [r.uid for r in recs] == sorted(truth)
    derived = derive_attributes(sc.__class__(sc.imagery, sc.dem, recs),
                                compute_scene_stats(sc, ground_elev=cfg.ground_elev)).scene
    for r in derived.records:
        assert abs(r.ht - truth[r.uid]["height"]) < 2 * cfg.dem_noise
        assert r.res == truth[r.uid]["res"]


def test_nonresidential_allocation_at_full_scale():
    cfg = SynthConfig(seed=0, n_buildings=15999, pixel_size=4.0, dem_pixel_size=4.0,
                      image_noise=0.0, dem_noise=0.0)
    sc = generate_scene(cfg)
    n_nonres = sum(r.res == 0 for r in sc.records)
    assert abs(n_nonres - 417) <= 2


def test_capacity_error():
    with pytest.raises(CapacityError):
        generate_scene(SynthConfig(n_buildings=100, width_m=60.0, height_m=60.0))


def test_signatures_separate_classes():
    sc = generate_scene(SynthConfig(seed=6, n_buildings=200, nonres_fraction=0.2))
    means = {0: [], 1: []}
    for r in sc.records:
        row, col = sc.imagery.world_to_pixel(*np.mean(r.geometry.exterior[:-1], axis=0))
        means[r.res].append(sc.imagery.data[0, row, col])
    assert min(means[0]) > max(means[1])
