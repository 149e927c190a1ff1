import logging

import numpy as np
import pytest

from geopop.errors import LabellingError
from geopop.geodata import FeatureRecord, Polygon
from geopop.nn import load_bundle, save_bundle
from geopop.population import (
    AnnConfig, OccupancyRule, build_ann, feature_vector, floors_from_height, label_population,
    predict_population, render_report_table, residents_per_floor, size_report,
    synthetic_population, train_regressor,
)
from geopop.seeding import derive_seed

from oracles import rule_population

SQ = Polygon.rectangle(0, 0, 10, 10)


def rec(uid="a", res=1, area=None, ht=None, mean=None, pop=None, **kw):
    sqft = None if area is None else area * 10.763910417
    return FeatureRecord(uid, SQ, res=res, area_sqm=area, area_sqft=sqft, ht=ht, mean_elev=mean,
                         population=pop, **kw)


@pytest.mark.parametrize("h,floors", [(2, 1), (7.7176, 2), (61.2562, 20), (3.0, 1), (5.999, 1)])
def test_floors(h, floors):
    assert floors_from_height(h) == floors


def test_floors_half_up_variant():
    assert floors_from_height(7.7176, OccupancyRule(rounding="half_up")) == 3


@pytest.mark.parametrize("area,h,per", [(40, 12, 4), (200, 8, 6), (200, 15, 10), (200, 3.9, 4)])
def test_residents_per_floor(area, h, per):
    assert residents_per_floor(area, h) == per


def test_synthetic_population_examples():
    assert synthetic_population(rec(res=0)) == 0
    assert synthetic_population(rec(area=144.19, ht=7.72)) == 12
    assert synthetic_population(rec(area=40, ht=2)) == 4


def test_synthetic_population_missing_inputs():
    with pytest.raises(LabellingError):
        synthetic_population(rec(area=100))
    with pytest.raises(LabellingError):
        synthetic_population(rec(res=None, area=100, ht=5))


def test_rule_grid_vs_oracle():
    for area in np.linspace(0, 300, 61):
        for h in np.linspace(0, 70, 141):
            r = rec(area=float(area), ht=float(h))
            assert synthetic_population(r) == rule_population(1, area, h)


def test_label_population_collects_errors():
    recs, errors = label_population([rec("a", area=60, ht=6), rec("b", area=60), rec("c", res=0)])
    assert [r.population for r in recs] == [12, None, 0]
    assert [e["uid"] for e in errors] == ["b"]


def test_invalid_rule():
    with pytest.raises(ValueError):
        OccupancyRule(small_area_max=200)


def test_feature_vectors():
    r = rec(area=100, ht=6, mean=23.5, extra={"res_prob": 0.9})
    assert feature_vector(r, "text") == (23.5, 100 * 10.763910417, 6.0)
    assert feature_vector(r, "table4") == (100.0, 6.0, 0.9)
    assert feature_vector(rec(area=100), "text") is None


def synthetic_records(n, seed):
    rng = np.random.default_rng(seed)
    area = rng.uniform(25, 400, n)
    ht = rng.uniform(3, 24, n)
    recs = [rec(f"r{i}", area=float(a), ht=float(h), mean=float(h + 17.5))
            for i, (a, h) in enumerate(zip(area, ht))]
    return label_population(recs)[0]


def test_zero_epochs_returns_initial_model():
    recs = synthetic_records(50, 0)
    result = train_regressor(AnnConfig(epochs=0), recs, seed=3)
    init = build_ann(AnnConfig(), derive_seed(3, "ann-init")).network
    for (_, a), (_, b) in zip(result.bundle.network.parameters(), init.parameters()):
        assert np.array_equal(a, b)


def test_training_is_deterministic():
    recs = synthetic_records(300, 1)
    a = train_regressor(AnnConfig(epochs=3), recs, seed=5)
    b = train_regressor(AnnConfig(epochs=3), recs, seed=5)
    assert a.train_loss == b.train_loss and a.val_loss == b.val_loss
    assert save_bundle(a.bundle) == save_bundle(b.bundle)


def test_degenerate_feature_warns(caplog):
    recs = [rec(f"r{i}", area=100.0, ht=6.0 + i % 3, mean=30.0) for i in range(20)]
    recs = label_population(recs)[0]
    with caplog.at_level(logging.WARNING):
        train_regressor(AnnConfig(epochs=1), recs, seed=0)
    assert "degenerate" in caplog.text


def test_regressor_learns_rule():
    recs = synthetic_records(2000, 2)
    result = train_regressor(AnnConfig(lr=1e-3), recs, seed=0)
    assert result.val_r2 > 0.8
    assert result.train_loss[-1] < result.train_loss[0]


def test_predict_population_rules():
    recs = synthetic_records(200, 3)
    bundle = train_regressor(AnnConfig(epochs=2), recs, seed=0).bundle
    bundle = load_bundle(save_bundle(bundle))
    pool = [rec("n", res=0, area=500, ht=30, mean=47.5), rec("u", res=None, area=80, ht=6, mean=23.5),
            rec("m", area=80), recs[0]]
    estimates, skipped = predict_population(bundle, pool)
    assert estimates[0].value == 0 and estimates[0].count == 0
    assert skipped == ["u", "m"]
    assert estimates[3].value >= 0 and estimates[3].count == int(np.floor(estimates[3].value + 0.5))


def test_negative_output_clamped():
    recs = synthetic_records(50, 4)
    bundle = train_regressor(AnnConfig(epochs=0), recs, seed=0).bundle
    net = bundle.network
    params = [np.zeros_like(p) for _, p in net.parameters()]
    params[-1][:] = -5.0
    net.set_parameters(params)
    est, _ = predict_population(bundle, recs[:3])
    assert all(e.value == 0 and e.count == 0 for e in est)


def test_size_report_empty():
    rep = size_report([])
    assert rep["total"] == {"buildings": 0, "population": 0}
    assert all(r["buildings"] == 0 and r["population"] == 0 for r in rep["categories"].values())


def test_size_report_single_medium():
    rep = size_report([rec(area=100, ht=7.5, pop=12)])
    assert rep["categories"]["medium"] == {"buildings": 1, "floors_min": 2, "floors_max": 2,
                                           "population": 12}
    assert rep["total"]["population"] == 12


def test_size_report_totals_are_column_sums():
    recs = synthetic_records(500, 5)
    rep = size_report(recs)
    cats = rep["categories"].values()
    assert rep["total"]["buildings"] == sum(c["buildings"] for c in cats) == 500
    assert rep["total"]["population"] == sum(c["population"] for c in cats)
    assert rep["total"]["population"] == sum(r.population for r in recs)
    text = render_report_table(rep)
    assert "Small" in text and "Medium" in text and "Large" in text and "Total" in text
