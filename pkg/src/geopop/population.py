"""Rule-based population labels, the ANN regressor, and size-stratified reports."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import LabellingError
from .geodata import FeatureRecord
from .nn import Dense, Dropout, ModelBundle, ReLU, Sequential, Adam, mse_loss, scaler_fit
from .nn.scaling import Scaler
from .seeding import derive_seed

logger = logging.getLogger(__name__)

CATEGORIES = ("small", "medium", "large")
TARGET_SCALER = "standard"


@dataclass(frozen=True)
class OccupancyRule:
    """Occupancy thresholds; areas in square meters, heights in meters."""

    small_area_max: float = 50.0
    small_height_max: float = 4.0
    small_residents: int = 4
    medium_area_max: float = 150.0
    medium_height_max: float = 10.0
    medium_residents: int = 6
    large_residents: int = 10
    meters_per_floor: float = 3.0
    min_floors: int = 1
    rounding: str = "floor"  # or "half_up"

    def __post_init__(self):
        if not (self.small_area_max < self.medium_area_max
                and self.small_height_max < self.medium_height_max):
            raise ValueError("occupancy thresholds must increase from small to medium")
        if min(self.small_residents, self.medium_residents, self.large_residents) <= 0:
            raise ValueError("residents per floor must be positive")
        if self.rounding not in ("floor", "half_up"):
            raise ValueError(f"unknown rounding {self.rounding!r}")


def floors_from_height(h: float, rule: OccupancyRule = OccupancyRule()) -> int:
    q = h / rule.meters_per_floor
    floors = math.floor(q + 0.5) if rule.rounding == "half_up" else math.floor(q)
    return max(rule.min_floors, floors)


def size_category(area_sqm: float, h: float, rule: OccupancyRule = OccupancyRule()) -> str:
    if area_sqm < rule.small_area_max or h < rule.small_height_max:
        return "small"
    if area_sqm < rule.medium_area_max or h < rule.medium_height_max:
        return "medium"
    return "large"


def residents_per_floor(area_sqm: float, h: float, rule: OccupancyRule = OccupancyRule()) -> int:
    return {
        "small": rule.small_residents,
        "medium": rule.medium_residents,
        "large": rule.large_residents,
    }[size_category(area_sqm, h, rule)]


def synthetic_population(rec: FeatureRecord, rule: OccupancyRule = OccupancyRule()) -> int:
    if rec.res is None:
        raise LabellingError(f"record {rec.uid}: residential status unknown")
    if rec.res == 0:
        return 0
    if rec.ht is None or rec.area_sqm is None:
        raise LabellingError(f"record {rec.uid}: residential record lacks ht or Area_sqm")
    return floors_from_height(rec.ht, rule) * residents_per_floor(rec.area_sqm, rec.ht, rule)


def label_population(records: Sequence[FeatureRecord], rule: OccupancyRule = OccupancyRule()):
    """Attach rule-based populations; returns (records, errors)."""
    out, errors = [], []
    for r in records:
        try:
            out.append(r.evolve(population=synthetic_population(r, rule)))
        except LabellingError as exc:
            errors.append({"uid": r.uid, "error": str(exc)})
            out.append(r)
    return out, errors


# regressor -------------------------------------------------------------------

@dataclass
class AnnConfig:
    inputs: str = "text"  # text: (_mean, Area_sqft, ht); table4: (Area_sqm, ht, CNN output)
    widths: tuple = (64, 32, 8)
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 20
    drop_rate: float = 0.3
    scaler: str = "minmax"
    val_fraction: float = 0.2
    scale_target: bool = True

    def __post_init__(self):
        self.widths = tuple(self.widths)
        if self.inputs not in ("text", "table4"):
            raise ValueError(f"unknown ANN input set {self.inputs!r}")
        if self.scaler not in ("minmax", "standard"):
            raise ValueError(f"unknown scaler {self.scaler!r}")


def feature_vector(rec: FeatureRecord, inputs: str = "text"):
    """Regressor inputs for one record, or None if any is missing."""
    if inputs == "text":
        vals = (rec.mean_elev, rec.area_sqft, rec.ht)
    else:
        cnn_out = rec.extra.get("res_prob", rec.res)
        vals = (rec.area_sqm, rec.ht, cnn_out)
    if any(v is None for v in vals):
        return None
    vals = tuple(float(v) for v in vals)
    if not all(math.isfinite(v) for v in vals):
        return None
    return vals


def ann_layers(cfg: AnnConfig):
    layers = []
    for w in cfg.widths:
        layers += [Dense(w), ReLU()]
    # dropout only feeds the linear output, so inference (no dropout) gives
    # exactly the expected training-time output
    if cfg.drop_rate:
        layers.append(Dropout(cfg.drop_rate))
    layers.append(Dense(1, init="xavier_uniform"))
    return layers


def build_ann(cfg: AnnConfig = None, seed: int = 0) -> ModelBundle:
    cfg = cfg or AnnConfig()
    net = Sequential(ann_layers(cfg), (3,), dtype=np.float64).initialize(seed)
    config = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
    return ModelBundle("ann", net, seed, config=config)


@dataclass
class RegressorResult:
    bundle: ModelBundle
    train_loss: list
    val_loss: list
    val_r2: Optional[float]
    split: dict = field(default_factory=dict)


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return 1.0 - ss_res / ss_tot


def _raw_predict(bundle: ModelBundle, feats: np.ndarray) -> np.ndarray:
    z = bundle.scaler.transform(feats)
    out = bundle.network.forward(z, training=False)[:, 0]
    target = bundle.meta.get("target_scaler")
    if target is not None:
        out = Scaler.from_dict(target).inverse_transform(out[:, None])[:, 0]
    return out


def train_regressor(cfg: AnnConfig, records: Sequence[FeatureRecord], seed: int = 0) -> RegressorResult:
    """Fit the population ANN on residential records carrying rule labels."""
    cfg = cfg or AnnConfig()
    rows, targets, uids = [], [], []
    for r in records:
        if r.res != 1 or r.population is None:
            continue
        fv = feature_vector(r, cfg.inputs)
        if fv is None:
            continue
        rows.append(fv)
        targets.append(float(r.population))
        uids.append(r.uid)
    if len(rows) < 10:
        raise ValueError(f"need at least 10 labelled residential records, got {len(rows)}")
    feats = np.asarray(rows)
    y = np.asarray(targets)

    bundle = build_ann(cfg, derive_seed(seed, "ann-init"))
    net = bundle.network
    scaler = scaler_fit(cfg.scaler, feats)
    if np.any(scaler.degenerate):
        logger.warning("degenerate (constant) regressor feature(s); they are scaled to zero")
    bundle.scaler = scaler
    z = scaler.transform(feats)
    tscaler = None
    if cfg.scale_target:
        tscaler = scaler_fit(TARGET_SCALER, y)
        bundle.meta["target_scaler"] = tscaler.to_dict()
        yt = tscaler.transform(y[:, None])
    else:
        yt = y[:, None]

    n = len(y)
    order = np.random.default_rng(derive_seed(seed, "ann-split")).permutation(n)
    n_val = int(round(n * cfg.val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]
    rng = np.random.default_rng(derive_seed(seed, "ann-train"))
    opt = Adam(lr=cfg.lr)

    def epoch_loss(idx):
        if not len(idx):
            return None
        out = net.forward(z[idx], training=False)
        return mse_loss(out, yt[idx])[0]

    train_curve, val_curve = [], []
    for _ in range(cfg.epochs):
        ep = train_idx[rng.permutation(len(train_idx))]
        for s in range(0, len(ep), cfg.batch_size):
            bi = ep[s:s + cfg.batch_size]
            out = net.forward(z[bi], training=True, seed=int(rng.integers(2**63)))
            _, grad = mse_loss(out, yt[bi])
            net.backward(grad)
            opt.step(net)
        train_curve.append(epoch_loss(train_idx))
        val_curve.append(epoch_loss(val_idx))

    # weights are stored as float32; freeze to that precision so the
    # in-memory model and a reloaded model agree exactly
    net.set_parameters([p.astype(np.float32) for _, p in net.parameters()])
    val_r2 = None
    if len(val_idx):
        val_r2 = r2_score(y[val_idx], _raw_predict(bundle, feats[val_idx]))
    bundle.meta["val_r2"] = val_r2
    split = {"train": [uids[i] for i in train_idx], "val": [uids[i] for i in val_idx]}
    return RegressorResult(bundle, train_curve, val_curve, val_r2, split)


@dataclass
class PopulationEstimate:
    uid: str
    value: float  # clamped regression output
    count: int  # rounded report value


def predict_population(bundle: ModelBundle, records: Sequence[FeatureRecord]):
    """Per-record estimates (non-residential short-circuits to 0) and skipped uids."""
    inputs = bundle.config.get("inputs", "text")
    estimates: list[Optional[PopulationEstimate]] = [None] * len(records)
    skipped = []
    todo, feats = [], []
    for i, r in enumerate(records):
        if r.res == 0:
            estimates[i] = PopulationEstimate(r.uid, 0.0, 0)
            continue
        fv = feature_vector(r, inputs) if r.res == 1 else None
        if fv is None:
            skipped.append(r.uid)
            continue
        todo.append(i)
        feats.append(fv)
    if todo:
        raw = _raw_predict(bundle, np.asarray(feats))
        for i, v in zip(todo, raw):
            val = max(0.0, float(v))
            estimates[i] = PopulationEstimate(records[i].uid, val, int(math.floor(val + 0.5)))
    return estimates, skipped


def apply_estimates(records, estimates):
    out = []
    for r, e in zip(records, estimates):
        out.append(r if e is None else r.evolve(population=e.count))
    return out


def size_report(records: Sequence[FeatureRecord], rule: OccupancyRule = OccupancyRule()) -> dict:
    """Building counts, floor ranges and population per size category."""
    rows = {c: {"buildings": 0, "floors_min": None, "floors_max": None, "population": 0}
            for c in CATEGORIES}
    for r in records:
        if r.res != 1 or r.population is None or r.area_sqm is None or r.ht is None:
            continue
        row = rows[size_category(r.area_sqm, r.ht, rule)]
        floors = floors_from_height(r.ht, rule)
        row["buildings"] += 1
        row["floors_min"] = floors if row["floors_min"] is None else min(row["floors_min"], floors)
        row["floors_max"] = floors if row["floors_max"] is None else max(row["floors_max"], floors)
        row["population"] += int(round(r.population))
    total = {
        "buildings": sum(r["buildings"] for r in rows.values()),
        "population": sum(r["population"] for r in rows.values()),
    }
    return {"categories": rows, "total": total}


def render_report_table(report: dict) -> str:
    header = ("Building Size", "Number of Residential Buildings", "Estimated Floors",
              "Estimated Population")
    lines = []
    for name in CATEGORIES:
        row = report["categories"][name]
        if row["floors_min"] is None:
            floors = "-"
        elif row["floors_min"] == row["floors_max"]:
            floors = str(row["floors_min"])
        else:
            floors = f"{row['floors_min']}-{row['floors_max']}"
        lines.append((name.capitalize(), f"{row['buildings']:,}", floors, f"{row['population']:,}"))
    total = report["total"]
    lines.append(("Total", f"{total['buildings']:,}", "-", f"{total['population']:,}"))
    widths = [max(len(header[i]), *(len(l[i]) for l in lines)) for i in range(4)]
    fmt = lambda cells: "  ".join(  # noqa: E731
        c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(l) for l in lines]) + "\n"
