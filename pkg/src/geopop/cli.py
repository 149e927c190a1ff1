"""Command-line front end: ``geopop <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input). Every artifact is written deterministically (sorted JSON keys, no
timestamps), so rerunning a command with the same inputs and seed
reproduces its outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import classifier, features, metrics, population
from .errors import GeopopError
from .geodata import RasterGrid, Scene, load_raster, parse_geojson, save_raster, write_geojson
from .nn import load_bundle, save_bundle
from .seeding import derive_seed
from .synthcity import SynthConfig, generate_scene, label_truth

logger = logging.getLogger("geopop")

PATH_KEYS = ("imagery", "dem", "vectors", "model", "out", "truth", "pred")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    cnn: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)
    ann: dict = field(default_factory=dict)
    occupancy: dict = field(default_factory=dict)
    channels: Optional[int] = None
    ground_elev: Optional[float] = None

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def path(self, key: str, required: bool = True) -> Optional[Path]:
        value = self.paths.get(key)
        if value is None:
            if required:
                raise UsageError(f"--{key} is required")
            return None
        return Path(value)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    for key in ("imagery", "dem", "vectors", "model"):
        common.add_argument(f"--{key}")
    common.add_argument("--channels", type=int, choices=(3, 4))
    common.add_argument("--ground-elev", type=float, dest="ground_elev")
    common.add_argument("--scaler", choices=("minmax", "standard"))
    common.add_argument("--ann-inputs", choices=("text", "table4"), dest="ann_inputs")

    parser = _Parser(prog="geopop", description="Building-level population estimation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic scene",
        "derive": "derive area, elevation, height and image patches",
        "train-cls": "train the residential classifier",
        "classify": "label footprints with a trained classifier",
        "label-pop": "attach rule-based population labels",
        "train-reg": "train the population regressor",
        "estimate": "estimate per-building population",
        "report": "size-stratified population report",
        "metrics": "classification metrics of predictions against truth",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "metrics":
            p.add_argument("--truth", required=True, help="GeoJSON with true res labels")
            p.add_argument("--pred", required=True, help="GeoJSON with predicted res labels")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(_read(Path(args.config)).decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: invalid JSON config ({exc})") from exc
        if not isinstance(raw, dict):
            raise DataError(f"{args.config}: config must be a JSON object")
    cfg = PipelineConfig.from_dict(raw)
    cfg.paths = dict(cfg.paths)
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg.paths[key] = value
    if args.seed is not None:
        cfg.seed = args.seed
    if args.channels is not None:
        cfg.channels = args.channels
    if args.ground_elev is not None:
        cfg.ground_elev = args.ground_elev
    cfg.ann = dict(cfg.ann)
    if args.scaler is not None:
        cfg.ann["scaler"] = args.scaler
    if args.ann_inputs is not None:
        cfg.ann["inputs"] = args.ann_inputs
    return cfg


# io helpers ------------------------------------------------------------------

def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _load(path: Path, loader, what: str):
    data = _read(path)
    try:
        return loader(data)
    except GeopopError as exc:
        raise DataError(f"{path}: invalid {what}: {exc}") from exc


def _out_dir(cfg: PipelineConfig) -> Path:
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    logger.info("wrote %s", path)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8")


def _jsonl_bytes(rows) -> bytes:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows).encode("utf-8")


def _select_bands(grid: RasterGrid, channels: Optional[int], path: Path) -> RasterGrid:
    if channels is None or channels == grid.bands:
        return grid
    if channels > grid.bands:
        raise DataError(f"{path}: {grid.bands} band(s), {channels} requested")
    return RasterGrid(np.array(grid.data[:channels]), grid.origin_x, grid.origin_y, grid.pixel_size)


def _imagery(cfg: PipelineConfig) -> RasterGrid:
    path = cfg.path("imagery")
    return _select_bands(_load(path, load_raster, "raster"), cfg.channels, path)


def _vectors(cfg: PipelineConfig):
    return _load(cfg.path("vectors"), parse_geojson, "GeoJSON")


def _model(cfg: PipelineConfig, kind: str, dtype):
    path = cfg.path("model")
    bundle = _load(path, lambda d: load_bundle(d, dtype=dtype), "model")
    if bundle.kind != kind:
        raise DataError(f"{path}: expected a {kind} model, found {bundle.kind}")
    return bundle


def _model_out(cfg: PipelineConfig, out: Path, default: str) -> Path:
    path = cfg.path("model", required=False)
    return path if path is not None else out / default


def _patch_scene(imagery: RasterGrid, records) -> Scene:
    # patches only read imagery; a flat stand-in DEM keeps Scene's contract
    dem = RasterGrid(np.zeros((1, 1, 1), dtype=np.float32), imagery.origin_x, imagery.origin_y,
                     max(imagery.width, imagery.height) * imagery.pixel_size)
    return Scene(imagery, dem, list(records))


# subcommands -----------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig) -> None:
    synth = dict(cfg.synth)
    synth.setdefault("seed", derive_seed(cfg.seed, "synth"))
    scene = generate_scene(SynthConfig.from_dict(synth))
    out = _out_dir(cfg)
    vectors, truth = label_truth(scene)
    _write(out / "imagery.gpr", save_raster(scene.imagery))
    _write(out / "dem.gpr", save_raster(scene.dem))
    _write(out / "buildings.geojson", vectors)
    _write(out / "truth.json", truth)


def cmd_derive(cfg: PipelineConfig) -> None:
    imagery = _imagery(cfg)
    dem = _load(cfg.path("dem"), load_raster, "raster")
    records = _vectors(cfg)
    try:
        scene = Scene(imagery, dem, records)
        stats = features.compute_scene_stats(scene, ground_elev=cfg.ground_elev)
    except (GeopopError, ValueError) as exc:
        raise DataError(f"{cfg.path('dem')}: {exc}") from exc
    report = features.derive_attributes(scene, stats)
    patches = features.extract_patches(report.scene, stats)
    kept = [p for p in patches if p is not None]
    out = _out_dir(cfg)
    _write(out / "derived.geojson", write_geojson(report.scene.records))
    _write(out / "stats.json", _json_bytes(stats.to_dict()))
    _write(out / "derive_errors.json", _json_bytes(report.errors))
    values = (np.stack([p.values for p in kept]) if kept
              else np.zeros((0, imagery.bands, features.PATCH_SIZE, features.PATCH_SIZE), np.float32))
    with open(out / "patches.npy", "wb") as fh:
        np.save(fh, values, allow_pickle=False)
    index = {"uids": [p.uid for p in kept], "labels": [p.label for p in kept],
             "discarded": [r.uid for r, p in zip(records, patches) if p is None]}
    _write(out / "patches.json", _json_bytes(index))


def cmd_train_cls(cfg: PipelineConfig) -> None:
    imagery = _imagery(cfg)
    records = _vectors(cfg)
    mins, maxs = features.band_ranges(imagery)
    stats = features.SceneStats(mins, maxs, 0.0)
    patches = features.extract_patches(_patch_scene(imagery, records), stats)
    cnn_cfg = classifier.CnnConfig(**{**cfg.cnn, "channels": imagery.bands})
    bundle = classifier.build_cnn(cnn_cfg, seed=derive_seed(cfg.seed, "cnn-init"))
    bundle.meta["band_min"] = list(mins)
    bundle.meta["band_max"] = list(maxs)
    try:
        result = classifier.sliding_window_train(bundle, patches, classifier.SplitSpec(**cfg.split),
                                                 seed=cfg.seed)
    except ValueError as exc:
        raise DataError(f"{cfg.path('vectors')}: {exc}") from exc
    out = _out_dir(cfg)
    _write(_model_out(cfg, out, "cnn.gpm"), save_bundle(result.bundle))
    _write(out / "metrics_log.jsonl", _jsonl_bytes(result.log))
    _write(out / "epoch_losses.json", _json_bytes(result.epoch_losses))
    _write(out / "window_predictions.jsonl", _jsonl_bytes(result.window_predictions))
    _write(out / "heldout.json", _json_bytes(result.heldout))
    _write(out / "split.json", _json_bytes(result.split))


def cmd_classify(cfg: PipelineConfig) -> None:
    bundle = _model(cfg, "cnn", np.float32)
    imagery = _imagery(cfg)
    records = _vectors(cfg)
    if "band_min" not in bundle.meta:
        raise DataError(f"{cfg.path('model')}: model lacks imagery normalization ranges")
    stats = features.SceneStats(tuple(bundle.meta["band_min"]), tuple(bundle.meta["band_max"]), 0.0)
    if len(stats.band_min) != imagery.bands:
        raise DataError(f"{cfg.path('imagery')}: {imagery.bands} band(s), model expects "
                        f"{len(stats.band_min)}")
    patches = features.extract_patches(_patch_scene(imagery, records), stats)
    preds = classifier.predict_labels(bundle, patches)
    out_records = []
    for rec, (prob, label) in zip(records, preds):
        if label is None:
            out_records.append(rec.evolve(res=None, population=None))
            continue
        extra = dict(rec.extra)
        extra["res_prob"] = prob
        out_records.append(rec.evolve(
            res=label, build_type="residential" if label == 1 else "non_residential",
            population=None, extra=extra))
    out = _out_dir(cfg)
    _write(out / "classified.geojson", write_geojson(out_records))
    _write(out / "classify_counts.json", _json_bytes(classifier.label_counts(preds)))


def _rule(cfg: PipelineConfig) -> population.OccupancyRule:
    return population.OccupancyRule(**cfg.occupancy)


def cmd_label_pop(cfg: PipelineConfig) -> None:
    records, errors = population.label_population(_vectors(cfg), _rule(cfg))
    out = _out_dir(cfg)
    _write(out / "labelled.geojson", write_geojson(records))
    _write(out / "label_errors.json", _json_bytes(errors))


def cmd_train_reg(cfg: PipelineConfig) -> None:
    records = _vectors(cfg)
    try:
        result = population.train_regressor(population.AnnConfig(**cfg.ann), records, seed=cfg.seed)
    except ValueError as exc:
        raise DataError(f"{cfg.path('vectors')}: {exc}") from exc
    out = _out_dir(cfg)
    _write(_model_out(cfg, out, "ann.gpm"), save_bundle(result.bundle))
    curve = {"train_loss": result.train_loss, "val_loss": result.val_loss, "val_r2": result.val_r2}
    _write(out / "loss_curve.json", _json_bytes(curve))
    _write(out / "reg_split.json", _json_bytes(result.split))


def cmd_estimate(cfg: PipelineConfig) -> None:
    bundle = _model(cfg, "ann", np.float64)
    records = _vectors(cfg)
    estimates, skipped = population.predict_population(bundle, records)
    out = _out_dir(cfg)
    _write(out / "estimated.geojson", write_geojson(population.apply_estimates(records, estimates)))
    _write(out / "estimate_skipped.json", _json_bytes(skipped))


def cmd_report(cfg: PipelineConfig) -> None:
    report = population.size_report(_vectors(cfg), _rule(cfg))
    out = _out_dir(cfg)
    _write(out / "report.json", _json_bytes(report))
    _write(out / "report.txt", population.render_report_table(report).encode("utf-8"))


def cmd_metrics(cfg: PipelineConfig) -> None:
    truth_path, pred_path = cfg.path("truth"), cfg.path("pred")
    truth = {r.uid: r for r in _load(truth_path, parse_geojson, "GeoJSON")}
    pred = _load(pred_path, parse_geojson, "GeoJSON")
    pairs = [(truth[r.uid], r) for r in pred
             if r.uid in truth and truth[r.uid].res is not None and r.res is not None]
    if not pairs:
        raise DataError(f"{pred_path}: no labelled records shared with {truth_path}")
    y_true = [t.res for t, _ in pairs]
    y_pred = [p.res for _, p in pairs]
    report = metrics.class_report(y_true, y_pred)
    report["n"] = len(pairs)
    probs = [p.extra.get("res_prob") for _, p in pairs]
    report["auc"] = None
    if all(isinstance(v, (int, float)) for v in probs):
        try:
            report["auc"] = metrics.roc_auc(y_true, probs).auc
        except metrics.UndefinedMetricError:
            pass
    text = _json_bytes(report)
    if cfg.paths.get("out") is not None:
        _write(_out_dir(cfg) / "metrics.json", text)
    sys.stdout.write(text.decode("utf-8"))


COMMANDS = {
    "synth": cmd_synth,
    "derive": cmd_derive,
    "train-cls": cmd_train_cls,
    "classify": cmd_classify,
    "label-pop": cmd_label_pop,
    "train-reg": cmd_train_reg,
    "estimate": cmd_estimate,
    "report": cmd_report,
    "metrics": cmd_metrics,
}


def _configure_logging() -> None:
    level = os.environ.get("GEOPOP_LOG", "WARNING").strip().upper()
    value = int(level) if level.isdigit() else logging.getLevelName(level)
    if not isinstance(value, int):
        value = logging.WARNING
    logging.basicConfig(level=value, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"geopop {args.command}: error: {exc}\n")
        return 1
    except (TypeError, ValueError) as exc:
        # bad config values or option combinations
        if isinstance(exc, TypeError) and "unexpected keyword" not in str(exc):
            raise
        sys.stderr.write(f"geopop {args.command}: error: {exc}\n")
        return 1
    except DataError as exc:
        sys.stderr.write(f"geopop {args.command}: error: {exc}\n")
        return 2
    except GeopopError as exc:
        sys.stderr.write(f"geopop {args.command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
