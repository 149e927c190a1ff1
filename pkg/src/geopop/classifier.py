"""Residential / non-residential CNN: assembly, sliding-window training, prediction."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .features import Patch
from .nn import (
    Adam, Conv2D, Dense, Dropout, Flatten, LeakyReLU, MaxPool2, ModelBundle, ReLU,
    Sequential, Sigmoid, bce_loss,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass
class CnnConfig:
    channels: int = 4
    size: int = 64
    filters: tuple = (32, 64, 128)
    dense_units: int = 128
    drop_rate: float = 0.5
    l2: float = 1e-4
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    activation: str = "relu"
    leak: float = 0.01
    class_weight: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        self.filters = tuple(self.filters)
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    window: int = 1000
    stride: int = 500
    window_train: float = 0.8
    seed: Optional[int] = None  # None: derived from the training seed

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("train/val/test fractions must sum to 1")
        if not 0 < self.stride <= self.window:
            raise ValueError("stride must be in (0, window]")


def _activation(cfg):
    return LeakyReLU(cfg.leak) if cfg.activation == "leaky_relu" else ReLU()


def cnn_layers(cfg: CnnConfig):
    layers = []
    for f in cfg.filters:
        layers += [Conv2D(f), _activation(cfg), MaxPool2()]
    layers += [
        Flatten(),
        Dense(cfg.dense_units, l2=cfg.l2),
        _activation(cfg),
        Dropout(cfg.drop_rate),
        Dense(1, l2=cfg.l2, init="xavier_uniform"),
        Sigmoid(),
    ]
    return layers


def build_cnn(cfg: CnnConfig = None, seed: int = 0) -> ModelBundle:
    cfg = cfg or CnnConfig()
    net = Sequential(cnn_layers(cfg), (cfg.size, cfg.size, cfg.channels), dtype=np.dtype(cfg.dtype))
    net.initialize(seed)
    return ModelBundle("cnn", net, seed, config=_jsonable(asdict(cfg)))


def _jsonable(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def config_from_bundle(bundle: ModelBundle) -> CnnConfig:
    return CnnConfig(**bundle.config)


def to_batch(values: Sequence[np.ndarray], dtype) -> np.ndarray:
    """Stack (C, H, W) patches into a channels-last (N, H, W, C) batch."""
    arr = np.stack(values).astype(dtype, copy=False)
    return np.ascontiguousarray(arr.transpose(0, 2, 3, 1))


def window_bounds(n: int, size: int, stride: int) -> list[tuple[int, int]]:
    """Overlapping [start, stop) windows; the last one may be partial."""
    if n <= 0:
        return []
    out = []
    start = 0
    while True:
        stop = min(start + size, n)
        out.append((start, stop))
        if stop >= n:
            return out
        start += stride


def partition(n: int, split: SplitSpec, seed: int = 0):
    """Shuffled (train, val, test) index arrays for ``n`` labelled records."""
    split_seed = split.seed if split.seed is not None else derive_seed(seed, "split")
    order = np.random.default_rng(split_seed).permutation(n)
    n_val = int(round(n * split.val))
    n_test = int(round(n * split.test))
    train_idx = order[n_val + n_test:]
    if len(train_idx) == 0:
        raise ValueError("training fraction is empty")
    return train_idx, order[:n_val], order[n_val:n_val + n_test]


@dataclass
class TrainResult:
    bundle: ModelBundle
    log: list  # one dict per window (metrics log schema)
    epoch_losses: list  # per window, per epoch mean training BCE
    window_predictions: list
    heldout: dict
    split: dict = field(default_factory=dict)


def _predict_array(net: Sequential, x: np.ndarray, batch: int = 64) -> np.ndarray:
    out = np.empty(len(x), dtype=np.float64)
    for s in range(0, len(x), batch):
        out[s:s + batch] = net.forward(x[s:s + batch], training=False)[:, 0]
    return out


def _binary_scores(y_true, prob):
    pred = (prob >= THRESHOLD).astype(int)
    cm = metrics.confusion(y_true, pred)
    sc = metrics.scores(cm)
    return {
        "accuracy": metrics.accuracy(cm) if cm.total else 0.0,
        "precision": sc["precision"], "recall": sc["recall"], "f1": sc["f1"],
    }


def evaluate(net: Sequential, x, y) -> dict:
    prob = _predict_array(net, x)
    pred = (prob >= THRESHOLD).astype(int)
    report = metrics.class_report(y, pred)
    try:
        report["auc"] = metrics.roc_auc(y, prob).auc
    except metrics.UndefinedMetricError:
        report["auc"] = None
    report["n"] = int(len(y))
    return report


def sliding_window_train(bundle: ModelBundle, patches: Sequence[Optional[Patch]],
                         split: SplitSpec = None, seed: int = 0) -> TrainResult:
    """Train one CNN sequentially over overlapping windows of the training split.

    Labelled patches are shuffled, validation and test fractions are held out,
    and the remaining training records are cut into windows of
    ``split.window`` records advancing by ``split.stride``. Each window is
    split ``window_train : 1 - window_train`` and the same model is trained
    for ``epochs`` epochs on it before moving on.
    """
    split = split or SplitSpec()
    cfg = config_from_bundle(bundle)
    net = bundle.network
    labelled = [p for p in patches if p is not None and p.label in (0, 1)]
    if not labelled:
        raise ValueError("no labelled patches to train on")
    n = len(labelled)
    y = np.array([p.label for p in labelled], dtype=np.float64)
    uids = [p.uid for p in labelled]
    x = to_batch([p.values for p in labelled], net.dtype)

    train_idx, val_idx, test_idx = partition(n, split, seed)

    rng = np.random.default_rng(derive_seed(seed, "train"))
    opt = Adam(lr=cfg.lr)
    log, losses_by_window, window_preds = [], [], []
    for wi, (a, b) in enumerate(window_bounds(len(train_idx), split.window, split.stride)):
        idx = train_idx[a:b]
        perm = rng.permutation(len(idx))
        n_tr = int(round(len(idx) * split.window_train))
        w_train, w_test = idx[perm[:n_tr]], idx[perm[n_tr:]]
        if len(np.unique(y[w_train])) < 2:
            logger.warning("window %d has a single class in its training split", wi)
        weights = None
        if cfg.class_weight:
            pos = y[w_train].mean()
            if 0 < pos < 1:
                weights = {1.0: 0.5 / pos, 0.0: 0.5 / (1 - pos)}
        epoch_losses = []
        for _ in range(cfg.epochs):
            ep = w_train[rng.permutation(len(w_train))]
            total = 0.0
            for s in range(0, len(ep), cfg.batch_size):
                bi = ep[s:s + cfg.batch_size]
                yb = y[bi][:, None]
                prob = net.forward(x[bi], training=True, seed=int(rng.integers(2**63)))
                loss, grad = bce_loss(prob, yb)
                if weights is not None:
                    sw = np.where(yb == 1.0, weights[1.0], weights[0.0])
                    grad = grad * sw
                net.backward(grad.astype(net.dtype, copy=False))
                opt.step(net)
                total += loss * len(bi)
            epoch_losses.append(total / max(len(ep), 1))
        losses_by_window.append(epoch_losses)
        entry = {"window_index": wi, "train_size": int(len(w_train)), "test_size": int(len(w_test)),
                 "loss_final": epoch_losses[-1] if epoch_losses else None}
        if len(w_test):
            prob = _predict_array(net, x[w_test])
            entry.update(_binary_scores(y[w_test].astype(int), prob))
            window_preds.extend(
                {"window_index": wi, "uid": uids[i], "truth": int(y[i]), "prob": float(p),
                 "label": int(p >= THRESHOLD)}
                for i, p in zip(w_test, prob))
        else:
            entry.update({"accuracy": None, "precision": None, "recall": None, "f1": None})
        logger.info("window %d: loss %.4f f1 %s", wi, entry["loss_final"] or float("nan"), entry["f1"])
        log.append(entry)

    heldout = {}
    for name, idx in (("val", val_idx), ("test", test_idx)):
        if len(idx):
            heldout[name] = evaluate(net, x[idx], y[idx].astype(int))
    split_info = {name: [uids[i] for i in idx]
                  for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx))}
    return TrainResult(bundle, log, losses_by_window, window_preds, heldout, split_info)


def predict_labels(bundle: ModelBundle, patches: Sequence[Optional[Patch]], batch: int = 64):
    """Probability and hard label per patch; discarded patches give (None, None)."""
    net = bundle.network
    channels = net.input_shape[2]
    probs: list = [None] * len(patches)
    keep = [i for i, p in enumerate(patches) if p is not None]
    for p in (patches[i] for i in keep):
        if p.values.shape[0] != channels:
            raise ValueError(f"patch {p.uid} has {p.values.shape[0]} channels, model expects {channels}")
    for s in range(0, len(keep), batch):
        chunk = keep[s:s + batch]
        xb = to_batch([patches[i].values for i in chunk], net.dtype)
        out = net.forward(xb, training=False)[:, 0]
        for i, v in zip(chunk, out):
            probs[i] = float(v)
    return [(p, None if p is None else int(p >= THRESHOLD)) for p in probs]


def label_counts(predictions) -> dict:
    counts = {"residential": 0, "non_residential": 0, "unknown": 0}
    for _, label in predictions:
        key = "unknown" if label is None else ("residential" if label == 1 else "non_residential")
        counts[key] += 1
    return counts
