"""GPM1 model container.

Layout: ``b"GPM1"``, a 4-byte little-endian header length, a UTF-8 JSON
header (layer specs, parameter names/shapes, scaler, seed, config), then
the parameters as little-endian float32 blobs in header order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelFormatError
from .model import Sequential
from .scaling import Scaler

MAGIC = b"GPM1"


@dataclass
class ModelBundle:
    kind: str
    network: Sequential
    seed: int
    config: dict = field(default_factory=dict)
    scaler: Scaler | None = None
    meta: dict = field(default_factory=dict)


def save_bundle(bundle: ModelBundle) -> bytes:
    params = bundle.network.parameters()
    header = {
        "kind": bundle.kind,
        "input_shape": list(bundle.network.input_shape),
        "layers": bundle.network.specs(),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params],
        "seed": bundle.seed,
        "config": bundle.config,
        "scaler": bundle.scaler.to_dict() if bundle.scaler is not None else None,
        "meta": bundle.meta,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for _, p in params)
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + blobs


def load_bundle(data: bytes, dtype=np.float64) -> ModelBundle:
    if data[:4] != MAGIC:
        raise ModelFormatError("not a GPM1 model file (bad magic)")
    if len(data) < 8:
        raise ModelFormatError("truncated GPM1 header")
    (hlen,) = struct.unpack("<I", data[4:8])
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable GPM1 header: {exc}") from None
    net = Sequential.from_specs(header["layers"], header["input_shape"], dtype=dtype)
    offset = 8 + hlen
    arrays = []
    for entry in header["params"]:
        count = int(np.prod(entry["shape"]))
        end = offset + 4 * count
        if end > len(data):
            raise ModelFormatError(f"truncated weights for {entry['name']}")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f4").reshape(entry["shape"]))
        offset = end
    if offset != len(data):
        raise ModelFormatError("trailing bytes after GPM1 weights")
    # initialize() creates the param slots, set_parameters() overwrites them
    net.initialize(0)
    net.set_parameters(arrays)
    scaler = Scaler.from_dict(header["scaler"]) if header["scaler"] else None
    return ModelBundle(header["kind"], net, header["seed"], header["config"], scaler, header["meta"])
