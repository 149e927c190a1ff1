from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Scaler:
    """Per-feature affine scaling; constant features map to zero.

    For ``minmax`` the statistics are (min, max); for ``standard`` they are
    (mean, population std).
    """

    mode: str
    a: np.ndarray
    b: np.ndarray

    def _offset_span(self):
        if self.mode == "minmax":
            return self.a, self.b - self.a
        if self.mode == "standard":
            return self.a, self.b
        raise ValueError(f"unknown scaler mode {self.mode!r}")

    @property
    def degenerate(self):
        return self._offset_span()[1] == 0

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        offset, span = self._offset_span()
        safe = np.where(span == 0, 1.0, span)
        out = (x - offset) / safe
        return np.where(span == 0, 0.0, out)

    def inverse_transform(self, z):
        z = np.asarray(z, dtype=np.float64)
        offset, span = self._offset_span()
        return z * span + offset

    def to_dict(self):
        return {"mode": self.mode, "a": [float(v) for v in self.a], "b": [float(v) for v in self.b]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], np.asarray(d["a"], dtype=np.float64), np.asarray(d["b"], dtype=np.float64))


def scaler_fit(mode: str, features) -> Scaler:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise ValueError("scaler needs at least one sample")
    if mode == "minmax":
        return Scaler(mode, x.min(axis=0), x.max(axis=0))
    if mode == "standard":
        return Scaler(mode, x.mean(axis=0), x.std(axis=0))
    raise ValueError(f"unknown scaler mode {mode!r}")


def scaler_fit_transform(mode: str, features):
    x = np.asarray(features, dtype=np.float64)
    squeeze = x.ndim == 1
    scaler = scaler_fit(mode, x)
    z = scaler.transform(x[:, None] if squeeze else x)
    return scaler, (z[:, 0] if squeeze else z)
