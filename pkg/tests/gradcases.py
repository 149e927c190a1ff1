"""Small float64 models for finite-difference gradient checks."""
import numpy as np

from geopop.classifier import CnnConfig, cnn_layers
from geopop.nn import (
    Conv2D, Dense, Dropout, Flatten, LeakyReLU, MaxPool2, ReLU, Sequential, Sigmoid, bce_loss,
    mse_loss,
)
from geopop.population import AnnConfig, ann_layers

# (name, layer factory, input shape)
LAYER_CASES = [
    ("conv2d", lambda: Conv2D(3), (5, 5, 2)),
    ("maxpool2", lambda: MaxPool2(), (4, 6, 2)),
    ("dense", lambda: Dense(4, l2=1e-2), (6,)),
    ("relu", lambda: ReLU(), (7,)),
    ("leaky_relu", lambda: LeakyReLU(0.01), (7,)),
    ("dropout", lambda: Dropout(0.5), (9,)),
    ("sigmoid", lambda: Sigmoid(), (5,)),
    ("flatten", lambda: Flatten(), (3, 2, 2)),
]


def layer_problem(factory, shape, seed):
    rng = np.random.default_rng(seed)
    model = Sequential([factory()], shape, dtype=np.float64).initialize(seed)
    x = rng.normal(size=(3,) + shape)
    out = model.forward(x)
    y = rng.normal(size=out.shape)
    return model, x, y, mse_loss


def desk_cnn(seed, channels=4):
    cfg = CnnConfig(channels=channels, size=8, filters=(2, 3, 4), dense_units=5, dtype="float64")
    model = Sequential(cnn_layers(cfg), (8, 8, channels), dtype=np.float64).initialize(seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (3, 8, 8, channels))
    y = np.array([[1.0], [0.0], [1.0]])
    return model, x, y, bce_loss


def ann(seed):
    model = Sequential(ann_layers(AnnConfig()), (3,), dtype=np.float64).initialize(seed)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (4, 3))
    y = rng.uniform(0, 1, (4, 1))
    return model, x, y, mse_loss
