"""Small numpy neural-network engine used by the classifier and regressor."""
from .gradcheck import GradCheckReport, grad_check
from .layers import Conv2D, Dense, Dropout, Flatten, LeakyReLU, MaxPool2, ReLU, Sigmoid, layer_from_spec
from .losses import bce_loss, mse_loss
from .model import Sequential
from .optim import Adam, AdamState, adam_step
from .scaling import Scaler, scaler_fit, scaler_fit_transform
from .bundle import ModelBundle, load_bundle, save_bundle

__all__ = [
    "Adam", "AdamState", "Conv2D", "Dense", "Dropout", "Flatten", "GradCheckReport",
    "LeakyReLU", "MaxPool2", "ModelBundle", "ReLU", "Scaler", "Sequential", "Sigmoid",
    "adam_step", "bce_loss", "grad_check", "layer_from_spec", "load_bundle", "mse_loss",
    "save_bundle", "scaler_fit", "scaler_fit_transform",
]
