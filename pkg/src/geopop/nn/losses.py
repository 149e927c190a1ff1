import numpy as np

from ..errors import DimensionError

BCE_EPS = 1e-7


def bce_loss(p, y):
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7].

    Returns ``(loss, dloss/dp)``. The loss is flat where the clamp is
    active, so those entries get a zero gradient.
    """
    p = np.asarray(p, dtype=np.float64) if not isinstance(p, np.ndarray) else p
    y = np.asarray(y, dtype=p.dtype).reshape(p.shape)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    grad = np.where(pc == p, (pc - y) / (pc * (1.0 - pc)) / n, 0.0).astype(p.dtype, copy=False)
    return float(loss), grad


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64) if not isinstance(pred, np.ndarray) else pred
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff ** 2)), 2.0 * diff / n
