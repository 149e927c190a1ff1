from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENOM_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    n_checked: int
    n_kink_skipped: int
    worst: str | None

    @property
    def ok(self):
        return self.max_rel_error < 1e-4


def relative_error(analytic, numeric, floor=DENOM_FLOOR):
    denom = max(abs(analytic), abs(numeric), floor)
    diff = abs(analytic - numeric)
    return 0.0 if diff == 0.0 else diff / denom


def _same_patterns(a, b):
    return all(
        (p is None and q is None) or np.array_equal(p, q) for p, q in zip(a, b)
    )


def grad_check(model, x, y, loss_fn, step=1e-3, seed=0, check_input=False, min_step=1e-7):
    """Compare backprop gradients with central finite differences.

    The model's loss (plus any L2 penalty) is evaluated in training mode with
    a fixed dropout seed. When a perturbation flips a ReLU mask or a pooling
    argmax, the difference quotient straddles a kink; the step is shrunk by
    10x until the activation pattern is stable, and the entry is counted as
    skipped if it never stabilizes above ``min_step``.
    """
    x = np.array(x, dtype=model.dtype)

    def objective():
        out = model.forward(x, training=True, seed=seed)
        loss, _ = loss_fn(out, y)
        return loss + model.penalty()

    out = model.forward(x, training=True, seed=seed)
    _, dl = loss_fn(out, y)
    dx = model.backward(dl, input_grad=check_input)
    base = [None if p is None else p.copy() for p in model.patterns()]

    targets = [(name, p, g.copy()) for (name, p), (_, g) in zip(model.parameters(), model.gradients())]
    if check_input:
        targets.append(("input", x, dx.copy()))

    errors = []
    skipped = 0
    worst, worst_err = None, -1.0
    for name, arr, analytic in targets:
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            h = step
            while True:
                arr[idx] = orig + h
                lp = objective()
                stable = _same_patterns(model.patterns(), base)
                arr[idx] = orig - h
                lm = objective()
                stable = stable and _same_patterns(model.patterns(), base)
                arr[idx] = orig
                if stable or h / 10 < min_step:
                    break
                h /= 10
            if not stable:
                skipped += 1
                continue
            numeric = (lp - lm) / (2 * h)
            err = relative_error(float(analytic[idx]), numeric)
            errors.append(err)
            if err > worst_err:
                worst, worst_err = f"{name}{list(idx)}", err
    errors = np.asarray(errors) if errors else np.zeros(1)
    return GradCheckReport(float(errors.max()), float(errors.mean()), len(errors), skipped, worst)
