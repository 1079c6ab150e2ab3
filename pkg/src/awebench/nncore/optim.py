"""Adam and the plateau learning-rate rule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """Apply one Adam update in place.

    ``params`` maps names to tensors and ``grads`` maps the same names to
    arrays. Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r} "
                               f"at optimizer step {state.step + 1}")
        if g.shape != params[name].shape:
            raise NumericError(f"gradient shape {g.shape} != parameter shape "
                               f"{params[name].shape} for {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def reduce_lr_on_plateau(history, initial_lr, factor=0.5, patience=10):
    """Learning rate after replaying a validation-score history.

    The rate is multiplied by ``factor`` each time the best score so far has
    gone ``patience`` consecutive epochs without strictly improving; the
    counter restarts after every reduction.
    """
    if len(history) == 0:
        raise ValueError("empty validation history")
    if not 0.0 < factor < 1.0:
        raise ValueError(f"factor must be in (0, 1), got {factor}")
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    lr = initial_lr
    best = history[0]
    bad = 0
    for score in history[1:]:
        if score > best:
            best = score
            bad = 0
        else:
            bad += 1
            if bad >= patience:
                lr *= factor
                bad = 0
    return lr
