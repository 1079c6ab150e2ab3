"""Gated recurrent unit cell and masked sequence recurrence.

Gate convention (update ``z``, reset ``r``, candidate ``n``)::

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    n  = tanh(x W_n + (r * h) U_n + b_n)
    h' = (1 - z) * h + z * n

Weights are stored fused: ``w`` is ``[in, 3h]``, ``u`` is ``[h, 3h]`` and ``b``
is ``[3h]``, each with column blocks ``[z | r | n]``.
"""

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from . import _kernels
from .tensor import Tensor, _make, concat, matmul, mul, reshape, sigmoid, tanh

if os.environ.get("AWEBENCH_PURE_PYTHON"):
    _backend = _kernels
else:
    try:
        from . import _gru_ext as _backend
    except ImportError:  # extension not built
        _backend = _kernels

BACKEND = "compiled" if _backend is not _kernels else "numpy"


def compiled_available():
    try:
        from . import _gru_ext  # noqa: F401
    except ImportError:
        return False
    return True


def kernels_for(name):
    """Kernel module for ``"compiled"`` or ``"numpy"``."""
    if name == "numpy":
        return _kernels
    if name == "compiled":
        from . import _gru_ext

        return _gru_ext
    raise ValueError(f"unknown backend {name!r}")


def use_backend(name):
    """Switch the recurrence kernel (``"compiled"`` or ``"numpy"``); returns the old name."""
    global _backend, BACKEND
    old = BACKEND
    _backend = kernels_for(name)
    BACKEND = name
    return old


@dataclass
class GruCellParams:
    w: Tensor
    u: Tensor
    b: Tensor
    input_dim: int
    hidden_dim: int

    def __post_init__(self):
        k, h = self.input_dim, self.hidden_dim
        if self.w.shape != (k, 3 * h) or self.u.shape != (h, 3 * h) or self.b.shape != (3 * h,):
            raise ShapeError(
                f"GRU weights {self.w.shape}, {self.u.shape}, {self.b.shape} do not match "
                f"input_dim={k}, hidden_dim={h}"
            )

    @classmethod
    def init(cls, input_dim, hidden_dim, rng, prefix="gru"):
        """Uniform init in +-1/sqrt(fan_in) per weight block."""
        a_w = 1.0 / np.sqrt(input_dim)
        a_u = 1.0 / np.sqrt(hidden_dim)
        return cls(
            w=Tensor(rng.uniform(-a_w, a_w, (input_dim, 3 * hidden_dim)), True, f"{prefix}.w"),
            u=Tensor(rng.uniform(-a_u, a_u, (hidden_dim, 3 * hidden_dim)), True, f"{prefix}.u"),
            b=Tensor(rng.uniform(-a_u, a_u, (3 * hidden_dim,)), True, f"{prefix}.b"),
            input_dim=input_dim,
            hidden_dim=hidden_dim,
        )

    @classmethod
    def zeros(cls, input_dim, hidden_dim, prefix="gru"):
        return cls(
            w=Tensor(np.zeros((input_dim, 3 * hidden_dim)), True, f"{prefix}.w"),
            u=Tensor(np.zeros((hidden_dim, 3 * hidden_dim)), True, f"{prefix}.u"),
            b=Tensor(np.zeros(3 * hidden_dim), True, f"{prefix}.b"),
            input_dim=input_dim,
            hidden_dim=hidden_dim,
        )

    def tensors(self):
        return [self.w, self.u, self.b]


def gru_cell_forward(params, x, h_prev):
    """One GRU step built from primitive tape ops.

    ``x`` is ``[k]`` or ``[B, k]``; ``h_prev`` matches with ``[h]`` or ``[B, h]``.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    h_prev = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    k, h = params.input_dim, params.hidden_dim
    if x.shape[-1] != k or h_prev.shape[-1] != h or x.ndim != h_prev.ndim:
        raise ShapeError(f"gru cell expects input [..., {k}] and state [..., {h}], "
                         f"got {x.shape} and {h_prev.shape}")
    gx = matmul(x, params.w) + params.b
    gh = matmul(h_prev, params.u[:, : 2 * h])
    z = sigmoid(gx[..., :h] + gh[..., :h])
    r = sigmoid(gx[..., h : 2 * h] + gh[..., h:])
    n = tanh(gx[..., 2 * h :] + matmul(mul(r, h_prev), params.u[:, 2 * h :]))
    return h_prev + z * (n - h_prev)


def _recurrence(gx, u, mask, h0):
    H, Z, R, N = _backend.gru_forward(gx.data, u.data, mask, h0.data)
    backend = _backend

    def bw(g):
        dgx, du, dh0 = backend.gru_backward(g, u.data, mask, h0.data, H, Z, R, N)
        return dgx, du, dh0

    return _make(H, (gx, u, h0), bw, "gru recurrence")


def gru_sequence(params, x, mask, h0=None):
    """Run the cell over ``x`` ``[T, B, k]``; returns all states ``[T, B, h]``.

    Where ``mask[t, b] == 0`` the state is carried through unchanged, so with
    right-padded batches ``out[-1]`` is each sequence's final valid state.
    """
    T, B, k = x.shape
    h = params.hidden_dim
    if k != params.input_dim:
        raise ShapeError(f"sequence feature dim {k} != GRU input dim {params.input_dim}")
    mask = np.ascontiguousarray(mask, dtype=np.float64)
    if mask.shape != (T, B):
        raise ShapeError(f"mask shape {mask.shape} != {(T, B)}")
    if h0 is None:
        h0 = Tensor(np.zeros((B, h)))
    elif h0.shape != (B, h):
        raise ShapeError(f"initial state shape {h0.shape} != {(B, h)}")
    gx = reshape(matmul(reshape(x, (T * B, k)), params.w) + params.b, (T, B, 3 * h))
    return _recurrence(gx, params.u, mask, h0)


def gru_sequence_unfused(params, x, mask, h0=None):
    """Reference implementation of :func:`gru_sequence` via per-step cells."""
    T, B, _ = x.shape
    h = params.hidden_dim
    state = h0 if h0 is not None else Tensor(np.zeros((B, h)))
    outs = []
    for t in range(T):
        m = Tensor(np.asarray(mask[t], dtype=np.float64)[:, None])
        new = gru_cell_forward(params, x[t], state)
        state = state + m * (new - state)
        outs.append(reshape(state, (1, B, h)))
    return concat(outs, axis=0)
