import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awebench.errors import GraphError, NumericError, ShapeError
from awebench.nncore import (AdamState, GruCellParams, Rng, Tape, Tensor, adam_step, backward,
                             derive_seed, gru_cell_forward, gru_sequence, gru_sequence_unfused,
                             reduce_lr_on_plateau)
from awebench.nncore import gru as gru_mod
from awebench.nncore import tensor as T
from gradcheck import check_gradients


def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def scalar_gru(w, u, b, x, h):
    """Gate equations evaluated one scalar at a time."""
    H = len(h)
    z, r, n, out = [0.0] * H, [0.0] * H, [0.0] * H, [0.0] * H
    for j in range(H):
        az = b[j] + sum(x[i] * w[i][j] for i in range(len(x))) + sum(h[i] * u[i][j]
                                                                     for i in range(H))
        ar = b[H + j] + sum(x[i] * w[i][H + j] for i in range(len(x))) + sum(
            h[i] * u[i][H + j] for i in range(H))
        z[j], r[j] = _sig(az), _sig(ar)
    for j in range(H):
        an = b[2 * H + j] + sum(x[i] * w[i][2 * H + j] for i in range(len(x))) + sum(
            r[i] * h[i] * u[i][2 * H + j] for i in range(H))
        n[j] = math.tanh(an)
        out[j] = (1 - z[j]) * h[j] + z[j] * n[j]
    return out


def test_theta_squared_gradient_exact():
    theta = Tensor(np.array([1.5, -2.0, 0.25]), True, "theta")
    with Tape() as tape:
        loss = (theta * theta).sum()
        (g,) = tape.backward(loss, [theta])
    assert np.array_equal(g, 2 * theta.data)


def test_constant_loss_gives_zero_gradient():
    theta = Tensor(np.ones(4), True, "theta")
    with Tape() as tape:
        loss = Tensor(np.ones(2)).sum() + (theta * 0.0).sum()
        (g,) = tape.backward(loss, [theta])
    assert np.array_equal(g, np.zeros(4))
    other = Tensor(np.ones(3), True)
    with Tape() as tape:
        loss = (theta * theta).sum()
        (g,) = tape.backward(loss, [other])
    assert np.array_equal(g, np.zeros(3))


def test_backward_rejects_non_scalar_and_detached():
    theta = Tensor(np.ones(3), True)
    with Tape() as tape:
        with pytest.raises(GraphError):
            tape.backward(theta * 2.0, [theta])
    with pytest.raises(GraphError):
        backward(Tensor(1.0), [theta])
    with Tape() as tape:
        loss = (theta * theta).sum()
    with Tape() as other:
        with pytest.raises(GraphError):
            other.backward(loss, [theta])


def test_tape_cleared_after_backward():
    theta = Tensor(np.ones(3), True)
    with Tape() as tape:
        loss = (theta * theta).sum()
        tape.backward(loss, [theta])
        assert tape.nodes == []
        with pytest.raises(GraphError):
            tape.backward(loss, [theta])


def test_nan_rejected_at_op_boundary():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    a = Tensor(np.array([0.0, 1.0]))
    with pytest.raises(NumericError):
        T.log(a)
    with pytest.raises(NumericError):
        Tensor([1.0]) / Tensor([0.0])


@pytest.mark.parametrize("op", ["add", "mul", "div", "matmul", "tanh", "sigmoid", "exp",
                                "log", "sqrt", "relu", "concat", "getitem", "take_rows",
                                "log_softmax", "transpose", "broadcast", "mean", "time_permute"])
def test_primitive_gradients(op):
    rng = np.random.default_rng(7)
    a = Tensor(rng.uniform(0.5, 1.5, (3, 4)), True, "a")
    b = Tensor(rng.uniform(0.5, 1.5, (3, 4)), True, "b")
    c = Tensor(rng.normal(size=(4, 2)), True, "c")
    w = Tensor(rng.normal(size=(3, 4)))
    perm = np.array([[2, 0, 1, 0], [1, 1, 0, 2], [0, 2, 2, 1]])
    fns = {
        "add": lambda: a + b[0],
        "mul": lambda: a * b,
        "div": lambda: a / b,
        "matmul": lambda: T.matmul(a, c),
        "tanh": lambda: T.tanh(a - 1.0),
        "sigmoid": lambda: T.sigmoid(a),
        "exp": lambda: T.exp(a),
        "log": lambda: T.log(a),
        "sqrt": lambda: T.sqrt(a),
        "relu": lambda: T.relu(a - 1.0),
        "concat": lambda: T.concat([a, b], axis=1),
        "getitem": lambda: a[1:, [0, 0, 3]],
        "take_rows": lambda: T.take_rows(a, [2, 0, 2]),
        "log_softmax": lambda: T.log_softmax(a),
        "transpose": lambda: a.T,
        "broadcast": lambda: T.broadcast_to(a[0], (5, 4)),
        "mean": lambda: a.mean(axis=0),
        "time_permute": lambda: T.time_permute(T.reshape(a, (3, 4, 1)), perm),
    }

    def loss():
        out = fns[op]()
        proj = np.resize(w.data, out.shape)
        return (out * Tensor(proj)).sum()

    err = check_gradients(loss, [a, b, c], np.random.default_rng(0))
    assert err <= 1e-7


def test_cross_entropy_sum_matches_log_softmax():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(5, 6))
    tgt = rng.integers(0, 6, 5)
    weights = np.array([1.0, 1.0, 0.0, 1.0, 0.5])
    got = T.cross_entropy_sum(Tensor(logits), tgt, weights).item()
    ls = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    assert got == pytest.approx(-(weights * ls[np.arange(5), tgt]).sum(), abs=1e-12)
    x = Tensor(logits, True)
    err = check_gradients(lambda: T.cross_entropy_sum(x, tgt, weights), [x],
                          np.random.default_rng(1))
    assert err <= 1e-7


def test_gru_zero_weights():
    p = GruCellParams.zeros(3, 4)
    v = np.array([1.0, -2.0, 0.5, 3.0])
    out = gru_cell_forward(p, np.array([0.3, -1.0, 2.0]), v)
    assert np.array_equal(out.data, 0.5 * v)
    assert np.array_equal(gru_cell_forward(p, np.ones(3), np.zeros(4)).data, np.zeros(4))


def test_gru_cell_matches_scalar_oracle():
    for seed in range(5):
        p = GruCellParams.init(3, 4, Rng(seed))
        r = np.random.default_rng(seed)
        x, h = r.normal(size=3), r.normal(size=4)
        got = gru_cell_forward(p, x, h).data
        want = scalar_gru(p.w.data.tolist(), p.u.data.tolist(), p.b.data.tolist(), x.tolist(),
                          h.tolist())
        assert np.max(np.abs(got - np.array(want))) <= 1e-12


def test_gru_cell_shape_error():
    p = GruCellParams.zeros(3, 4)
    with pytest.raises(ShapeError):
        gru_cell_forward(p, np.ones(2), np.zeros(4))
    with pytest.raises(ShapeError):
        GruCellParams(Tensor(np.zeros((3, 12))), Tensor(np.zeros((4, 11))),
                      Tensor(np.zeros(12)), 3, 4)


def _toy_sequence(seed, T_=6, B=3, k=3, h=4):
    rng = np.random.default_rng(seed)
    p = GruCellParams.init(k, h, Rng(seed))
    x = Tensor(rng.normal(size=(T_, B, k)))
    lengths = np.array([T_, T_ - 2, 1])[:B]
    mask = (np.arange(T_)[:, None] < lengths[None, :]).astype(float)
    return p, x, mask, lengths


def test_fused_sequence_matches_unfused():
    p, x, mask, _ = _toy_sequence(0)
    h0 = Tensor(np.random.default_rng(1).normal(size=(3, 4)), True)
    fused = gru_sequence(p, x, mask, h0)
    ref = gru_sequence_unfused(p, x, mask, h0)
    assert np.max(np.abs(fused.data - ref.data)) <= 1e-12
    grads = []
    for fn in (gru_sequence, gru_sequence_unfused):
        with Tape() as tape:
            loss = (fn(p, x, mask, h0) * Tensor(np.linspace(-1, 1, 72).reshape(6, 3, 4))).sum()
            grads.append(tape.backward(loss, p.tensors() + [h0]))
    for a, b in zip(*grads):
        assert np.max(np.abs(a - b)) <= 1e-12


def test_masked_final_state_equals_unpadded_run():
    p, x, mask, lengths = _toy_sequence(2)
    out = gru_sequence(p, x, mask)
    for b, n in enumerate(lengths):
        alone = gru_sequence(p, Tensor(x.data[:n, b : b + 1]), np.ones((n, 1)))
        assert np.max(np.abs(out.data[-1, b] - alone.data[-1, 0])) <= 1e-12


def test_sequence_gradients_finite_difference():
    p, x, mask, _ = _toy_sequence(4)
    proj = Tensor(np.random.default_rng(9).normal(size=(6, 3, 4)))
    err = check_gradients(lambda: (gru_sequence(p, x, mask) * proj).sum(), p.tensors(),
                          np.random.default_rng(0))
    assert err <= 1e-6


@pytest.mark.skipif(not gru_mod.compiled_available(), reason="extension not built")
def test_compiled_kernel_matches_numpy():
    rng = np.random.default_rng(5)
    T_, B, h = 7, 4, 5
    gx = rng.normal(size=(T_, B, 3 * h))
    u = rng.normal(scale=0.5, size=(h, 3 * h))
    mask = (np.arange(T_)[:, None] < np.array([7, 3, 5, 1])[None, :]).astype(float)
    h0 = rng.normal(size=(B, h))
    py, cy = gru_mod.kernels_for("numpy"), gru_mod.kernels_for("compiled")
    fa, fb = py.gru_forward(gx, u, mask, h0), cy.gru_forward(gx, u, mask, h0)
    for a, b in zip(fa, fb):
        assert np.max(np.abs(a - b)) <= 1e-12
    dH = rng.normal(size=(T_, B, h))
    for a, b in zip(py.gru_backward(dH, u, mask, h0, *fa), cy.gru_backward(dH, u, mask, h0, *fb)):
        assert np.max(np.abs(a - b)) <= 1e-12


def test_compiled_tanh_saturates_without_nan():
    if not gru_mod.compiled_available():
        pytest.skip("extension not built")
    cy = gru_mod.kernels_for("compiled")
    gx = np.full((1, 1, 3), -800.0)
    H, _, _, N = cy.gru_forward(gx, np.zeros((1, 3)), np.ones((1, 1)), np.zeros((1, 1)))
    assert N[0, 0, 0] == -1.0 and np.isfinite(H).all()


def test_use_backend_round_trip():
    old = gru_mod.use_backend("numpy")
    try:
        assert gru_mod.BACKEND == "numpy"
        with pytest.raises(ValueError):
            gru_mod.use_backend("fortran")
    finally:
        gru_mod.use_backend(old)


def test_adam_first_step_moves_by_lr_sign():
    for g in (3.0, -0.02, 1e-3):
        p = {"w": Tensor(np.array([0.7]), True)}
        adam_step(AdamState(lr=0.001), p, {"w": np.array([g])})
        assert p["w"].data[0] - 0.7 == pytest.approx(-0.001 * np.sign(g), rel=1e-4)


def test_adam_zero_gradient_only_decays_moments():
    p = {"w": Tensor(np.array([0.7, -1.0]), True)}
    st_ = AdamState()
    adam_step(st_, p, {"w": np.array([1.0, -2.0])})
    m, v = st_.m["w"].copy(), st_.v["w"].copy()
    adam_step(st_, p, {"w": np.zeros(2)})
    assert np.array_equal(st_.m["w"], 0.9 * m)
    assert np.array_equal(st_.v["w"], 0.999 * v)


def test_adam_zero_gradient_from_fresh_state_is_identity():
    p = {"w": Tensor(np.array([0.7, -1.0]), True)}
    st_ = AdamState()
    adam_step(st_, p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"].data, [0.7, -1.0])
    assert st_.step == 1


def test_adam_quadratic_descends_monotonically():
    p = {"t": Tensor(np.array([1.0]), True)}
    st_ = AdamState(lr=0.01)
    trace = [1.0]
    for _ in range(10):
        adam_step(st_, p, {"t": 2 * p["t"].data})
        trace.append(abs(p["t"].data[0]))
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_adam_rejects_nan_naming_parameter():
    p = {"enc.w": Tensor(np.ones(2), True)}
    with pytest.raises(NumericError, match="enc.w"):
        adam_step(AdamState(), p, {"enc.w": np.array([1.0, np.nan])})


def test_plateau_rule():
    assert reduce_lr_on_plateau(list(np.linspace(0, 1, 30)), 0.001) == 0.001
    assert reduce_lr_on_plateau([0.5] + [0.4] * 10, 0.001) == 0.0005
    assert reduce_lr_on_plateau([0.5] * 21, 0.001, 0.5, 10) == pytest.approx(0.00025)
    with pytest.raises(ValueError):
        reduce_lr_on_plateau([], 0.001)
    with pytest.raises(ValueError):
        reduce_lr_on_plateau([1.0], 0.001, factor=1.0)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(1, 12))
def test_plateau_never_increases(history, patience):
    lr = reduce_lr_on_plateau(history, 1e-3, 0.5, patience)
    assert 0 < lr <= 1e-3
    halvings = round(math.log2(1e-3 / lr))
    assert halvings <= (len(history) - 1) // patience


def test_rng_determinism_and_streams():
    a, b = Rng(42), Rng(42)
    assert np.array_equal(a.normal(size=5), b.normal(size=5))
    assert a.position == b.position == 1
    assert not np.array_equal(Rng(42).derive("x").random(4), Rng(42).derive("y").random(4))
    assert derive_seed(1, "train:A") == derive_seed(1, "train:A")
    assert derive_seed(1, "train:A") != derive_seed(2, "train:A")


@settings(max_examples=30)
@given(st.integers(0, 2**64 - 1), st.text(max_size=12))
def test_derive_seed_in_range(seed, name):
    s = derive_seed(seed, name)
    assert 0 <= s < 2**64


@pytest.mark.parametrize("env, want", [({"AWEBENCH_PURE_PYTHON": "1"}, "numpy"), ({}, None)])
def test_backend_selected_at_import(env, want):
    full = {k: v for k, v in os.environ.items() if k != "AWEBENCH_PURE_PYTHON"}
    full.update(env)
    code = "from awebench.nncore import gru; print(gru.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=full, capture_output=True,
                         text=True, check=True).stdout.strip()
    if want is None:
        want = "compiled" if gru_mod.compiled_available() else "numpy"
    assert out == want
