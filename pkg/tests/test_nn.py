import numpy as np
import pytest

from geopop.errors import DimensionError, ModelFormatError, NonFiniteGradientError, StateError
from geopop.nn import (
    AdamState, Conv2D, Dense, Flatten, LeakyReLU, ModelBundle, ReLU, Sequential, adam_step,
    bce_loss, grad_check, load_bundle, mse_loss, save_bundle, scaler_fit, scaler_fit_transform,
)

from gradcases import LAYER_CASES, ann, desk_cnn, layer_problem


def conv_with(kernel, x):
    layer = Conv2D(1)
    model = Sequential([layer], x.shape[1:], dtype=np.float64).initialize(0)
    model.set_parameters([kernel.reshape(1, 1, 3, 3), np.zeros(1)])
    return model.forward(x)


def test_conv_all_ones_center():
    x = np.arange(1, 10, dtype=np.float64).reshape(1, 3, 3, 1)
    out = conv_with(np.ones((3, 3)), x)
    assert out[0, 1, 1, 0] == 45.0
    # corner sees the 2x2 in-bounds neighbourhood only
    assert out[0, 0, 0, 0] == 1 + 2 + 4 + 5


def test_conv_identity_kernel():
    k = np.zeros((3, 3))
    k[1, 1] = 1
    x = np.random.default_rng(0).normal(size=(2, 6, 5, 1))
    assert np.array_equal(conv_with(k, x), x)


def test_conv_matches_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 5, 4, 3))
    model = Sequential([Conv2D(2)], (5, 4, 3), dtype=np.float64).initialize(1)
    W, b = (p for _, p in model.parameters())
    out = model.forward(x)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    for n in range(2):
        for i in range(5):
            for j in range(4):
                for f in range(2):
                    acc = b[f]
                    for di in range(3):
                        for dj in range(3):
                            for c in range(3):
                                acc += W[f, c, di, dj] * xp[n, i + di, j + dj, c]
                    assert out[n, i, j, f] == pytest.approx(acc, abs=1e-12)


def test_relu_and_leaky():
    x = np.array([[-1.0, 0.0, 2.0]])
    assert Sequential([ReLU()], (3,)).forward(x).tolist() == [[0, 0, 2]]
    assert Sequential([LeakyReLU(0.01)], (3,)).forward(x).tolist() == [[-0.01, 0, 2]]


def test_dense_gradient_is_outer_product():
    model = Sequential([Dense(2)], (3,), dtype=np.float64).initialize(0)
    x = np.array([[1.0, 2.0, 3.0]])
    g = np.array([[0.5, -1.0]])
    model.forward(x, training=True, seed=0)
    model.backward(g)
    dW = dict(model.gradients())["0.W"]
    assert np.array_equal(dW, g.T @ x)


def test_zero_upstream_gives_zero_gradients():
    model, x, _, _ = desk_cnn(0)
    model.forward(x, training=True, seed=0)
    model.backward(np.zeros((3, 1)))
    for (name, g), (_, p) in zip(model.gradients(), model.parameters()):
        # dense weights still receive their L2 term
        expected = 1e-4 * p if name.endswith("W") and p.ndim == 2 else 0 * p
        assert np.array_equal(g, expected), name


def test_shape_mismatch_names_layer():
    with pytest.raises(DimensionError, match="layer 2"):
        Sequential([Flatten(), Dense(3), Conv2D(2)], (4, 4, 1))
    model = Sequential([Dense(2)], (3,))
    with pytest.raises(DimensionError):
        model.forward(np.zeros((1, 4)))


def test_backward_before_forward():
    model = Sequential([Dense(2)], (3,)).initialize(0)
    with pytest.raises(StateError):
        model.backward(np.zeros((1, 2)))
    model.forward(np.zeros((1, 3)), training=False)
    with pytest.raises(StateError):
        model.backward(np.zeros((1, 2)))


def test_bce_values():
    assert bce_loss(np.array([[1.0]]), np.array([[1.0]]))[0] == pytest.approx(1e-7, rel=1e-3)
    assert bce_loss(np.array([[0.5]]), np.array([[1.0]]))[0] == pytest.approx(np.log(2), abs=1e-12)
    assert bce_loss(np.array([[0.0]]), np.array([[1.0]]))[0] == pytest.approx(-np.log(1e-7), rel=1e-9)
    assert bce_loss(np.array([[0.0]]), np.array([[1.0]]))[0] == pytest.approx(16.118, abs=1e-3)


def test_mse_values():
    assert mse_loss(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))[0] == 0.0
    assert mse_loss(np.array([[3.0]]), np.array([[1.0]]))[0] == 4.0
    with pytest.raises(DimensionError):
        mse_loss(np.zeros((2, 1)), np.zeros((3, 1)))


def test_mse_vs_scalar_loop():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    acc = 0.0
    for u, v in zip(a.ravel(), b.ravel()):
        acc += (u - v) ** 2
    assert abs(mse_loss(a, b)[0] - acc / a.size) < 1e-12


def test_adam_first_step():
    p = np.array([1.0])
    st = AdamState(lr=1e-4)
    adam_step(st, [("p", p)], [("p", np.array([1.0]))])
    assert p[0] == pytest.approx(0.9999, abs=1e-9)
    assert st.t == 1


def test_adam_zero_gradient():
    p = np.array([1.0, -2.0])
    st = AdamState()
    adam_step(st, [("p", p)], [("p", np.zeros(2))])
    assert p.tolist() == [1.0, -2.0] and st.t == 1


def test_adam_non_finite_aborts():
    p = np.array([1.0, 2.0])
    st = AdamState()
    with pytest.raises(NonFiniteGradientError, match="bad"):
        adam_step(st, [("ok", p), ("bad", p.copy())], [("ok", np.ones(2)), ("bad", np.array([np.nan, 0]))])
    assert p.tolist() == [1.0, 2.0] and st.t == 0


def test_adam_runs_are_bit_identical():
    def run():
        model, x, y, loss = ann(4)
        st = AdamState(lr=1e-3)
        for i in range(5):
            out = model.forward(x, training=True, seed=i)
            model.backward(loss(out, y)[1])
            adam_step(st, model.parameters(), model.gradients())
        return [p.copy() for _, p in model.parameters()]
    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_scalers():
    s, z = scaler_fit_transform("minmax", np.array([[0.0], [5.0], [10.0]]))
    assert z[:, 0].tolist() == [0, 0.5, 1]
    s, z = scaler_fit_transform("minmax", np.array([[2.0], [2.0], [2.0]]))
    assert z[:, 0].tolist() == [0, 0, 0] and s.degenerate.all()
    s, z = scaler_fit_transform("standard", np.array([[1.0], [3.0]]))
    assert z[:, 0].tolist() == [-1, 1]
    x = np.random.default_rng(0).normal(size=(10, 3))
    sc = scaler_fit("standard", x)
    assert np.allclose(sc.inverse_transform(sc.transform(x)), x)


@pytest.mark.parametrize("name,factory,shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
def test_layer_gradients(name, factory, shape):
    for seed in range(5):
        model, x, y, loss = layer_problem(factory, shape, seed)
        rep = grad_check(model, x, y, loss, seed=seed, check_input=True)
        assert rep.max_rel_error < 1e-4, (seed, rep)


def test_desk_cnn_gradients():
    for seed in range(3):
        rep = grad_check(*desk_cnn(seed), seed=seed, check_input=True)
        assert rep.max_rel_error < 1e-4, (seed, rep)
        assert rep.n_checked > 0.9 * (rep.n_checked + rep.n_kink_skipped)


def test_ann_gradients():
    rep = grad_check(*ann(0), seed=0)
    assert rep.max_rel_error < 1e-4, rep


def test_zero_network_gradcheck():
    model = Sequential([Dense(3), ReLU(), Dense(1)], (2,), dtype=np.float64).initialize(0)
    model.set_parameters([np.zeros_like(p) for _, p in model.parameters()])
    rep = grad_check(model, np.zeros((2, 2)), np.zeros((2, 1)), mse_loss)
    assert rep.max_rel_error == 0.0


def test_bundle_round_trip():
    model, *_ = desk_cnn(1)
    model = model.astype(np.float32)
    b = ModelBundle("cnn", model, 1, config={"a": 1}, meta={"band_min": [0.0]})
    data = save_bundle(b)
    back = load_bundle(data, dtype=np.float32)
    assert back.kind == "cnn" and back.config == {"a": 1} and back.meta == {"band_min": [0.0]}
    for (_, p), (_, q) in zip(model.parameters(), back.network.parameters()):
        assert np.array_equal(p, q)
    assert save_bundle(back) == data
    with pytest.raises(ModelFormatError):
        load_bundle(data[:-4])
    with pytest.raises(ModelFormatError):
        load_bundle(b"nope" + data[4:])
