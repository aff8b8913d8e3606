import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sganseg.errors import FormatError, ShapeError, UninitializedStatsError
from sganseg.nn import (
    Adam,
    AdamState,
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    LeakyReLU,
    MaxPool2d,
    Network,
    PixelShuffle,
    PReLU,
    ResBegin,
    ResEnd,
    Sigmoid,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    grad_check,
    inverse_pixel_shuffle,
    load_network,
    mse_loss,
    pixel_shuffle,
    save_network,
    sigmoid,
)
from sganseg.nn import checkpoint

RNG = np.random.default_rng


def _conv(x, w, b, stride, pad):
    """Direct loop oracle for cross-correlation."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride : i * stride + k, j * stride : j * stride + k]
            out[:, :, i, j] = np.tensordot(patch, w, axes=([1, 2, 3], [1, 2, 3])) + b
    return out


def test_conv_ones_counts_overlap():
    out = conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out[0, 0, 1, 1] == 9
    assert out[0, 0, 0, 0] == out[0, 0, 2, 2] == 4
    assert out[0, 0, 0, 1] == 6


def test_conv_identity_kernel_and_stride():
    x = RNG(0).random((2, 1, 6, 5))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(conv2d_forward(x, k, np.zeros(1)), x)
    assert conv2d_forward(np.ones((1, 1, 8, 8)), k, np.zeros(1), stride=2).shape == (1, 1, 4, 4)
    with pytest.raises(ShapeError):
        conv2d_forward(np.ones((1, 2, 8, 8)), k, np.zeros(1))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(stride):
    rng = RNG(1)
    x, w, b = rng.standard_normal((2, 3, 7, 6)), rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    np.testing.assert_allclose(conv2d_forward(x, w, b, stride, 1), _conv(x, w, b, stride, 1), atol=1e-12)


def test_conv_backward_bias_and_zero():
    rng = RNG(2)
    x, w = rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((4, 3, 3, 3))
    g = rng.standard_normal((2, 4, 5, 5))
    _, _, gb = conv2d_backward(x, w, g)
    np.testing.assert_allclose(gb, g.sum(axis=(0, 2, 3)))
    gx, gw, gb = conv2d_backward(x, w, np.zeros_like(g))
    assert not gx.any() and not gw.any() and not gb.any()
    with pytest.raises(ShapeError):
        conv2d_backward(x, w, g[:, :2])


def test_conv_layer_gradient():
    net = Network([Conv2d(3, 4, rng=RNG(3))], input_shape=(2, 3, 5, 5))
    assert grad_check(net, RNG(4).standard_normal((2, 3, 5, 5))) < 1e-6
    net = Network([Conv2d(2, 3, stride=2, rng=RNG(3))])
    assert grad_check(net, RNG(4).standard_normal((2, 2, 7, 6))) < 1e-6


def test_batchnorm_train_statistics():
    bn = BatchNorm(3)
    x = RNG(5).standard_normal((4, 3, 5, 5)) * 3 + 2
    y = bn.forward(x, train=True)
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-6)
    # eps inside the square root keeps the variance slightly under 1
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-5)


def test_batchnorm_constant_channel_and_eval_guard():
    bn = BatchNorm(1)
    with pytest.raises(UninitializedStatsError):
        bn.forward(np.ones((2, 1, 3, 3)))
    y = bn.forward(np.full((2, 1, 3, 3), 4.0), train=True)
    assert np.all(y == 0)
    assert np.all(np.isfinite(bn.forward(np.ones((1, 1, 3, 3)))))


def test_batchnorm_running_stats_momentum():
    bn = BatchNorm(1)
    a = np.full((1, 1, 2, 2), 1.0)
    a[0, 0, 0, 0] = 3.0
    bn.forward(a, train=True)
    assert bn.buffers["running_mean"][0] == pytest.approx(1.5)
    bn.forward(np.full((1, 1, 2, 2), 11.5) + np.array([[[[1, -1], [0, 0]]]]), train=True)
    assert bn.buffers["running_mean"][0] == pytest.approx(0.9 * 1.5 + 0.1 * 11.5)


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradient(train):
    bn = BatchNorm(3)
    rng = RNG(6)
    bn.params["gamma"] = rng.uniform(0.5, 1.5, 3)
    bn.params["beta"] = rng.standard_normal(3)
    x = rng.standard_normal((3, 3, 4, 4))
    bn.forward(x, train=True)
    assert grad_check(Network([bn]), x, train=train) < 1e-5


def test_relu_family_values():
    x = np.array([-1.0, 0.0, 2.0]).reshape(1, 3, 1, 1)
    np.testing.assert_allclose(LeakyReLU(0.2).forward(x).ravel(), [-0.2, 0, 2])
    np.testing.assert_allclose(PReLU(3, init=0.2).forward(x).ravel(), [-0.2, 0, 2])
    np.testing.assert_array_equal(LeakyReLU(1.0).forward(x), x)
    assert PReLU(2).params["slope"].tolist() == [0.25, 0.25]


def test_prelu_slope_gradient():
    p = PReLU(2)
    x = RNG(7).standard_normal((2, 2, 3, 3))
    g = RNG(8).standard_normal(x.shape)
    p.forward(x)
    p.backward(g)
    expect = np.where(x < 0, g * x, 0).sum(axis=(0, 2, 3))
    np.testing.assert_allclose(p.grads["slope"], expect)
    assert grad_check(Network([PReLU(2)]), x) < 1e-6


def test_pixel_shuffle_layout():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1)
    assert pixel_shuffle(x, 2).tolist() == [[[[1.0, 2.0], [3.0, 4.0]]]]
    y = RNG(9).random((2, 3, 4, 5))
    np.testing.assert_array_equal(pixel_shuffle(y, 1), y)
    with pytest.raises(ShapeError):
        pixel_shuffle(np.zeros((1, 3, 2, 2)), 2)


def test_pixel_shuffle_round_trip_many_shapes():
    rng = RNG(10)
    for _ in range(100):
        r = int(rng.integers(1, 4))
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 4)) * r * r, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        x = rng.standard_normal(shape)
        np.testing.assert_array_equal(inverse_pixel_shuffle(pixel_shuffle(x, r), r), x)


def test_mse_and_sigmoid():
    x = RNG(11).random((3, 4))
    assert mse_loss(x, x)[0] == 0
    val, grad = mse_loss(np.array([0.0, 2.0]), np.array([1.0, 1.0]))
    assert val == 1.0 and grad.tolist() == [-1.0, 1.0]
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(2), np.zeros(3))
    assert sigmoid(np.array(0.0)) == 0.5
    with np.errstate(over="raise"):
        s = sigmoid(np.array([40.0, -40.0, 800.0, -800.0]))
    assert abs(s[0] - 1) < 1e-15 and s[1] < 1e-15 and s[2] == 1 and s[3] == 0


@pytest.mark.parametrize(
    "layers, shape",
    [
        ([LeakyReLU(0.2)], (2, 3, 4, 4)),
        ([MaxPool2d()], (2, 2, 5, 4)),
        ([Flatten(), Dense(2 * 3 * 3, 5, rng=RNG(12))], (3, 2, 3, 3)),
        ([Flatten(), Dense(4, 3, rng=RNG(12)), Sigmoid()], (3, 4, 1, 1)),
        ([Conv2d(4, 8, rng=RNG(13)), PixelShuffle(2)], (2, 4, 3, 3)),
        ([ResBegin(), Conv2d(2, 2, rng=RNG(14)), PReLU(2), ResEnd()], (2, 2, 4, 4)),
    ],
)
def test_layer_gradients(layers, shape):
    net = Network(layers, input_shape=shape)
    assert grad_check(net, RNG(15).standard_normal(shape)) < 1e-6


class _SkewedPReLU(PReLU):
    def backward(self, grad):
        return super().backward(grad) * 1.01


def test_grad_check_flags_wrong_backward():
    x = RNG(16).standard_normal((2, 2, 4, 4))
    assert grad_check(Network([_SkewedPReLU(2)]), x) > 5e-3


def test_zero_true_gradient_is_not_reported_as_error():
    # a conv bias feeding train-mode batch norm has exactly zero gradient
    net = Network([Conv2d(1, 2, rng=RNG(17)), BatchNorm(2)])
    err, details = grad_check(net, RNG(18).standard_normal((2, 1, 4, 4)), return_details=True)
    assert err < 1e-6 and details["0.bias"] == 0.0


def test_frozen_layer_passes_vacuously():
    net = Network([Conv2d(1, 2, rng=RNG(0))]).freeze()
    err, details = grad_check(net, RNG(1).standard_normal((1, 1, 4, 4)), return_details=True)
    assert list(details) == ["input"] and err < 1e-6
    assert grad_check(Network([LeakyReLU(0.2)]), RNG(1).standard_normal((1, 1, 4, 4))) < 1e-6


def test_network_shape_validation():
    with pytest.raises(ShapeError):
        Network([Conv2d(1, 2), BatchNorm(3)], input_shape=(1, 1, 4, 4))
    with pytest.raises(ShapeError):
        Network([ResBegin(), Conv2d(1, 2)])
    with pytest.raises(ShapeError):
        Network([ResEnd()])
    with pytest.raises(ShapeError):
        Network([ResBegin(), Conv2d(1, 2), ResEnd()], input_shape=(1, 1, 4, 4))


def test_residual_skip_gradient_is_sum():
    net = Network([ResBegin(), Conv2d(1, 1, rng=RNG(2)), ResEnd()])
    x = RNG(3).standard_normal((1, 1, 4, 4))
    g = RNG(4).standard_normal(x.shape)
    net.forward(x)
    got = net.backward(g)
    branch, _, _ = conv2d_backward(x, net.layers[1].params["weight"], g)
    np.testing.assert_allclose(got, g + branch)


def test_adam_first_step_closed_form():
    st_ = AdamState(lr=0.1)
    out = adam_step({"p": np.array(0.0)}, {"p": np.array(1.0)}, st_)
    assert out["p"] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-12)
    assert st_.step == 1
    assert AdamState().lr == 1e-4 and AdamState().beta1 == 0.5
    assert AdamState().beta2 == 0.999 and AdamState().eps == 1e-8


def test_adam_zero_gradient_is_fixed_point():
    params = {"a": np.array([1.0, -2.0]), "b": np.array([[3.0]])}
    state = AdamState(lr=0.5)
    for _ in range(3):
        params2 = adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
        for k in params:
            np.testing.assert_array_equal(params2[k], params[k])


def test_adam_descends_quadratic():
    p, state, losses = np.array(3.0), AdamState(lr=0.1), []
    for _ in range(2):
        losses.append(float(p**2))
        p = adam_step({"p": p}, {"p": 2 * p}, state)["p"]
    losses.append(float(p**2))
    assert losses[0] > losses[1] > losses[2]


def test_adam_on_network():
    net = Network([Flatten(), Dense(4, 1, rng=RNG(5))])
    opt = Adam(net, lr=0.05)
    x = RNG(6).standard_normal((8, 4, 1, 1))
    y = x.reshape(8, 4) @ np.array([[1.0], [-1.0], [0.5], [2.0]])
    first = None
    for _ in range(100):
        val, g = mse_loss(net.forward(x, train=True), y)
        first = val if first is None else first
        net.zero_grad()
        net.backward(g)
        opt.step()
    assert val < first / 10


def _roundtrip_net():
    rng = RNG(7)
    net = Network(
        [Conv2d(1, 4, rng=rng), BatchNorm(4), PReLU(4), ResBegin(), Conv2d(4, 4, rng=rng), ResEnd(),
         Conv2d(4, 4, rng=rng), PixelShuffle(2), MaxPool2d(), LeakyReLU(0.2), Flatten(), Dense(16, 2, rng=rng), Sigmoid()],
        input_shape=(2, 1, 4, 4),
    )
    net.forward(rng.standard_normal((2, 1, 4, 4)).astype(np.float32), train=True)
    return net


def test_checkpoint_bit_exact(tmp_path):
    net = _roundtrip_net()
    path = tmp_path / "net.ckpt"
    save_network(net, path)
    back = load_network(path)
    assert [type(layer) for layer in back.layers] == [type(layer) for layer in net.layers]
    for k, v in net.param_dict().items():
        assert back.param_dict()[k].tobytes() == v.astype(np.float32).tobytes()
    assert checkpoint.dumps(back) == path.read_bytes()
    x = RNG(8).standard_normal((3, 1, 4, 4)).astype(np.float32)
    assert back(x).tobytes() == net(x).tobytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(FormatError):
        checkpoint.loads(b"NOPE" + bytes(8))
    data = checkpoint.dumps(_roundtrip_net())
    with pytest.raises(FormatError):
        checkpoint.loads(data[: len(data) // 2])


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 99))
@settings(max_examples=25, deadline=None)
def test_forward_is_deterministic(n, c, h, w, seed):
    net = Network([Conv2d(c, 2, rng=RNG(seed)), PReLU(2)])
    x = RNG(seed).standard_normal((n, c, h, w))
    assert net(x).tobytes() == net(x).tobytes()
    assert net(x).shape == net.output_shape(x.shape)
