import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnituders.architectures import nerf_baseline, nerf_mag, sdf_network
from magnituders.errors import InvalidArgument, TrainingDiverged
from magnituders.layers import (
    IDENTITY,
    RELU,
    SGD,
    SIGMOID,
    SOFTMAX,
    Activation,
    DenseLayer,
    Head,
    MagLayer,
    Network,
    TrainConfig,
    dense_forward,
    loss_and_gradients,
    mac_count,
    mag_forward,
    mag_variance_bound,
    network_forward,
    param_count,
    softplus,
    train,
)
from magnituders.numerics import RngStream


def small_mag(d=5, m=7, l=3, seed=0, bias=False):
    return MagLayer.init(d, m, l, RngStream(seed), bias=bias)


class TestActivation:
    def test_softplus_at_zero(self):
        np.testing.assert_allclose(softplus(1.0)(np.zeros(3)), math.log(2.0), rtol=1e-15)

    def test_parse_round_trip(self):
        for act in (RELU, IDENTITY, SIGMOID, SOFTMAX, softplus(2.5)):
            assert Activation.parse(str(act)) == act

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(InvalidArgument):
            Activation("softplus", 0.0)

    def test_unknown(self):
        with pytest.raises(InvalidArgument):
            Activation.parse("gelu")

    def test_softmax_rows_sum_to_one(self):
        z = RngStream(1).generator().standard_normal((4, 3)) * 10
        np.testing.assert_allclose(SOFTMAX(z).sum(axis=1), 1.0, rtol=1e-14)

    def test_sigmoid_extremes_finite(self):
        out = SIGMOID(np.array([[-800.0, 800.0]]))
        np.testing.assert_allclose(out, [[0.0, 1.0]], atol=1e-300)

    @pytest.mark.parametrize("act", [RELU, IDENTITY, SIGMOID, SOFTMAX, softplus(1.7)])
    def test_backward_matches_finite_differences(self, act):
        gen = RngStream(5).generator()
        z = gen.standard_normal((3, 4)) + 0.05
        up = gen.standard_normal((3, 4))
        analytic = act.backward(z, act(z), up)
        numeric = np.zeros_like(z)
        h = 1e-6
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += h
            zm[idx] -= h
            numeric[idx] = np.sum(up * (act(zp) - act(zm))) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


class TestMagForward:
    def test_zero_weights(self):
        layer = small_mag()
        layer.W[:] = 0.0
        X = RngStream(1).generator().standard_normal((4, 5))
        np.testing.assert_array_equal(mag_forward(layer, X), 0.0)

    def test_zero_input_relu(self):
        np.testing.assert_array_equal(mag_forward(small_mag(), np.zeros((3, 5))), 0.0)

    def test_hand_arithmetic(self):
        layer = MagLayer(np.array([[3.0]]), np.array([[2.0]]), RELU)
        assert mag_forward(layer, np.array([[1.0]]))[0, 0] == 6.0

    def test_bias_broadcast(self):
        layer = MagLayer(np.zeros((2, 3)), np.ones((3, 4)), RELU, b=np.array([1.0, -2.0]))
        np.testing.assert_array_equal(mag_forward(layer, np.ones((5, 4))), np.tile([1.0, -2.0], (5, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            mag_forward(small_mag(), np.ones((2, 4)))

    def test_w_g_mismatch(self):
        with pytest.raises(InvalidArgument):
            MagLayer(np.ones((2, 3)), np.ones((4, 5)))

    def test_g_is_read_only(self):
        layer = small_mag()
        with pytest.raises(ValueError):
            layer.G[0, 0] = 1.0

    def test_linear_in_w(self):
        gen = RngStream(2).generator()
        G = gen.standard_normal((7, 5))
        X = gen.standard_normal((6, 5))
        W1, W2 = gen.standard_normal((3, 7)), gen.standard_normal((3, 7))
        total = mag_forward(MagLayer(W1 + W2, G), X)
        parts = mag_forward(MagLayer(W1, G), X) + mag_forward(MagLayer(W2, G), X)
        np.testing.assert_allclose(total, parts, atol=1e-12)

    @given(c=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_relu_positive_homogeneity(self, c, seed):
        layer = small_mag(seed=seed)
        X = RngStream(seed, 1).generator().standard_normal((4, 5))
        scaled = mag_forward(layer, c * X)
        np.testing.assert_allclose(scaled, c * mag_forward(layer, X), rtol=1e-12, atol=1e-12)

    def test_batch_invariance(self):
        layer = small_mag(bias=True)
        X = RngStream(3).generator().standard_normal((5, 5))
        stacked = mag_forward(layer, X)
        rows = np.vstack([mag_forward(layer, X[i : i + 1]) for i in range(5)])
        np.testing.assert_allclose(stacked, rows, atol=1e-12)

    def test_init_bounds_and_source(self):
        layer = MagLayer.init(6, 10, 4, RngStream(5, 2, (1,)), bias=True)
        assert np.all(np.abs(layer.W) <= 1 / math.sqrt(10))
        np.testing.assert_array_equal(layer.g_source.regenerate(), layer.G)

    def test_custom_bound(self):
        bound = mag_variance_bound(6, 10)
        layer = MagLayer.init(6, 10, 4, RngStream(5), bound=bound)
        assert np.all(np.abs(layer.W) <= bound)


class TestDenseForward:
    def test_identity_layer(self):
        X = RngStream(1).generator().standard_normal((3, 4))
        np.testing.assert_array_equal(dense_forward(DenseLayer(np.eye(4), np.zeros(4), IDENTITY), X), X)

    def test_relu_all_negative(self):
        layer = DenseLayer(-np.eye(3), np.full(3, -1.0), RELU)
        np.testing.assert_array_equal(dense_forward(layer, np.abs(np.ones((2, 3)))), 0.0)

    def test_softplus_zero_preactivation(self):
        layer = DenseLayer(np.zeros((2, 3)), np.zeros(2), softplus(1.0))
        np.testing.assert_allclose(dense_forward(layer, np.ones((4, 3))), 0.6931471805599453, rtol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            dense_forward(DenseLayer(np.eye(3), np.zeros(3)), np.ones((2, 2)))

    def test_bias_length(self):
        with pytest.raises(InvalidArgument):
            DenseLayer(np.eye(3), np.zeros(2))


class TestNetwork:
    def test_single_identity_layer(self):
        net = Network([DenseLayer(np.eye(3), np.zeros(3))], 3)
        X = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(network_forward(net, X)["out"], X)

    def test_skip_shape_bookkeeping(self):
        rng = RngStream(0)
        layers = [DenseLayer.init(4, 6, RELU, rng.child(0)), DenseLayer.init(6 + 4, 2, IDENTITY, rng.child(1))]
        net = Network(layers, 4, {1})
        h, _ = net.layer_input(np.ones((3, 4)), 1)
        assert h.shape == (3, 10)
        np.testing.assert_array_equal(h[:, :4], 1.0)

    def test_topology_error_at_construction(self):
        layers = [DenseLayer(np.ones((6, 4)), np.zeros(6)), DenseLayer(np.ones((2, 6)), np.zeros(2))]
        with pytest.raises(InvalidArgument):
            Network(layers, 4, {1})

    def test_skip_index_out_of_range(self):
        with pytest.raises(InvalidArgument):
            Network([DenseLayer(np.eye(2), np.zeros(2))], 2, {0})

    def test_head_outside_output(self):
        with pytest.raises(InvalidArgument):
            Network([DenseLayer(np.eye(2), np.zeros(2))], 2, heads=(Head("x", 1, 3),))

    def test_nerf_heads_shapes(self):
        net = nerf_baseline(RngStream(0))
        out = net.forward(RngStream(1).generator().standard_normal((7, 60)))
        assert out["density"].shape == (7, 1)
        assert out["rgb"].shape == (7, 3)
        assert np.all((out["rgb"] > 0) & (out["rgb"] < 1))

    def test_layer_input_matches_forward(self):
        net = nerf_mag(RngStream(2), 16)
        X = RngStream(3).generator().standard_normal((5, 60))
        _, last = net.layer_input(X, len(net.layers) - 1)
        np.testing.assert_allclose(last, net.forward_raw(X), atol=1e-12)

    def test_unknown_head(self):
        with pytest.raises(InvalidArgument):
            nerf_baseline(RngStream(0)).head("depth")


def _numeric_grad(net, X, targets, layer_idx, name, index, h=1e-5):
    arr = dict(net.layers[layer_idx].params())[name]
    old = arr[index]
    arr[index] = old + h
    lp, _ = loss_and_gradients(net, X, targets)
    arr[index] = old - h
    lm, _ = loss_and_gradients(net, X, targets)
    arr[index] = old
    return (lp - lm) / (2 * h)


class TestGradients:
    @pytest.mark.parametrize(
        "builder",
        [
            lambda: Network(
                [
                    DenseLayer.init(4, 6, softplus(1.0), RngStream(0, 0)),
                    MagLayer.init(6, 9, 5, RngStream(0, 1), bias=True, f=softplus(1.0)),
                    DenseLayer.init(5 + 4, 3, IDENTITY, RngStream(0, 2)),
                ],
                4,
                {2},
                (Head("a", 0, 1, IDENTITY), Head("b", 1, 3, SIGMOID)),
            ),
            lambda: sdf_network(RngStream(1), 4, width=8, mag_features=6),
            lambda: nerf_mag(RngStream(2), 8, input_dim=4, width=6, rgb_hidden=5),
        ],
        ids=["mixed", "sdf_mag", "nerf_mag"],
    )
    def test_finite_differences(self, builder):
        net = builder()
        gen = RngStream(9).generator()
        X = gen.uniform(-1, 1, (6, net.input_dim))
        targets = {h.name: gen.uniform(0.1, 0.9, (6, h.width)) for h in net.heads}
        _, grads = loss_and_gradients(net, X, targets)
        entries = net.trainable()
        picks = gen.choice(sum(a.size for _, _, a in entries), size=10, replace=False)
        flat_index = []
        for li, (i, name, arr) in enumerate(entries):
            for k in range(arr.size):
                flat_index.append((li, i, name, np.unravel_index(k, arr.shape)))
        for p in picks:
            li, i, name, idx = flat_index[p]
            numeric = _numeric_grad(net, X, targets, i, name, idx)
            analytic = grads[li][idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / denom < 1e-4, (i, name, idx, numeric, analytic)

    def test_untargeted_head_has_no_gradient(self):
        net = nerf_baseline(RngStream(0), input_dim=4, width=6, rgb_hidden=5)
        X = np.ones((3, 4))
        loss_rgb, grads = loss_and_gradients(net, X, {"rgb": np.zeros((3, 3))})
        density_row = grads[-2][0]
        np.testing.assert_array_equal(density_row, 0.0)
        assert loss_rgb > 0

    def test_rejects_fused(self):
        from magnituders.fusion import fuse_network

        fused = fuse_network(nerf_mag(RngStream(2), 8, input_dim=4, width=6, rgb_hidden=5))
        with pytest.raises(InvalidArgument):
            loss_and_gradients(fused, np.ones((2, 4)), {"rgb": np.zeros((2, 3))})


class TestTrain:
    def test_zero_epochs_identity(self):
        net = nerf_mag(RngStream(1), 8, input_dim=4, width=6, rgb_hidden=5)
        trained, trace = train(net, np.ones((5, 4)), {"rgb": np.zeros((5, 3))}, TrainConfig(0, 2, 1e-3, RngStream(0)))
        assert trace == []
        for (_, _, a), (_, _, b) in zip(net.trainable(), trained.trainable()):
            np.testing.assert_array_equal(a, b)

    def test_linear_regression_realizable(self):
        gen = RngStream(4).generator()
        A = gen.standard_normal((2, 3))
        X = gen.standard_normal((200, 3))
        net = Network([DenseLayer(np.zeros((2, 3)), np.zeros(2), IDENTITY)], 3)
        trained, trace = train(net, X, X @ A.T, TrainConfig(400, 200, 0.05, RngStream(0)))
        assert trace[-1] < 1e-6

    def test_g_frozen_and_input_untouched(self):
        net = sdf_network(RngStream(1), 4, width=8, mag_features=6)
        before_g = net.layers[3].G.tobytes()
        snapshot = [a.copy() for _, _, a in net.trainable()]
        gen = RngStream(2).generator()
        trained, _ = train(net, gen.standard_normal((32, 4)), gen.standard_normal((32, 1)), TrainConfig(3, 8, 1e-2, RngStream(3)))
        assert trained.layers[3].G.tobytes() == before_g
        for a, (_, _, b) in zip(snapshot, net.trainable()):
            np.testing.assert_array_equal(a, b)
        assert not np.array_equal(trained.layers[3].W, net.layers[3].W)

    def test_deterministic(self):
        net = sdf_network(RngStream(1), 4, width=8, mag_features=6)
        gen = RngStream(2).generator()
        X, Y = gen.standard_normal((32, 4)), gen.standard_normal((32, 1))
        cfg = TrainConfig(3, 5, 1e-2, RngStream(3))
        _, t1 = train(net, X, Y, cfg)
        _, t2 = train(net, X, Y, cfg)
        assert t1 == t2

    def test_sgd_reduces_loss(self):
        gen = RngStream(5).generator()
        X = gen.standard_normal((64, 3))
        net = Network([DenseLayer.init(3, 1, IDENTITY, RngStream(0))], 3)
        _, trace = train(net, X, X[:, :1] * 2.0, TrainConfig(20, 16, 0.05, RngStream(1), optimizer=SGD()))
        assert trace[-1] < trace[0]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        net = Network([DenseLayer(np.ones((1, 1)), np.zeros(1), IDENTITY)], 1)
        X = np.full((4, 1), 1e200)
        with pytest.raises(TrainingDiverged):
            train(net, X, np.zeros((4, 1)), TrainConfig(1, 4, 1.0, RngStream(0), optimizer=SGD()))

    def test_row_mismatch(self):
        net = Network([DenseLayer(np.ones((1, 1)), np.zeros(1))], 1)
        with pytest.raises(InvalidArgument):
            train(net, np.ones((4, 1)), np.ones((3, 1)), TrainConfig(1, 2, 0.1, RngStream(0)))

    @pytest.mark.parametrize("kwargs", [{"epochs": -1}, {"batch_size": 0}, {"learning_rate": 0.0}])
    def test_config_validation(self, kwargs):
        base = {"epochs": 1, "batch_size": 1, "learning_rate": 0.1, "rng": RngStream(0)}
        base.update(kwargs)
        with pytest.raises(InvalidArgument):
            TrainConfig(**base)


class TestCounts:
    def test_dense_512(self):
        net = Network([DenseLayer(np.zeros((512, 512)), np.zeros(512))], 512)
        assert param_count(net) == (262_656, 0)

    def test_mag_512_64(self):
        layer = MagLayer(np.zeros((512, 64)), np.zeros((64, 512)))
        assert param_count(Network([layer], 512)) == (32_768, 32_768)

    def test_nerf_ratio(self):
        base = param_count(nerf_baseline(RngStream(0)))[0]
        mag = param_count(nerf_mag(RngStream(0), 256))[0]
        assert (base, mag) == (524_932, 377_732)
        assert 0.65 <= mag / base <= 0.75

    @pytest.mark.parametrize("m", [32, 64, 128])
    def test_mag_nerf_fewer_params_below_256(self, m):
        assert param_count(nerf_mag(RngStream(0), m))[0] < param_count(nerf_baseline(RngStream(0)))[0]

    def test_macs(self):
        layer = MagLayer(np.zeros((3, 7)), np.zeros((7, 5)))
        assert mac_count(Network([layer], 5)) == 7 * 5 + 3 * 7
