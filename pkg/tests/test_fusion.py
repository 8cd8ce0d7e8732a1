import numpy as np
import pytest

from magnituders.architectures import nerf_baseline, nerf_mag, sdf_network
from magnituders.errors import InvalidArgument
from magnituders.fusion import bundle, bundle_with_concat, fuse_network, fused_macs, sequential_macs
from magnituders.layers import IDENTITY, RELU, DenseLayer, FusedLayer, MagLayer, Network, mac_count, param_count
from magnituders.numerics import RngStream


def _rand(shape, seed):
    return RngStream(seed).generator().standard_normal(shape)


class TestBundle:
    def test_identity_next_layer(self):
        mag = MagLayer(_rand((6, 5), 1), _rand((5, 4), 2), RELU, b=_rand(6, 3))
        fused = bundle(mag, DenseLayer(np.eye(6), np.zeros(6), IDENTITY))
        np.testing.assert_allclose(fused.W_hat, mag.W, atol=1e-15)
        X = _rand((10, 4), 4)
        np.testing.assert_allclose(fused.forward(X), mag.features(X) @ mag.W.T + mag.b, atol=1e-12)

    def test_random_matches_sequential(self):
        mag = MagLayer(_rand((64, 32), 1), _rand((32, 12), 2), RELU, b=_rand(64, 5))
        nxt = DenseLayer(_rand((16, 64), 3), _rand(16, 4), RELU)
        X = _rand((100, 12), 6)
        seq = RELU((mag.features(X) @ mag.W.T + mag.b) @ nxt.W.T + nxt.b)
        assert np.max(np.abs(bundle(mag, nxt).forward(X) - seq)) <= 1e-10

    def test_shape_mismatch(self):
        mag = MagLayer(_rand((6, 5), 1), _rand((5, 4), 2))
        with pytest.raises(InvalidArgument):
            bundle(mag, DenseLayer(np.ones((3, 7)), np.zeros(3)))

    def test_flop_counts(self):
        d, m, l, out = 60, 256, 256, 256
        mag = MagLayer(np.zeros((l, m)), np.zeros((m, d)))
        nxt = DenseLayer(np.zeros((out, l)), np.zeros(out))
        fused = bundle(mag, nxt)
        assert sequential_macs(mag, nxt) == m * d + l * m + out * l
        assert fused_macs(fused) == m * d + out * m
        assert fused_macs(fused) < sequential_macs(mag, nxt)


class TestBundleWithConcat:
    def test_zero_concat_degenerates(self):
        mag = MagLayer(_rand((6, 5), 1), _rand((5, 4), 2))
        nxt = DenseLayer(_rand((3, 6), 3), _rand(3, 4))
        fused, concat = bundle_with_concat(mag, nxt, (0, 6))
        assert concat is None and fused.W_concat is None
        np.testing.assert_allclose(fused.W_hat, bundle(mag, nxt).W_hat)

    def test_random_shapes(self):
        mag = MagLayer(_rand((7, 9), 1), _rand((9, 4), 2), RELU, b=_rand(7, 8))
        nxt = DenseLayer(_rand((3, 5 + 7), 3), _rand(3, 4), RELU)
        X = _rand((20, 4), 5)
        Xc = _rand((20, 5), 6)
        fused, concat = bundle_with_concat(mag, nxt, (5, 7))
        seq = RELU(np.concatenate([Xc, mag.features(X) @ mag.W.T + mag.b], axis=1) @ nxt.W.T + nxt.b)
        assert np.max(np.abs(fused.forward(X, Xc) - seq)) <= 1e-10
        np.testing.assert_array_equal(concat.W, nxt.W[:, :5])

    def test_fused_needs_concat_input(self):
        mag = MagLayer(_rand((7, 9), 1), _rand((9, 4), 2))
        fused, _ = bundle_with_concat(mag, DenseLayer(_rand((3, 12), 3), np.zeros(3)), (5, 7))
        with pytest.raises(InvalidArgument):
            fused.forward(_rand((2, 4), 1))

    @pytest.mark.parametrize("split", [(4, 7), (5, 6), (-1, 7)])
    def test_inconsistent_split(self, split):
        mag = MagLayer(_rand((7, 9), 1), _rand((9, 4), 2))
        with pytest.raises(InvalidArgument):
            bundle_with_concat(mag, DenseLayer(_rand((3, 12), 3), np.zeros(3)), split)


class TestFuseNetwork:
    def test_no_mag_unchanged(self):
        net = nerf_baseline(RngStream(0))
        assert fuse_network(net) is net

    def test_nerf_mag_three_sites(self):
        net = nerf_mag(RngStream(1), 256)
        fused = fuse_network(net)
        assert fused.meta["fused_sites"] == 3
        assert sum(isinstance(layer, FusedLayer) for layer in fused.layers) == 3
        assert fused.fused

    def test_nerf_mag_equivalence_and_cost(self):
        net = nerf_mag(RngStream(1), 256)
        fused = fuse_network(net)
        X = _rand((1000, 60), 2)
        assert np.max(np.abs(fused.forward_raw(X) - net.forward_raw(X))) <= 1e-9
        assert mac_count(fused) < mac_count(net)
        for name in ("density", "rgb"):
            np.testing.assert_allclose(fused.forward(X)[name], net.forward(X)[name], atol=1e-9)

    def test_skip_consumed_by_fusion(self):
        fused = fuse_network(nerf_mag(RngStream(1), 32))
        assert fused.skips == frozenset()
        assert fused.layers[1].concat_dim == 60

    def test_mag_relu_dense_pair(self):
        net = sdf_network(RngStream(3), 6, width=16, mag_features=8)
        fused = fuse_network(net)
        X = _rand((200, 6), 4)
        assert np.max(np.abs(fused.forward_raw(X) - net.forward_raw(X))) <= 1e-10
        assert mac_count(fused) < mac_count(net)

    def test_idempotent(self):
        once = fuse_network(nerf_mag(RngStream(1), 16))
        twice = fuse_network(once)
        assert twice is once

    def test_mag_at_skip_point_not_fused(self):
        layers = [
            DenseLayer(_rand((5, 3), 1), np.zeros(5), RELU),
            MagLayer(_rand((4, 6), 2), _rand((6, 8), 3)),
            DenseLayer(_rand((2, 4), 4), np.zeros(2)),
        ]
        net = Network(layers, 3, {1})
        assert fuse_network(net) is net

    def test_trailing_mag_not_fused(self):
        net = Network([MagLayer(_rand((4, 6), 2), _rand((6, 3), 3))], 3)
        assert fuse_network(net) is net

    @pytest.mark.parametrize("seed", range(5))
    def test_random_networks_equivalent(self, seed):
        gen = RngStream(seed, 9).generator()
        d = int(gen.integers(2, 6))
        width = int(gen.integers(3, 9))
        m = int(gen.integers(2, 12))
        layers = [
            MagLayer.init(d, m, width, RngStream(seed, 1), bias=bool(gen.integers(2))),
            DenseLayer.init(width + d, width, RELU, RngStream(seed, 2)),
            MagLayer.init(width, m, width, RngStream(seed, 3), bias=True),
            DenseLayer.init(width, 2, IDENTITY, RngStream(seed, 4)),
        ]
        net = Network(layers, d, {1})
        fused = fuse_network(net)
        X = gen.standard_normal((1000, d))
        assert np.max(np.abs(fused.forward_raw(X) - net.forward_raw(X))) <= 1e-9
        assert mac_count(fused) < mac_count(net)

    def test_fused_param_count_reports_matrices(self):
        fused = fuse_network(sdf_network(RngStream(3), 6, width=16, mag_features=8))
        trainable, frozen = param_count(fused)
        assert frozen == 8 * 16
        assert trainable > 0
