import numpy as np
import pytest

from magnituders.architectures import nerf_baseline, sdf_network
from magnituders.distill import CaptureDataset, capture, distill_closed_form, replace_layer, subsample
from magnituders.errors import InvalidArgument
from magnituders.experiments.synth import fit_readout_adam
from magnituders.fusion import fuse_network
from magnituders.layers import IDENTITY, RELU, DenseLayer, MagLayer, Network
from magnituders.numerics import RngStream, sample_ensemble


def probe(n, d, seed=0):
    return RngStream(seed, 99).generator().uniform(-1, 1, (n, d))


class TestCaptureDataset:
    def test_row_mismatch(self):
        with pytest.raises(InvalidArgument):
            CaptureDataset(np.ones((3, 2)), np.ones((4, 1)))

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            CaptureDataset(np.ones((0, 2)), np.ones((0, 1)))


class TestCapture:
    def test_layer_zero_input_is_probe(self):
        net = nerf_baseline(RngStream(0), input_dim=4, width=8, rgb_hidden=4)
        X = probe(10, 4)
        ds = capture(net, 0, X)
        np.testing.assert_array_equal(ds.X, X)
        assert ds.provenance["layer_index"] == 0

    def test_identity_layer_output(self):
        layer = DenseLayer(probe(3, 4, 1), probe(1, 3, 2)[0], IDENTITY)
        ds = capture(Network([layer], 4), 0, probe(6, 4))
        np.testing.assert_allclose(ds.Y, ds.X @ layer.W.T + layer.b, atol=1e-14)

    def test_skip_layer_input_includes_network_input(self):
        net = nerf_baseline(RngStream(0), input_dim=4, width=8, rgb_hidden=4)
        X = probe(5, 4)
        ds = capture(net, 5, X)
        assert ds.X.shape == (5, 12)
        np.testing.assert_array_equal(ds.X[:, :4], X)

    def test_read_only(self):
        net = nerf_baseline(RngStream(0), input_dim=4, width=8, rgb_hidden=4)
        X = probe(5, 4)
        before = net.forward_raw(X)
        capture(net, 3, X)
        np.testing.assert_array_equal(net.forward_raw(X), before)

    def test_invalid_index(self):
        with pytest.raises(InvalidArgument):
            capture(nerf_baseline(RngStream(0), input_dim=4, width=8, rgb_hidden=4), 10, probe(2, 4))


class TestSubsample:
    ds = CaptureDataset(np.arange(2000.0).reshape(1000, 2), np.arange(1000.0).reshape(1000, 1) * 2)

    def test_full_fraction_is_permutation(self):
        sub = subsample(self.ds, 1.0, RngStream(1))
        np.testing.assert_array_equal(np.sort(sub.Y[:, 0]), self.ds.Y[:, 0])

    def test_ten_percent_aligned(self):
        sub = subsample(self.ds, 0.1, RngStream(1))
        assert sub.n == 100
        np.testing.assert_array_equal(sub.Y[:, 0], sub.X[:, 0])
        assert len(np.unique(sub.X[:, 0])) == 100

    def test_streams_differ(self):
        a = subsample(self.ds, 0.1, RngStream(1)).X[:, 0]
        b = subsample(self.ds, 0.1, RngStream(2)).X[:, 0]
        assert set(a) != set(b)

    def test_deterministic(self):
        a = subsample(self.ds, 0.1, RngStream(1))
        b = subsample(self.ds, 0.1, RngStream(1))
        np.testing.assert_array_equal(a.X, b.X)

    @pytest.mark.parametrize("fraction", [0.0, 1.5, 0.0001])
    def test_invalid(self, fraction):
        with pytest.raises(InvalidArgument):
            subsample(self.ds, fraction, RngStream(1))


class TestDistillClosedForm:
    def test_realizable_target(self):
        X = probe(400, 6)
        rng = RngStream(3)
        G = sample_ensemble(10, 6, "orthogonal", rng)
        W = probe(4, 10, 7)
        ds = CaptureDataset(X, RELU(X @ G.T) @ W.T)
        layer, report = distill_closed_form(ds, 10, "orthogonal", rng, ridge=0.0)
        assert report.fit_mse <= 1e-12
        assert not report.rank_deficient
        np.testing.assert_allclose(layer.W, W, atol=1e-8)

    def test_duplicate_rows_pseudoinverse(self):
        X = np.repeat(probe(3, 4), 5, axis=0)
        Y = probe(15, 2, 2)
        layer, report = distill_closed_form(CaptureDataset(X, Y), 8, "iid", RngStream(1), ridge=0.0)
        assert report.rank_deficient
        F = RELU(X @ layer.G.T)
        resid = F.T @ (F @ layer.W.T - Y)
        assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(F.T @ Y)

    def test_all_zero_features(self):
        ds = CaptureDataset(np.zeros((5, 3)), np.ones((5, 2)))
        layer, report = distill_closed_form(ds, 4, "iid", RngStream(0))
        np.testing.assert_array_equal(layer.W, 0.0)
        assert report.rank_deficient and report.rank == 0

    def test_beats_gradient_descent(self):
        gen = RngStream(5).generator()
        X = gen.uniform(-1, 1, (5000, 16))
        Y = np.maximum(X @ gen.standard_normal((16, 8)) * 0.3 + 0.1, 0.0)
        ds = CaptureDataset(X, Y)
        layer, report = distill_closed_form(ds, 16, "orthogonal", RngStream(2), ridge=0.0)
        F = RELU(X @ layer.G.T)
        _, gd_mse = fit_readout_adam(F, Y, np.zeros((8, 16)), 300, 1e-2)
        assert report.fit_mse <= gd_mse + 1e-10

    def test_monotone_capacity(self):
        gen = RngStream(6).generator()
        X = gen.uniform(-1, 1, (3000, 10))
        ds = CaptureDataset(X, np.tanh(X @ gen.standard_normal((10, 5))))
        fits = [distill_closed_form(ds, m, "orthogonal", RngStream(4))[1].fit_mse for m in (8, 16, 32, 64, 128)]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(fits, fits[1:]))

    def test_deterministic(self):
        ds = CaptureDataset(probe(50, 4), probe(50, 2, 1))
        a, _ = distill_closed_form(ds, 6, "orthogonal", RngStream(9))
        b, _ = distill_closed_form(ds, 6, "orthogonal", RngStream(9))
        assert a.W.tobytes() == b.W.tobytes() and a.G.tobytes() == b.G.tobytes()

    def test_records_g_source(self):
        layer, report = distill_closed_form(CaptureDataset(probe(50, 4), probe(50, 2)), 6, "iid", RngStream(9, 2, (3,)))
        np.testing.assert_array_equal(layer.g_source.regenerate(), layer.G)
        assert report.m == 6 and report.ridge == 1e-8

    def test_invalid_m(self):
        with pytest.raises(InvalidArgument):
            distill_closed_form(CaptureDataset(probe(5, 2), probe(5, 1)), 0, "iid", RngStream(0))


class TestReplaceLayer:
    def net(self):
        return sdf_network(RngStream(2), 4, width=12)

    def test_realizable_replacement(self):
        # ReLU(h) - ReLU(-h) = h, so ReLU features over G = [I; -I] span any affine layer exactly
        layers = [
            DenseLayer(probe(5, 3, 1), probe(1, 5, 2)[0], RELU),
            DenseLayer(probe(4, 5, 3), probe(1, 4, 4)[0], IDENTITY),
            DenseLayer(probe(2, 4, 5), np.zeros(2), RELU),
        ]
        net = Network(layers, 3)
        X = probe(200, 3)
        G = np.vstack([np.eye(5), -np.eye(5)])
        F = RELU(net.layer_input(X, 1)[0] @ G.T)
        Y = capture(net, 1, X).Y - layers[1].b
        W = np.linalg.lstsq(F, Y, rcond=None)[0].T
        replaced = replace_layer(net, 1, MagLayer(W, G, RELU, b=layers[1].b))
        assert np.max(np.abs(replaced.forward_raw(X) - net.forward_raw(X))) <= 1e-8

    def test_replacement_matches_manual_composition(self):
        net = self.net()
        X = probe(40, 4)
        mag, _ = distill_closed_form(capture(net, 3, X), 12, "orthogonal", RngStream(1))
        replaced = replace_layer(net, 3, mag)
        h = net.layer_input(X, 3)[0]
        last = net.layers[4]
        expected = last.activation((mag.features(h) @ mag.W.T) @ last.W.T + last.b)
        np.testing.assert_allclose(replaced.forward_raw(X), expected, atol=1e-8)

    def test_error_propagation_bounded(self):
        net = self.net()
        X = probe(500, 4)
        ds = capture(net, 3, X)
        mag, report = distill_closed_form(ds, 200, "orthogonal", RngStream(1))
        replaced = replace_layer(net, 3, mag)
        out_err = np.mean((replaced.forward_raw(X) - net.forward_raw(X)) ** 2)
        # last layer is affine: its squared gain bounds how the fit error propagates
        gain = np.linalg.norm(net.layers[4].W, 2) ** 2
        assert out_err <= gain * report.fit_mse * ds.Y.shape[1] + 1e-12

    def test_result_is_fusable(self):
        net = self.net()
        X = probe(100, 4)
        mag, _ = distill_closed_form(capture(net, 3, X), 16, "orthogonal", RngStream(1))
        replaced = replace_layer(net, 3, mag)
        fused = fuse_network(replaced)
        assert fused.meta["fused_sites"] == 1
        np.testing.assert_allclose(fused.forward_raw(X), replaced.forward_raw(X), atol=1e-10)

    def test_other_parameters_untouched(self):
        net = self.net()
        mag, _ = distill_closed_form(capture(net, 3, probe(50, 4)), 8, "iid", RngStream(1))
        replaced = replace_layer(net, 3, mag)
        for i in (0, 1, 2, 4):
            np.testing.assert_array_equal(replaced.layers[i].W, net.layers[i].W)
        assert replaced.meta["replaced"] == [3]

    def test_interface_mismatch(self):
        with pytest.raises(InvalidArgument):
            replace_layer(self.net(), 3, MagLayer(np.zeros((5, 6)), np.zeros((6, 12))))

    def test_out_of_range(self):
        with pytest.raises(InvalidArgument):
            replace_layer(self.net(), 9, MagLayer(np.zeros((12, 6)), np.zeros((6, 12))))

    def test_only_dense_layers(self):
        net = sdf_network(RngStream(2), 4, width=12, mag_features=6)
        with pytest.raises(InvalidArgument):
            replace_layer(net, 3, MagLayer(np.zeros((12, 6)), np.zeros((6, 12))))
