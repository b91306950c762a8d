import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import boundvol as bv
from boundvol import network as nn
from boundvol.layers import LayerSpec, ShapeMismatchError

from conftest import random_conv_net, random_dense_net


def dense(i, o, act="none"):
    return LayerSpec("dense", in_units=i, out_units=o, activation=act)


class TestBuild:
    def test_shapes_allocated(self):
        net = bv.build_network([dense(2, 2, "relu"), dense(2, 2, "softmax")])
        assert net.weights[0].shape == (2, 2)
        assert net.weights[1].shape == (2, 2)
        assert all(np.all(w == 0) for w in net.weights)

    def test_mnist_conv_preset_shapes(self):
        from boundvol.cli import ARCH_PRESETS

        arch = ARCH_PRESETS["mnist_conv"]
        net = bv.build_network([LayerSpec(**d) for d in arch["layers"]],
                               input_shape=tuple(arch["input_shape"]))
        assert net.input_shape == (28, 28, 1)
        assert net.n_outputs == 10
        # 28 -> pool 14 -> pool 7 with 32 channels before flatten
        assert net.layer_shapes[3] == (7, 7, 32)

    def test_shape_mismatch_names_layers(self):
        with pytest.raises(ShapeMismatchError, match="layers 0 -> 1"):
            bv.build_network([dense(3, 2), dense(4, 2, "softmax")])

    def test_softmax_position_enforced(self):
        with pytest.raises(ValueError):
            bv.build_network([dense(2, 2, "softmax"), dense(2, 2, "softmax")])
        with pytest.raises(ValueError):
            bv.build_network([dense(2, 2, "relu"), dense(2, 2, "relu")])


class TestHeInit:
    def test_sample_variance_in_band(self):
        net = bv.build_network([dense(100, 10, "softmax")])
        net = bv.init_he_normal(net, 42)
        var = net.weights[0].var()
        # 3 sigma band around 2/100 for 1000 samples of Normal(0, 0.02)
        sigma = 0.02 * math.sqrt(2 / 1000)
        assert 0.02 - 3 * sigma < var < 0.02 + 3 * sigma
        assert np.all(net.biases[0] == 0)

    def test_deterministic(self):
        net = bv.build_network([dense(5, 3, "softmax")])
        a = bv.init_he_normal(net, 7)
        b = bv.init_he_normal(net, 7)
        assert np.array_equal(a.weights[0], b.weights[0])

    def test_fan_in_one(self):
        net = bv.build_network([dense(1, 50000, "softmax")])
        net = bv.init_he_normal(net, 0)
        assert net.weights[0].std() == pytest.approx(math.sqrt(2), rel=0.02)


class TestForward:
    def test_uniform_softmax_at_zero_weights(self):
        net = bv.build_network([dense(4, 10, "softmax")])
        _, probs = bv.forward(net, np.zeros(4))
        assert np.allclose(probs, 0.1, atol=1e-15)

    def test_hand_computed_two_layer(self):
        # identity first layer (no activation), identity second layer
        net = bv.build_network([dense(2, 2), dense(2, 2, "softmax")])
        net.weights[0] = np.eye(2)
        net.weights[1] = np.eye(2)
        logits, probs = bv.forward(net, np.array([1.0, -1.0]))
        expect = np.exp([1.0, -1.0]) / np.exp([1.0, -1.0]).sum()
        assert np.allclose(probs, expect, atol=1e-15)
        assert np.allclose(logits, [1.0, -1.0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 2**32 - 1))
    def test_probs_sum_to_one(self, net_seed, x_seed):
        rng = np.random.default_rng(net_seed)
        net = random_dense_net(rng)
        x = np.random.default_rng(x_seed).normal(size=net.n_inputs)
        _, probs = bv.forward(net, x)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(probs > 0)

    def test_single_precision_tolerance(self):
        rng = np.random.default_rng(3)
        net = random_dense_net(rng, precision="single")
        _, probs = bv.forward(net, rng.normal(size=net.n_inputs).astype(np.float32))
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_mask_outside_train_mode_rejected(self):
        net = bv.build_network([dense(2, 2), dense(2, 2, "softmax")])
        with pytest.raises(ValueError):
            bv.forward(net, np.zeros(2), train_mode=False, dropout_mask=np.ones((2, 2)))

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_overflow_flagged(self):
        net = bv.build_network([dense(2, 2, "softmax")], "single")
        net.weights[0] = np.full((2, 2), 1e30, dtype=np.float32)
        with pytest.raises(nn.NumericOverflowError):
            bv.forward(net, np.full(2, 1e30, dtype=np.float32))


class TestPredict:
    def test_singleton(self):
        net = bv.build_network([dense(3, 3, "softmax")])
        net.biases[0] = np.array([0.0, 2.0, 0.0])
        assert bv.predict(net, np.zeros(3)) == {1}

    def test_tie_set(self):
        net = bv.build_network([dense(2, 2, "softmax")])
        assert bv.predict(net, np.zeros(2)) == {0, 1}

    def test_zero_net_full_set(self):
        net = bv.build_network([dense(4, 10, "softmax")])
        assert bv.predict(net, np.ones(4)) == set(range(10))


class TestLossAndGrad:
    def test_uniform_loss_is_log_m(self):
        net = bv.build_network([dense(4, 10, "softmax")])
        loss, grad, meta = bv.loss_and_input_grad(net, np.zeros(4), np.eye(10)[3])
        assert loss == pytest.approx(math.log(10), abs=1e-12)
        assert not meta["clamped"]

    def test_zero_weight_grad_is_zero(self):
        net = bv.build_network([dense(4, 3, "softmax")])
        _, grad, _ = bv.loss_and_input_grad(net, np.ones(4), np.eye(3)[0])
        assert np.all(grad == 0)

    def test_input_grad_finite_differences(self):
        rng = np.random.default_rng(11)
        h = 1e-6
        worst = 0.0
        for _ in range(100):
            net = random_dense_net(rng)
            x = rng.random(net.n_inputs)
            y = np.eye(net.n_outputs)[rng.integers(net.n_outputs)]
            _, g, _ = bv.loss_and_input_grad(net, x, y)
            for i in range(net.n_inputs):
                e = np.zeros(net.n_inputs)
                e[i] = h
                num = (nn.backprop(net, x + e, y)[0] - nn.backprop(net, x - e, y)[0]) / (2 * h)
                if abs(num) > 1e-4:
                    worst = max(worst, abs(num - g[i]) / abs(num))
        assert worst <= 1e-5

    def test_param_grad_finite_differences(self):
        rng = np.random.default_rng(12)
        h = 1e-6
        for _ in range(20):
            net = random_dense_net(rng)
            x = rng.random(net.n_inputs)
            y = np.eye(net.n_outputs)[rng.integers(net.n_outputs)]
            _, dws, dbs, _, _ = nn.backprop(net, x, y)
            for li in range(len(net.specs)):
                w = net.weights[li]
                idx = tuple(rng.integers(s) for s in w.shape)
                w[idx] += h
                up = nn.backprop(net, x, y)[0]
                w[idx] -= 2 * h
                dn = nn.backprop(net, x, y)[0]
                w[idx] += h
                num = (up - dn) / (2 * h)
                if abs(num) > 1e-4:
                    assert dws[li][idx] == pytest.approx(num, rel=1e-5)

    def test_clamp_flagged_on_saturation(self):
        net = bv.build_network([dense(2, 2, "softmax")])
        net.weights[0] = np.array([[200.0, -200.0], [0.0, 0.0]])
        _, _, meta = bv.loss_and_input_grad(net, np.array([1.0, 0.0]), np.eye(2)[1])
        assert meta["clamped"]


class TestPiecewiseLinearity:
    def test_relu_logits_locally_linear(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            net = random_dense_net(rng)
            if any(s.activation == "tanh" for s in net.specs):
                continue
            x = rng.normal(size=net.n_inputs)
            d = rng.normal(size=net.n_inputs)
            ts = np.array([0.0, 1e-7, 2e-7])
            logits = np.array([bv.forward(net, x + t * d)[0] for t in ts])
            # midpoint must equal the average of the endpoints on a linear piece
            assert np.allclose(logits[1], (logits[0] + logits[2]) / 2, atol=1e-9)


class TestConvNets:
    def test_input_grad_finite_differences(self):
        rng = np.random.default_rng(31)
        h = 1e-6
        for _ in range(10):
            net = random_conv_net(rng)
            x = rng.random((6, 6, 1))
            y = np.eye(3)[rng.integers(3)]
            _, g, _ = bv.loss_and_input_grad(net, x, y)
            for _ in range(10):
                idx = tuple(rng.integers(s) for s in x.shape)
                e = np.zeros_like(x)
                e[idx] = h
                num = (nn.backprop(net, x + e, y)[0] - nn.backprop(net, x - e, y)[0]) / (2 * h)
                if abs(num) > 1e-4:
                    assert g[idx] == pytest.approx(num, rel=1e-5)

    def test_conv_param_grad_finite_differences(self):
        rng = np.random.default_rng(32)
        h = 1e-6
        for _ in range(5):
            net = random_conv_net(rng)
            x = rng.random((6, 6, 1))
            y = np.eye(3)[rng.integers(3)]
            _, dws, dbs, _, _ = nn.backprop(net, x, y)
            k = net.weights[0]
            for _ in range(10):
                idx = tuple(rng.integers(s) for s in k.shape)
                k[idx] += h
                up = nn.backprop(net, x, y)[0]
                k[idx] -= 2 * h
                dn = nn.backprop(net, x, y)[0]
                k[idx] += h
                num = (up - dn) / (2 * h)
                if abs(num) > 1e-4:
                    assert dws[0][idx] == pytest.approx(num, rel=1e-5)
