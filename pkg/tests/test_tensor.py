"""Tests for the tape, the layer stack and input normalisation."""

import numpy as np
import pytest

from src.lowpass.activations import af_init
from src.lowpass.errors import ShapeMismatch, TapeError
from src.lowpass.layers import (
    ActivationLayer, Conv2dLayer, FlattenLayer, LinearLayer, MaxPool2dLayer,
    build_network, channel_mean, forward, parameters, zero_center_normalize,
)
from src.lowpass.tensor import Tensor, backward, no_grad, softmax_cross_entropy


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestForward:

    def test_identity_linear(self, rng):
        layer = LinearLayer(2, 2, rng)
        layer.params["weight"].data = np.eye(2)
        out = forward([layer], Tensor([[1.0, 2.0]]))
        assert np.array_equal(out.data, [[1.0, 2.0]])

    def test_relu_layer(self):
        out = forward([ActivationLayer(af_init("relu"))], Tensor([-1.0, 3.0]))
        assert np.array_equal(out.data, [0.0, 3.0])

    def test_cnn3_logits(self, rng):
        network = build_network("cnn3", af_init("relu"))
        out = forward(network, Tensor(rng.random((1, 1, 28, 28))))
        assert out.shape == (1, 10)

    def test_cnn3_fc2_has_two_unit_layer(self):
        network = build_network("cnn3_fc2", af_init("relu"))
        assert network[-2].hyper["out_features"] == 2
        assert network[-1].hyper == {"in_features": 2, "out_features": 10}

    def test_shape_mismatch_names_layer(self, rng):
        network = build_network("cnn3", af_init("relu"))
        with pytest.raises(ShapeMismatch, match="Layer 0") as e:
            forward(network, Tensor(rng.random((1, 3, 28, 28))))
        assert e.value.layer_index == 0
        assert e.value.actual == (1, 3, 28, 28)

    def test_same_seed_same_weights(self):
        a = parameters(build_network("cnn3", af_init("relu"), seed=3))
        b = parameters(build_network("cnn3", af_init("relu"), seed=3))
        assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


class TestBackward:

    def test_linear_gradient(self):
        w = Tensor([0.5, -1.0, 2.0], requires_grad=True)
        loss = (w * Tensor([1.0, 2.0, 3.0])).sum()
        backward(loss)
        assert np.array_equal(w.grad, [1.0, 2.0, 3.0])

    def test_softmax_cross_entropy_gradient(self):
        logits = Tensor([[0.0, 0.0]], requires_grad=True)
        backward(softmax_cross_entropy(logits, np.array([0])))
        assert np.allclose(logits.grad, [[-0.5, 0.5]])

    def test_no_tape(self):
        with pytest.raises(TapeError, match="no recorded tape"):
            backward(Tensor(1.0, requires_grad=True))

    def test_non_scalar_loss(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(TapeError, match="scalar"):
            backward(w * 2.0)

    def test_no_grad_records_nothing(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            out = (w * 3.0).sum()
        assert out.creator is None
        assert not out.requires_grad

    def test_shared_input_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        backward((x * x).sum())
        assert np.allclose(x.grad, [4.0])

    @pytest.mark.parametrize("kind, scale", [("tanh", 1.0), ("lp_relu2", 4.0)])
    def test_conv_net_matches_finite_differences(self, rng, kind, scale):
        network = [
            Conv2dLayer(1, 4, 3, rng, padding=1),
            ActivationLayer(af_init(kind)),
            MaxPool2dLayer(2),
            FlattenLayer(),
            LinearLayer(16, 5, rng),
        ]
        x = scale * rng.standard_normal((2, 1, 4, 4))
        labels = np.array([0, 3])

        def loss_value():
            with no_grad():
                return softmax_cross_entropy(forward(network, Tensor(x)), labels).item()

        backward(softmax_cross_entropy(forward(network, Tensor(x)), labels))
        entries = [(t, j) for t in parameters(network) for j in range(t.data.size)]
        chosen = set(rng.choice(len(entries), size=100, replace=False).tolist())
        # every learnable activation parameter is always checked
        chosen |= {i for i, (t, _) in enumerate(entries) if t.data.ndim == 0}
        h = 1e-6
        for i in sorted(chosen):
            t, j = entries[i]
            flat = t.data.reshape(-1)
            original = flat[j]
            flat[j] = original + h
            up = loss_value()
            flat[j] = original - h
            down = loss_value()
            flat[j] = original
            assert t.grad.reshape(-1)[j] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-7)


class TestNormalize:

    def test_subtracts_mean(self):
        assert np.array_equal(zero_center_normalize(np.array([[1.0, 3.0]]), np.array([2.0])), [[-1.0, 1.0]])

    def test_train_split_mean_is_zero(self, rng):
        images = rng.random((20, 3, 5, 5))
        normalised = zero_center_normalize(images, channel_mean(images))
        assert np.allclose(channel_mean(normalised), 0.0, atol=1e-6)

    def test_keeps_pixel_order(self, rng):
        images = rng.random((4, 1, 6, 6))
        shifted = zero_center_normalize(images, np.array([0.3]))
        assert np.array_equal(np.argsort(images.ravel()), np.argsort(shifted.ravel()))

    def test_mean_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch, match="per-channel mean"):
            zero_center_normalize(rng.random((2, 3, 4, 4)), np.zeros(2))
