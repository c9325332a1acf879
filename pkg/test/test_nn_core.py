import math

import numpy as np
import pytest

from app.core.errors import ShapeError
from app.domain.masks import PruneMask, prunable_set
from app.nn.functional import cross_entropy_loss, softmax
from app.nn.gradcheck import gradient_check
from app.nn.layers import Conv2d, Flatten, Linear, MaxPool2d, ParameterRole, ReLU
from app.nn.models import build_lenet
from app.nn.network import (
    Gradients,
    NetworkGraph,
    ParameterEntry,
    ParameterStore,
    backward,
    forward,
    predict_proba,
)


def _linear_net(weight, bias):
    layer = Linear("fc", in_features=weight.shape[1], out_features=weight.shape[0])
    store = ParameterStore([
        ParameterEntry("fc.weight", np.asarray(weight, dtype=np.float32), ParameterRole.WEIGHT, "fc"),
        ParameterEntry("fc.bias", np.asarray(bias, dtype=np.float32), ParameterRole.BIAS, "fc"),
    ])
    return NetworkGraph([layer], store, (weight.shape[1],))


def _naive_forward(net, batch):
    """Scalar-window reference: explicit loops over output positions."""
    x = batch.astype(np.float64)
    params = {k: v.astype(np.float64) for k, v in net.parameters.as_dict().items()}
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            w, b = params[layer.weight_name], params[layer.bias_name]
            k = layer.kernel_size
            n, _, h, wd = x.shape
            out = np.zeros((n, layer.out_channels, h - k + 1, wd - k + 1))
            for s in range(n):
                for o in range(layer.out_channels):
                    for i in range(h - k + 1):
                        for j in range(wd - k + 1):
                            out[s, o, i, j] = np.sum(x[s, :, i:i + k, j:j + k] * w[o]) + b[o]
            x = out
        elif isinstance(layer, MaxPool2d):
            n, c, h, wd = x.shape
            out = np.zeros((n, c, h // 2, wd // 2))
            for i in range(h // 2):
                for j in range(wd // 2):
                    out[:, :, i, j] = x[:, :, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(2, 3))
            x = out
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Linear):
            x = x @ params[layer.weight_name].T + params[layer.bias_name]
    return x


class TestForward:
    def test_zero_parameters_give_zero_logits(self, tiny_net, tiny_batch):
        flat = np.zeros(tiny_net.parameters.size, dtype=np.float32)
        tiny_net.parameters.assign_flat(flat)
        np.testing.assert_array_equal(forward(tiny_net, tiny_batch[0]), 0.0)

    def test_single_linear_unit(self):
        net = _linear_net(np.array([[2.0]]), np.array([1.0]))
        np.testing.assert_allclose(forward(net, np.array([[3.0]])), [[7.0]])

    def test_lenet_s_matches_naive_loops(self):
        net = build_lenet("lenet-s", seed=1)
        batch = np.random.default_rng(2).random((2, 3, 32, 32)).astype(np.float32)
        fast = forward(net, batch).astype(np.float64)
        reference = _naive_forward(net, batch)
        np.testing.assert_allclose(fast, reference, rtol=1e-5, atol=1e-5)

    def test_deterministic(self, tiny_net, tiny_batch):
        np.testing.assert_array_equal(forward(tiny_net, tiny_batch[0]), forward(tiny_net, tiny_batch[0]))

    def test_shape_mismatch_rejected(self, tiny_net):
        with pytest.raises(ShapeError, match="does not match network input"):
            forward(tiny_net, np.zeros((2, 1, 9, 9), dtype=np.float32))

    def test_empty_batch_rejected(self, tiny_net):
        with pytest.raises(ShapeError):
            forward(tiny_net, np.zeros((0, 1, 8, 8), dtype=np.float32))

    def test_lenet_intermediate_shapes(self):
        net = build_lenet("lenet-s")
        spatial = [shape[1:] for shape, layer in zip(net.shapes[1:], net.layers)
                   if isinstance(layer, (Conv2d, MaxPool2d))]
        assert spatial == [(28, 28), (14, 14), (10, 10), (5, 5)]

    def test_maxpool_tie_routes_gradient_to_first_element(self):
        pool = MaxPool2d("pool")
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        y, cache = pool.forward(x, {})
        grad_x, _ = pool.backward(np.ones_like(y), cache, {})
        np.testing.assert_array_equal(grad_x[0, 0], [[1, 0], [0, 0]])

    def test_predict_proba_batches(self, tiny_net, tiny_dataset):
        probs = predict_proba(tiny_net, tiny_dataset.images, batch_size=5)
        assert probs.shape == (24, 3)
        np.testing.assert_allclose(probs, softmax(forward(tiny_net, tiny_dataset.images)), rtol=1e-5, atol=1e-7)


class TestSoftmaxAndLoss:
    def test_symmetric_logits(self):
        np.testing.assert_allclose(softmax(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_large_logits_do_not_overflow(self):
        np.testing.assert_allclose(softmax(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])

    def test_closed_form(self):
        np.testing.assert_allclose(softmax(np.array([[0.0, math.log(3.0)]])), [[0.25, 0.75]])

    def test_rows_sum_to_one(self):
        logits = np.random.default_rng(0).normal(scale=20, size=(50, 10)).astype(np.float32)
        np.testing.assert_allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-6)

    def test_uniform_logits_loss_is_ln_k(self):
        assert cross_entropy_loss(np.zeros((4, 10)), np.arange(4)) == pytest.approx(math.log(10), abs=1e-9)

    def test_confident_correct_loss_near_zero(self):
        logits = np.array([[100.0, 0.0, 0.0]])
        assert cross_entropy_loss(logits, np.array([0])) < 1e-30

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(6, 5))
        labels = rng.integers(0, 5, size=6)
        direct = np.mean([-math.log(math.exp(row[y]) / np.exp(row).sum()) for row, y in zip(logits, labels)])
        assert cross_entropy_loss(logits, labels) == pytest.approx(direct, rel=1e-12)

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ShapeError):
            cross_entropy_loss(np.zeros((2, 3)), np.array([0, 3]))


class TestBackward:
    def test_zero_input_linear_gradients(self):
        bias = np.array([0.5, -0.5, 1.0])
        net = _linear_net(np.ones((3, 4)), bias)
        labels = np.array([0, 2])
        _, grads = backward(net, np.zeros((2, 4), dtype=np.float32), labels)
        np.testing.assert_array_equal(grads["fc.weight"], 0.0)
        onehot_mean = np.eye(3)[labels].mean(axis=0)
        np.testing.assert_allclose(grads["fc.bias"], softmax(bias[None])[0] - onehot_mean, rtol=1e-6)

    def test_gradients_mirror_store(self, tiny_net, tiny_batch):
        _, grads = backward(tiny_net, *tiny_batch)
        assert isinstance(grads, Gradients)
        assert grads.mirrors(tiny_net.parameters)

    def test_every_layer_kind_64_bit(self, tiny_net, tiny_batch):
        net = tiny_net.astype(np.float64)
        indices = np.arange(net.parameters.size)
        result = gradient_check(net, tiny_batch[0], tiny_batch[1], indices, step=1e-4)
        assert result.checked >= 100
        assert result.max_rel_error < 1e-6

    def test_every_layer_kind_32_bit(self, tiny_net, tiny_batch):
        indices = np.arange(tiny_net.parameters.size)
        result = gradient_check(tiny_net, tiny_batch[0], tiny_batch[1], indices, step=1e-3)
        assert result.checked > 0
        assert result.max_rel_error < 1e-3

    def test_lenet_s_sample_64_bit(self):
        net = build_lenet("lenet-s", seed=7, dtype=np.float64)
        rng = np.random.default_rng(8)
        batch = rng.random((2, 3, 32, 32))
        labels = np.array([3, 8])
        per_entry = [net.parameters.offset(e.name) + rng.integers(0, e.tensor.size, size=40)
                     for e in net.parameters]
        result = gradient_check(net, batch, labels, np.concatenate(per_entry), step=1e-4)
        assert result.checked >= 200
        assert result.max_rel_error < 1e-6

    def test_masked_gradient_is_zero(self, tiny_net, tiny_batch):
        prunable = prunable_set(tiny_net)
        bits = np.ones(prunable.size, dtype=bool)
        bits[::2] = False
        tiny_net.mask = PruneMask(bits, prunable)
        _, grads = backward(tiny_net, *tiny_batch)
        for name, keep in tiny_net.keep_arrays().items():
            assert np.all(grads[name][keep == 0] == 0)
