import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.autoencoder import AutoencoderModel, compute_loss
from core.channel import ChannelPair, NoiseModel, PhaseConfig, apply_ris_link, sample_channel_batch
from core.config import SystemDims
from core.diagnostics import channel_gradient_errors, layer_gradient_errors, module_gradient_error
from core.errors import BackwardBeforeForwardError, DimensionError, NonFiniteError, OneHotError
from core.modem import bits_to_onehot, random_bits
from core.neural_net import (AdamState, BatchNorm, ComplexChannelLayer, Dense, PowerNormalization, adam_step,
                             build_mlp, finite_difference_gradient, power_normalize, relative_error, relu,
                             sigmoid, softmax_cross_entropy, stack_complex, stack_matrices, unstack_complex,
                             unstack_matrices)


class TestStacking:

    def test_vector_layout(self):
        assert_array_equal(stack_complex(np.array([1 + 2j, 3 - 4j])), [1, 3, 2, -4])

    def test_matrix_layout(self):
        A = np.array([[1 + 1j, 2], [3j, 4]])
        stacked = stack_matrices(A[None])
        assert_array_equal(stacked, [[1, 2, 0, 4, 1, 0, 3, 0]])
        assert_array_equal(unstack_matrices(stacked, 2, 2)[0], A)

    def test_inverse(self):
        z = np.array([[0.5 - 1j, 2j]])
        assert_array_equal(unstack_complex(stack_complex(z)), z)


class TestDense:

    def test_identity_weights(self):
        layer = Dense(3, 3)
        layer.W[:] = np.eye(3)
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert_allclose(layer.forward(x), x)

    def test_zero_weights_give_bias(self):
        layer = Dense(3, 2)
        layer.W[:] = 0.0
        layer.b[:] = [1.5, -2.0]
        assert_allclose(layer.forward(np.ones((5, 3))), np.tile([1.5, -2.0], (5, 1)))

    def test_matches_dot_products(self):
        rng = np.random.default_rng(1)
        layer = Dense(4, 3, rng)
        x = rng.standard_normal((2, 4))
        expected = [[sum(x[i, k] * layer.W[j, k] for k in range(4)) + layer.b[j] for j in range(3)] for i in range(2)]
        assert_allclose(layer.forward(x), expected, atol=1e-14)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            Dense(3, 2).forward(np.ones((2, 4)))

    def test_backward_needs_forward(self):
        with pytest.raises(BackwardBeforeForwardError):
            Dense(3, 2).backward(np.ones((1, 2)))

    def test_zero_and_linear_backward(self):
        rng = np.random.default_rng(2)
        layer = Dense(4, 3, rng)
        layer.forward(rng.standard_normal((5, 4)))
        assert_array_equal(layer.backward(np.zeros((5, 3))), 0.0)
        assert_array_equal(layer.grad_W, 0.0)
        g = rng.standard_normal((5, 3))
        assert_allclose(layer.backward(2.5 * g), 2.5 * layer.backward(g))

    def test_gradients(self):
        rng = np.random.default_rng(3)
        assert module_gradient_error(Dense(5, 4, rng), rng.standard_normal((6, 5)), rng) < 1e-4


class TestBatchNorm:

    def test_training_output_is_standardized(self):
        x = 100.0 * np.random.default_rng(4).standard_normal((64, 3)) + 7.0
        y = BatchNorm(3).forward(x)
        assert_allclose(y.mean(axis=0), 0.0, atol=1e-6)
        assert_allclose(y.var(axis=0), 1.0, atol=1e-6)

    def test_constant_column(self):
        x = np.column_stack([np.full(8, 3.0), np.arange(8.0)])
        assert_allclose(BatchNorm(2).forward(x)[:, 0], 0.0)

    def test_inference_is_affine(self):
        bn = BatchNorm(2)
        bn.gamma[:] = [2.0, 0.5]
        bn.beta[:] = [1.0, -1.0]
        bn.eval()
        x = np.array([[1.0, 2.0]])
        assert_allclose(bn.forward(x), [[3.0, 0.0]], atol=1e-4)

    def test_running_statistics(self):
        bn = BatchNorm(1)
        x = np.array([[1.0], [3.0]])
        bn.forward(x)
        assert_allclose(bn.running_mean, [0.2])
        assert_allclose(bn.running_var, [0.9 + 0.1 * 2.0])

    def test_training_batch_of_one(self):
        with pytest.raises(DimensionError):
            BatchNorm(2).forward(np.ones((1, 2)))

    def test_gamma_gradient_formula(self):
        rng = np.random.default_rng(5)
        bn = BatchNorm(3)
        x = rng.standard_normal((10, 3))
        bn.forward(x)
        g = rng.standard_normal((10, 3))
        bn.backward(g)
        x_hat = (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + bn.epsilon)
        assert_allclose(bn.grad_gamma, np.sum(g * x_hat, axis=0))

    def test_zero_gradient(self):
        bn = BatchNorm(3)
        bn.forward(np.random.default_rng(6).standard_normal((4, 3)))
        assert_array_equal(bn.backward(np.zeros((4, 3))), 0.0)

    @pytest.mark.parametrize("training", [True, False])
    def test_gradients(self, training):
        rng = np.random.default_rng(7)
        bn = BatchNorm(4)
        bn.gamma[:] = rng.uniform(0.5, 1.5, 4)
        bn.running_var[:] = rng.uniform(0.5, 2.0, 4)
        if not training:
            bn.eval()
        assert module_gradient_error(bn, rng.standard_normal((6, 4)), rng) < 1e-4


class TestActivations:

    def test_relu(self):
        assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_sigmoid(self):
        assert sigmoid(np.array(0.0)) == 0.5


class TestSoftmaxCrossEntropy:

    @pytest.mark.parametrize("M", [2, 4, 16])
    def test_uniform_logits(self, M):
        target = np.eye(M)[[0, M - 1]]
        loss, _ = softmax_cross_entropy(np.zeros((2, M)), target)
        assert abs(loss - np.log(M)) < 1e-12

    def test_saturated_correct(self):
        loss, _ = softmax_cross_entropy(np.array([[40.0, 0.0]]), np.array([[1.0, 0.0]]))
        assert loss < 1e-12

    def test_gradient(self):
        rng = np.random.default_rng(8)
        logits = rng.standard_normal((5, 4))
        target = np.eye(4)[rng.integers(0, 4, size=5)]
        _, grad = softmax_cross_entropy(logits, target)
        numeric = finite_difference_gradient(lambda z: softmax_cross_entropy(z, target)[0], logits)
        assert relative_error(grad, numeric) < 1e-4

    def test_malformed_target(self):
        with pytest.raises(OneHotError):
            softmax_cross_entropy(np.zeros((1, 2)), np.array([[1.0, 1.0]]))


class TestAdam:

    def test_zero_gradient_leaves_parameters(self):
        p = np.array([1.0, -2.0])
        adam_step(AdamState(), [p], [np.zeros(2)])
        assert_array_equal(p, [1.0, -2.0])

    def test_first_step_is_lr_times_sign(self):
        p = np.zeros(3)
        adam_step(AdamState(lr=2e-4), [p], [np.array([0.3, -5.0, 1e-2])])
        assert_allclose(p, [-2e-4, 2e-4, -2e-4], rtol=1e-5)

    def test_constant_gradient_moves_monotonically(self):
        p = np.array([1.0])
        state = AdamState(lr=1e-2)
        history = []
        for _ in range(50):
            adam_step(state, [p], [np.array([0.7])])
            history.append(p[0])
        assert np.all(np.diff(history) < 0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adam_step(AdamState(), [np.zeros(2)], [np.zeros(3)])


class TestPowerNormalization:

    def test_single_unit_sample(self):
        x = power_normalize(np.array([[1.0, 0.0]]), 2.0)
        assert_allclose(np.sum(np.abs(x) ** 2), 4.0)

    def test_equal_norm_samples(self):
        x_prime = np.array([[3.0, 0.0], [0.0, 3.0j], [3.0 / np.sqrt(2), 3.0 / np.sqrt(2)]])
        x = power_normalize(x_prime, 4.0)
        assert_allclose(np.sum(np.abs(x) ** 2, axis=1), 16.0)

    @pytest.mark.parametrize("mode,expected", [("paper", 16.0), ("rms", 16.0), ("sqrt", 4.0)])
    def test_batch_average_power(self, mode, expected):
        rng = np.random.default_rng(9)
        x_prime = rng.standard_normal((100, 4)) + 1j * rng.standard_normal((100, 4))
        x = power_normalize(x_prime, 4.0, mode)
        assert abs(np.mean(np.sum(np.abs(x) ** 2, axis=1)) - expected) < 1e-9

    def test_all_zero_batch(self):
        with pytest.raises(NonFiniteError):
            power_normalize(np.zeros((3, 2)), 4.0)

    def test_mode_names(self):
        assert PowerNormalization(4.0).mode == "paper"
        assert PowerNormalization(4.0, "rms").mode == "paper"
        with pytest.raises(ValueError):
            PowerNormalization(4.0, "l2")

    def test_gradients(self):
        rng = np.random.default_rng(10)
        assert module_gradient_error(PowerNormalization(4.0), rng.standard_normal((7, 8)), rng) < 1e-4


class TestChannelLayers:

    def test_identity_chain(self):
        n = 2
        pair = ChannelPair(np.eye(n)[None], np.eye(n)[None])
        x = np.array([[1.0 + 2.0j, -0.5j]])
        y = ComplexChannelLayer().forward(stack_complex(x), np.zeros((1, n)), pair, 4.0, 2)
        assert_allclose(unstack_complex(y), np.sqrt(2.0) * x)

    def test_matches_ris_link(self):
        rng = np.random.default_rng(11)
        pair = sample_channel_batch(rng, 1, 16, 2, 2)
        theta = rng.uniform(-np.pi, np.pi, size=(1, 16))
        s = np.array([1.0, -1.0])
        layer_out = ComplexChannelLayer().forward(stack_complex(s[None]), theta, pair, 4.0, 2)
        link_out = apply_ris_link(s, np.eye(2), pair.sample(0), PhaseConfig(theta[0]), 4.0, NoiseModel(1e-30), rng)
        assert_allclose(unstack_complex(layer_out)[0], link_out, atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            errors = channel_gradient_errors(rng)
            assert max(errors.values()) < 1e-4, errors

    def test_theta_shape_checked(self):
        pair = sample_channel_batch(np.random.default_rng(0), 2, 4, 2, 2)
        with pytest.raises(DimensionError):
            ComplexChannelLayer().forward(np.ones((2, 4)), np.zeros((2, 3)), pair, 4.0, 2)


def test_every_layer_passes_finite_differences():
    rng = np.random.default_rng(13)
    for _ in range(50):
        errors = layer_gradient_errors(rng)
        assert max(errors.values()) < 1e-4, errors


def test_composite_gradient_through_all_networks():
    rng = np.random.default_rng(14)
    dims = SystemDims(n_t=2, n_r=2, n_s=2, K=2, M=2)
    model = AutoencoderModel(dims, 4.0, "paper", rng, {"encoder": [6], "ris_net": [5], "decoder": [6]})
    batch = 4
    true = sample_channel_batch(rng, batch, dims.K, dims.n_t, dims.n_r)
    csi = sample_channel_batch(rng, batch, dims.K, dims.n_t, dims.n_r)
    onehot = bits_to_onehot(random_bits(rng, (batch, dims.bits_per_vector)), dims.M, dims.n_s)
    alpha = np.array([0.3, 0.7])

    def loss(_):
        return compute_loss(model.forward(onehot, true, csi, None, None).logits, onehot, alpha)[0]

    _, _, grad = compute_loss(model.forward(onehot, true, csi, None, None).logits, onehot, alpha)
    model.backward(grad)
    for net in (model.ris_net, model.encoder, model.decoder):
        first = net.layers[0]
        analytic = first.grad_W.copy()
        numeric = finite_difference_gradient(loss, first.W)
        assert relative_error(analytic, numeric) < 1e-3


def test_small_output_init_gives_near_uniform_logits():
    net = build_mlp([4, 64, 4], np.random.default_rng(2), output_init="small")
    logits = net.forward(np.random.default_rng(3).standard_normal((200, 4)))
    assert np.max(np.abs(logits)) < 0.5


def test_build_mlp_widths():
    net = build_mlp([10, 8, 6, 3], np.random.default_rng(0), output="sigmoid")
    assert net.widths == [10, 8, 6, 3]
    out = net.forward(np.random.default_rng(1).standard_normal((4, 10)))
    assert out.shape == (4, 3) and np.all((out > 0) & (out < 1))
