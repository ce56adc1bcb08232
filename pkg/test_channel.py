import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.channel import (ChannelPair, CsiModel, NoiseModel, PhaseConfig, apply_ris_link, corrupt_csi,
                          effective_channel, feasibility_bound, reflection_matrix, sample_channel_batch,
                          sample_channels)
from core.errors import ConfigError, DimensionError, PhaseRangeError
from core.numerics import frobenius_norm, hermitian
from core.streams import derive_stream


class TestSampling:

    def test_rayleigh_statistics(self):
        rng = np.random.default_rng(0)
        pair = sample_channels(rng, 25000, 4, 2)
        entries = pair.G.ravel()
        assert entries.size == 100000
        assert abs(entries.mean()) < 0.02
        assert abs(np.mean(np.abs(entries) ** 2) - 1.0) < 0.03

    def test_seeded_determinism(self):
        a = sample_channels(np.random.default_rng(5), 16, 4, 2)
        b = sample_channels(np.random.default_rng(5), 16, 4, 2)
        assert_array_equal(a.G, b.G)
        assert_array_equal(a.H, b.H)

    def test_batch_shapes(self):
        pair = sample_channel_batch(np.random.default_rng(0), 7, 16, 4, 2)
        assert pair.G.shape == (7, 16, 4) and pair.H.shape == (7, 16, 2)
        assert pair.batch_size == 7
        assert pair.sample(3).batch_size is None

    def test_derived_streams_are_independent_of_order(self):
        first = derive_stream(3, "modelbased", 5.0, 0.0, 16, 0).standard_normal(4)
        derive_stream(3, "modelbased", 10.0, 0.0, 16, 0).standard_normal(4)
        again = derive_stream(3, "modelbased", 5.0, 0.0, 16, 0).standard_normal(4)
        assert_array_equal(first, again)

    def test_mismatched_pair(self):
        with pytest.raises(DimensionError):
            ChannelPair(np.ones((4, 2)), np.ones((3, 2)))


class TestCsiError:

    def test_perfect_csi_is_exact(self):
        rng = np.random.default_rng(1)
        true = sample_channels(rng, 8, 4, 2)
        estimate = corrupt_csi(true, CsiModel(0.0), rng)
        assert_array_equal(estimate.G, true.G)
        assert_array_equal(estimate.H, true.H)

    def test_error_variance(self):
        rng = np.random.default_rng(2)
        true = sample_channels(rng, 50000, 1, 2)
        estimate = corrupt_csi(true, CsiModel(0.5), rng)
        error = (estimate.H - true.H).ravel()
        assert abs(np.mean(np.abs(error) ** 2) / 0.25 - 1.0) < 0.03

    def test_training_value_keeps_shape(self):
        rng = np.random.default_rng(3)
        true = sample_channel_batch(rng, 5, 16, 4, 2)
        estimate = corrupt_csi(true, CsiModel(0.1), rng)
        assert estimate.G.shape == true.G.shape
        assert np.all(np.isfinite(estimate.G))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ConfigError):
            CsiModel(-0.1)


class TestReflection:

    def test_zero_phases_give_identity(self):
        assert_allclose(reflection_matrix(PhaseConfig.zeros(4)), np.eye(4))

    def test_pi_phases(self):
        assert_allclose(reflection_matrix(PhaseConfig(np.full(3, np.pi))), -np.eye(3), atol=1e-15)

    def test_unit_modulus(self):
        theta = PhaseConfig.random(np.random.default_rng(0), 32)
        assert_allclose(np.abs(np.diag(reflection_matrix(theta))), 1.0, atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(PhaseRangeError):
            PhaseConfig(np.array([0.0, 4.0]))


class TestEffectiveChannel:

    def test_identity_padded(self):
        G = np.eye(4)[:, :2]
        H = np.eye(4)[:, :2]
        pair = ChannelPair(G, H)
        assert_allclose(effective_channel(pair, PhaseConfig.zeros(4)), hermitian(H) @ G)

    def test_single_element(self):
        rng = np.random.default_rng(4)
        pair = sample_channels(rng, 1, 3, 2)
        theta = PhaseConfig(np.array([0.7]))
        expected = np.exp(0.7j) * np.outer(np.conj(pair.H[0]), pair.G[0])
        assert_allclose(effective_channel(pair, theta), expected, atol=1e-14)

    def test_matches_matmul_composition(self):
        rng = np.random.default_rng(5)
        pair = sample_channels(rng, 16, 4, 2)
        theta = PhaseConfig.random(rng, 16)
        expected = hermitian(pair.H) @ reflection_matrix(theta) @ pair.G
        assert_allclose(effective_channel(pair, theta), expected, atol=1e-12)

    def test_batched_equals_per_sample(self):
        rng = np.random.default_rng(6)
        pair = sample_channel_batch(rng, 3, 8, 4, 2)
        theta = rng.uniform(-np.pi, np.pi, size=(3, 8))
        batched = effective_channel(pair, PhaseConfig(theta))
        for i in range(3):
            assert_allclose(batched[i], effective_channel(pair.sample(i), PhaseConfig(theta[i])), atol=1e-12)


class TestRisLink:

    def test_scalar_chain(self):
        pair = ChannelPair(np.ones((1, 1)), np.ones((1, 1)))
        y = apply_ris_link(np.array([0.5 - 0.5j]), np.ones((1, 1)), pair, PhaseConfig.zeros(1), 4.0,
                           NoiseModel(1e-30), np.random.default_rng(0))
        assert_allclose(y, [1.0 - 1.0j], atol=1e-12)

    def test_noiseless_matches_composition(self):
        rng = np.random.default_rng(7)
        pair = sample_channels(rng, 16, 4, 2)
        theta = PhaseConfig.random(rng, 16)
        F = np.eye(4)[:, :2]
        s = np.array([1.0, -1.0])
        y = apply_ris_link(s, F, pair, theta, 4.0, NoiseModel(1e-30), rng)
        expected = np.sqrt(2.0) * (hermitian(pair.H) @ reflection_matrix(theta) @ pair.G @ F @ s)
        assert_allclose(y, expected, atol=1e-12)

    def test_pure_noise_variance(self):
        rng = np.random.default_rng(8)
        pair = sample_channels(rng, 4, 2, 2)
        noise = NoiseModel(0.3)
        y = apply_ris_link(np.zeros((2, 50000)), np.eye(2), pair, PhaseConfig.zeros(4), 4.0, noise, rng)
        per_antenna = np.mean(np.abs(y) ** 2, axis=1)
        assert_allclose(per_antenna, 0.3, rtol=0.03)

    def test_precoder_norm_enforced(self):
        rng = np.random.default_rng(9)
        pair = sample_channels(rng, 4, 2, 2)
        with pytest.raises(DimensionError):
            apply_ris_link(np.ones(2), 2 * np.eye(2), pair, PhaseConfig.zeros(4), 4.0, NoiseModel(1.0), rng)

    def test_snr_definition(self):
        assert_allclose(NoiseModel.from_snr_db(10.0, 4.0).sigma2, 0.4)


def test_feasibility_bound_holds():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        n_t, n_r, K = (int(v) for v in rng.integers(1, 6, size=3))
        n_s = int(rng.integers(1, min(n_t, n_r) + 1))
        pair = sample_channels(rng, K, n_t, n_r)
        F = rng.standard_normal((n_t, n_s)) + 1j * rng.standard_normal((n_t, n_s))
        F *= np.sqrt(n_s) / frobenius_norm(F)
        value, bound = feasibility_bound(pair, PhaseConfig.random(rng, K), F)
        assert value <= bound + 1e-9
