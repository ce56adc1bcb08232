import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import ConfigError, DimensionError, OneHotError
from core.modem import (bits_to_onehot, count_bit_errors, demodulate_min_distance, make_constellation,
                        modulate, onehot_to_bits, random_bits)


class TestConstellation:

    def test_bpsk(self):
        c = make_constellation(2)
        assert_allclose(c.points, [1.0, -1.0])
        assert_array_equal(c.bit_labels.ravel(), [0, 1])

    def test_qpsk(self):
        c = make_constellation(4)
        expected = {complex(a, b) / np.sqrt(2) for a in (1, -1) for b in (1, -1)}
        for point in c.points:
            assert min(abs(point - e) for e in expected) < 1e-12

    @pytest.mark.parametrize("M", [2, 4, 16, 64])
    def test_unit_average_energy(self, M):
        assert abs(make_constellation(M).average_energy - 1.0) < 1e-12

    @pytest.mark.parametrize("M", [4, 16, 64])
    def test_gray_neighbours_differ_in_one_bit(self, M):
        c = make_constellation(M)
        d_min = c.min_distance
        for i in range(M):
            distances = np.abs(c.points - c.points[i])
            for j in np.flatnonzero(np.abs(distances - d_min) < 1e-9):
                assert np.sum(c.bit_labels[i] != c.bit_labels[j]) == 1

    def test_unsupported_order(self):
        with pytest.raises(ConfigError):
            make_constellation(8)


class TestOneHot:

    def test_all_zero_bits(self):
        assert_array_equal(bits_to_onehot("00", 2, 2), [[1, 0], [1, 0]])

    def test_second_stream_hot_at_one(self):
        assert_array_equal(bits_to_onehot("01", 2, 2), [[1, 0], [0, 1]])

    def test_qpsk_groups(self):
        assert_array_equal(bits_to_onehot("0110", 4, 2), [[0, 1, 0, 0], [0, 0, 1, 0]])

    def test_inverse(self):
        assert_array_equal(onehot_to_bits(np.array([[1, 0], [1, 0]])), [0, 0])
        assert_array_equal(onehot_to_bits(np.array([[1, 0], [0, 1]])), [0, 1])

    def test_batched_inverse(self):
        bits = random_bits(np.random.default_rng(0), (50, 8))
        assert_array_equal(onehot_to_bits(bits_to_onehot(bits, 16, 2)), bits)

    @pytest.mark.parametrize("block", [
        [[1, 1], [1, 0]],
        [[0, 0], [1, 0]],
        [[0.5, 0.5], [1, 0]],
    ])
    def test_malformed_block(self, block):
        with pytest.raises(OneHotError):
            onehot_to_bits(np.array(block, dtype=float))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            bits_to_onehot("011", 2, 2)


class TestModulation:

    def test_bpsk_mapping(self):
        assert_allclose(modulate("01", make_constellation(2), 2), [1.0, -1.0])

    def test_average_symbol_energy(self):
        c = make_constellation(16)
        bits = random_bits(np.random.default_rng(1), (50000, 8))
        s = modulate(bits, c, 2)
        assert abs(np.mean(np.abs(s) ** 2) - 1.0) < 0.02

    def test_deterministic(self):
        c = make_constellation(4)
        assert_array_equal(modulate("1001", c, 2), modulate("1001", c, 2))

    @pytest.mark.parametrize("M", [2, 4, 16, 64])
    def test_noiseless_round_trip(self, M):
        c = make_constellation(M)
        bits = random_bits(np.random.default_rng(M), (200, 2 * c.bits_per_symbol))
        assert_array_equal(demodulate_min_distance(modulate(bits, c, 2), c), bits)

    def test_bpsk_small_positive_decides_zero(self):
        assert_array_equal(demodulate_min_distance(np.array([0.1]), make_constellation(2)), [0])

    @pytest.mark.parametrize("M", [4, 16])
    def test_perturbation_below_half_distance(self, M):
        c = make_constellation(M)
        rng = np.random.default_rng(2)
        radius = 0.49 * c.min_distance * rng.uniform(0, 1, size=(M, 100))
        angle = rng.uniform(-np.pi, np.pi, size=(M, 100))
        s_hat = c.points[:, None] + radius * np.exp(1j * angle)
        bits = demodulate_min_distance(s_hat, c).reshape(M, 100, -1)
        assert_array_equal(bits, np.broadcast_to(c.bit_labels[:, None, :], bits.shape))


class TestBitErrors:

    def test_identical(self):
        assert count_bit_errors("0110", "0110") == 0

    def test_complement(self):
        assert count_bit_errors("0000", "1111") == 4

    def test_partial(self):
        assert count_bit_errors("0110", "0011") == 2

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            count_bit_errors("01", "011")
