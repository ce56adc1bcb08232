"""
RIS Link Simulator - Modem
Gray-labelled square QAM (BPSK for M = 2), one-hot blocks for the
autoencoder, per-stream minimum-distance detection and bit-error counting.

Bit arrays carry the streams on the last axis: ``N_s * log2(M)`` bits per
symbol vector, stream 0 first, most significant bit first inside a stream.
Any leading axes are treated as a batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, OneHotError

SUPPORTED_ORDERS = (2, 4, 16, 64)


@dataclass(frozen=True)
class Constellation:
    """``points[i]`` is the symbol whose bit label is the binary expansion of ``i``."""
    M: int
    points: np.ndarray
    bit_labels: np.ndarray

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.M))

    @property
    def average_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @property
    def min_distance(self) -> float:
        diff = np.abs(self.points[:, None] - self.points[None, :])
        return float(np.min(diff[~np.eye(self.M, dtype=bool)]))


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def _label_matrix(M: int) -> np.ndarray:
    k = int(np.log2(M))
    idx = np.arange(M)
    return ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)


def _pam_levels(bits_value: np.ndarray, levels: int) -> np.ndarray:
    # Gray label -> amplitude; label 0 sits at the largest positive level
    position = _gray_to_binary(bits_value)
    return (levels - 1) - 2.0 * position


def make_constellation(M: int) -> Constellation:
    """Unit-average-energy Gray QAM; ``M = 2`` gives BPSK ``{+1, -1}``."""
    if M not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported modulation order M={M}; choose one of {SUPPORTED_ORDERS}")
    idx = np.arange(M)
    if M == 2:
        points = _pam_levels(idx, 2).astype(np.complex128)
    else:
        half = int(np.log2(M)) // 2
        side = 2 ** half
        in_phase = _pam_levels(idx >> half, side)
        quadrature = _pam_levels(idx & (side - 1), side)
        points = in_phase + 1j * quadrature
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    return Constellation(M=M, points=points, bit_labels=_label_matrix(M))


def as_bits(bits) -> np.ndarray:
    """Accept ``'0110'``, a list of ints or an array; return a uint8 array of 0/1."""
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits]
    arr = np.asarray(bits)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ConfigError("bit arrays may only contain 0 and 1")
    return arr.astype(np.uint8)


def _bits_per_symbol(M: int) -> int:
    k = int(round(np.log2(M)))
    if M < 2 or 2 ** k != M:
        raise ConfigError(f"M must be a power of two >= 2, got {M}")
    return k


def bits_to_indices(bits, M: int, n_s: int) -> np.ndarray:
    """Integer value of each stream's ``log2(M)``-bit group."""
    k = _bits_per_symbol(M)
    bits = as_bits(bits)
    if bits.ndim == 0 or bits.shape[-1] != n_s * k:
        raise DimensionError(f"expected {n_s * k} bits per symbol vector (N_s={n_s}, M={M}), got {bits.shape}")
    groups = bits.reshape(bits.shape[:-1] + (n_s, k)).astype(np.int64)
    weights = 1 << np.arange(k - 1, -1, -1)
    return groups @ weights


def indices_to_bits(indices, M: int) -> np.ndarray:
    """Inverse of :func:`bits_to_indices`."""
    k = _bits_per_symbol(M)
    indices = np.asarray(indices, dtype=np.int64)
    bits = (indices[..., None] >> np.arange(k - 1, -1, -1)) & 1
    return bits.reshape(indices.shape[:-1] + (indices.shape[-1] * k,)).astype(np.uint8)


def bits_to_onehot(bits, M: int, n_s: int) -> np.ndarray:
    """One-hot block of shape ``(..., N_s, M)``."""
    indices = bits_to_indices(bits, M, n_s)
    return np.eye(M)[indices]


def onehot_indices(block) -> np.ndarray:
    """Hot index per stream after checking the block is exactly one-hot."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim < 2:
        raise OneHotError(f"one-hot block needs a stream axis and a class axis, got {block.shape}")
    if not np.all((block == 0.0) | (block == 1.0)):
        raise OneHotError("one-hot entries must be exactly 0 or 1")
    if not np.all(block.sum(axis=-1) == 1.0):
        raise OneHotError("every stream must have exactly one hot entry")
    return np.argmax(block, axis=-1)


def onehot_to_bits(block) -> np.ndarray:
    block = np.asarray(block)
    _bits_per_symbol(block.shape[-1])
    return indices_to_bits(onehot_indices(block), block.shape[-1])


def modulate(bits, c: Constellation, n_s: int) -> np.ndarray:
    """Symbol vector(s) ``s`` of shape ``(..., N_s)``."""
    return c.points[bits_to_indices(bits, c.M, n_s)]


def detect_indices(s_hat, c: Constellation) -> np.ndarray:
    """Nearest constellation index per entry; exact ties go to the lowest index."""
    s_hat = np.asarray(s_hat, dtype=np.complex128)
    distances = np.abs(s_hat[..., None] - c.points) ** 2
    return np.argmin(distances, axis=-1)


def demodulate_min_distance(s_hat, c: Constellation) -> np.ndarray:
    """Hard bits from per-stream nearest-neighbour decisions."""
    return indices_to_bits(detect_indices(s_hat, c), c.M)


def count_bit_errors(a, b) -> int:
    """Hamming distance between two equally long bit arrays."""
    a = as_bits(a)
    b = as_bits(b)
    if a.shape != b.shape:
        raise DimensionError(f"bit arrays differ in shape: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.uint8)
