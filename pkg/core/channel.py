"""
RIS Link Simulator - Channel Models
Rayleigh fading for the transmitter->RIS and RIS->receiver hops, the
additive CSI error model, AWGN, and the physical RIS link

    y = sqrt(P / N_s) H^H Theta G F s + n

The direct transmitter->receiver link is blocked and never modelled.
Channel matrices may carry a leading batch axis (one realization per
sample); every operation here broadcasts over it.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, PhaseRangeError
from .numerics import frobenius_norm, hermitian, matmul

PHASE_TOL = 1e-12
PRECODER_NORM_TOL = 1e-9


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian entries with the given variance."""
    scale = np.sqrt(variance / 2.0)
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return scale * (real + 1j * imag)


@dataclass(frozen=True)
class PhaseConfig:
    """RIS phase shifts ``theta`` in [-pi, pi] (shape ``(K,)`` or ``(B, K)``)."""
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim not in (1, 2):
            raise DimensionError(f"theta must be (K,) or (B, K), got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise PhaseRangeError("theta contains NaN or Inf")
        if np.any(np.abs(theta) > np.pi + PHASE_TOL):
            raise PhaseRangeError(f"phase shifts must lie in [-pi, pi], max |theta| = {np.max(np.abs(theta))}")
        object.__setattr__(self, "theta", theta)

    @property
    def K(self) -> int:
        return self.theta.shape[-1]

    @property
    def coefficients(self) -> np.ndarray:
        """Unit-modulus reflection coefficients ``e^{j theta_k}``."""
        return np.exp(1j * self.theta)

    @classmethod
    def zeros(cls, K: int) -> "PhaseConfig":
        return cls(np.zeros(K))

    @classmethod
    def random(cls, rng: np.random.Generator, K: int) -> "PhaseConfig":
        return cls(rng.uniform(-np.pi, np.pi, size=K))


@dataclass(frozen=True)
class ChannelPair:
    """Transmitter->RIS channel ``G`` (K x N_t) and RIS->receiver channel ``H`` (K x N_r)."""
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=np.complex128)
        H = np.asarray(self.H, dtype=np.complex128)
        if G.ndim != H.ndim or G.ndim not in (2, 3):
            raise DimensionError(f"G and H must both be 2-D or both 3-D, got {G.shape} and {H.shape}")
        if G.shape[:-1] != H.shape[:-1]:
            raise DimensionError(f"G and H disagree on the RIS dimension: {G.shape} vs {H.shape}")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)

    @property
    def K(self) -> int:
        return self.G.shape[-2]

    @property
    def n_t(self) -> int:
        return self.G.shape[-1]

    @property
    def n_r(self) -> int:
        return self.H.shape[-1]

    @property
    def batch_size(self) -> Optional[int]:
        return self.G.shape[0] if self.G.ndim == 3 else None

    def check_dims(self, K: int, n_t: int, n_r: int):
        if (self.K, self.n_t, self.n_r) != (K, n_t, n_r):
            raise DimensionError(
                f"channel is K={self.K}, N_t={self.n_t}, N_r={self.n_r}; "
                f"expected K={K}, N_t={n_t}, N_r={n_r}"
            )

    def sample(self, index: int) -> "ChannelPair":
        """One realization out of a batched pair."""
        return ChannelPair(self.G[index], self.H[index])


@dataclass(frozen=True)
class CsiModel:
    """Additive estimation error ``G_hat = G + G_e``, ``H_hat = H + H_e``."""
    sigma_e: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sigma_e) or self.sigma_e < 0:
            raise ConfigError(f"sigma_e must be finite and non-negative, got {self.sigma_e}")


@dataclass(frozen=True)
class NoiseModel:
    """Per-receive-antenna complex noise variance ``sigma2``."""
    sigma2: float

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ConfigError(f"noise variance must be positive, got {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float, P: float) -> "NoiseModel":
        """SNR is the total transmit power over the per-antenna noise power."""
        return cls(P / 10.0 ** (snr_db / 10.0))

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return complex_gaussian(rng, shape, self.sigma2)


def sample_channels(rng: np.random.Generator, K: int, n_t: int, n_r: int) -> ChannelPair:
    """One i.i.d. Rayleigh realization of ``(G, H)``."""
    if min(K, n_t, n_r) < 1:
        raise DimensionError(f"K, N_t, N_r must be >= 1, got {K}, {n_t}, {n_r}")
    G = complex_gaussian(rng, (K, n_t))
    H = complex_gaussian(rng, (K, n_r))
    return ChannelPair(G, H)


def sample_channel_batch(rng: np.random.Generator, batch: int, K: int, n_t: int, n_r: int) -> ChannelPair:
    """``batch`` independent realizations stacked on axis 0."""
    if min(batch, K, n_t, n_r) < 1:
        raise DimensionError(f"batch, K, N_t, N_r must be >= 1, got {batch}, {K}, {n_t}, {n_r}")
    G = complex_gaussian(rng, (batch, K, n_t))
    H = complex_gaussian(rng, (batch, K, n_r))
    return ChannelPair(G, H)


def corrupt_csi(true: ChannelPair, model: CsiModel, rng: np.random.Generator) -> ChannelPair:
    """Channel estimate seen by the transceiver under the additive error model."""
    if model.sigma_e == 0:
        return ChannelPair(true.G.copy(), true.H.copy())
    variance = model.sigma_e ** 2
    G_hat = true.G + complex_gaussian(rng, true.G.shape, variance)
    H_hat = true.H + complex_gaussian(rng, true.H.shape, variance)
    return ChannelPair(G_hat, H_hat)


def reflection_matrix(theta: PhaseConfig) -> np.ndarray:
    """Diagonal ``Theta = diag(e^{j theta_k})`` with unit reflection amplitude."""
    if not isinstance(theta, PhaseConfig):
        theta = PhaseConfig(theta)
    v = theta.coefficients
    return v[..., :, None] * np.eye(theta.K)


def _reflect(G: np.ndarray, theta: PhaseConfig) -> np.ndarray:
    # Theta G without forming the diagonal matrix
    return theta.coefficients[..., :, None] * G


def effective_channel(csi: ChannelPair, theta: PhaseConfig) -> np.ndarray:
    """Cascaded channel ``H^H Theta G`` (N_r x N_t, batched when ``csi`` is)."""
    if not isinstance(theta, PhaseConfig):
        theta = PhaseConfig(theta)
    if theta.K != csi.K:
        raise DimensionError(f"theta has {theta.K} elements, channel has K={csi.K}")
    return matmul(hermitian(csi.H), _reflect(csi.G, theta))


def apply_ris_link(s, F, pair: ChannelPair, theta: PhaseConfig, P: float,
                   noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Received signal through the true channel.

    ``s`` is one symbol vector ``(N_s,)`` or a block of column vectors
    ``(N_s, n)`` sent over the same realization; noise is drawn fresh for
    every column.
    """
    s = np.asarray(s, dtype=np.complex128)
    F = np.asarray(F, dtype=np.complex128)
    if pair.batch_size is not None:
        raise DimensionError("apply_ris_link takes a single channel realization")
    if F.ndim != 2 or F.shape[0] != pair.n_t:
        raise DimensionError(f"precoder must be N_t x N_s with N_t={pair.n_t}, got {F.shape}")
    n_s = F.shape[1]
    if s.shape[0] != n_s:
        raise DimensionError(f"symbol vector has {s.shape[0]} streams, precoder has {n_s}")
    if abs(frobenius_norm(F) ** 2 - n_s) > PRECODER_NORM_TOL:
        raise DimensionError(f"precoder must satisfy ||F||_F^2 = N_s = {n_s}, got {frobenius_norm(F) ** 2}")
    H_tilde = effective_channel(pair, theta)
    clean = np.sqrt(P / n_s) * (H_tilde @ (F @ s))
    return clean + noise.sample(rng, clean.shape)


def feasibility_bound(pair: ChannelPair, theta: PhaseConfig, F) -> Tuple[float, float]:
    """``(||H^H Theta G F||_F, sqrt(N_s * sum(lambda_n)))`` for ``||F||_F^2 = N_s``.

    ``lambda_n`` are the eigenvalues of ``A A^H`` with ``A = H^H Theta G``;
    their sum is ``||A||_F^2``.
    """
    F = np.asarray(F, dtype=np.complex128)
    A = effective_channel(pair, theta)
    value = float(frobenius_norm(A @ F))
    eigenvalues = np.linalg.eigvalsh(A @ hermitian(A))
    bound = float(np.sqrt(F.shape[1] * np.sum(np.clip(eigenvalues, 0.0, None))))
    return value, bound
