"""
RIS Link Simulator - BER Bookkeeping
Measured operating points, Wilson confidence intervals and the closed-form
AWGN reference used as a sanity oracle.
"""

from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy.special import erfc
from scipy.stats import norm

from .channel import NoiseModel
from .modem import count_bit_errors, demodulate_min_distance, make_constellation, modulate, random_bits

LOW_ERROR_COUNT = 100


@dataclass
class BerPoint:
    snr_db: float
    sigma_e: float
    n_bits: int
    n_errors: int
    wall_time_ms: float = 0.0
    method: str = ""
    skipped_trials: int = 0

    def __post_init__(self):
        if self.n_bits < 0 or not 0 <= self.n_errors <= max(self.n_bits, 0):
            raise ValueError(f"need 0 <= n_errors <= n_bits, got {self.n_errors} / {self.n_bits}")

    @property
    def ber(self) -> float:
        return self.n_errors / self.n_bits if self.n_bits else 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return wilson_interval(self.n_errors, self.n_bits)

    @property
    def ci_half_width(self) -> float:
        low, high = self.interval
        return 0.5 * (high - low)

    @property
    def low_error_count(self) -> bool:
        """Fewer than 100 errors: the estimate is not trustworthy."""
        return self.n_errors < LOW_ERROR_COUNT

    def to_dict(self) -> dict:
        record = asdict(self)
        record.update(ber=self.ber, ci95_half_width=self.ci_half_width, low_error_count=self.low_error_count)
        return record


def wilson_interval(n_errors: int, n_bits: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n_bits <= 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2.0)
    p = n_errors / n_bits
    denom = 1.0 + z ** 2 / n_bits
    centre = (p + z ** 2 / (2 * n_bits)) / denom
    half = z * np.sqrt(p * (1 - p) / n_bits + z ** 2 / (4 * n_bits ** 2)) / denom
    return float(max(0.0, centre - half)), float(min(1.0, centre + half))


def intervals_disjoint(a: BerPoint, b: BerPoint) -> bool:
    a_low, a_high = a.interval
    b_low, b_high = b.interval
    return a_high < b_low or b_high < a_low


def bpsk_awgn_theory(snr_db: float) -> float:
    """``Q(sqrt(2 SNR))`` for unit-energy BPSK in complex AWGN of variance ``1/SNR``."""
    snr = 10.0 ** (snr_db / 10.0)
    return float(0.5 * erfc(np.sqrt(snr)))


def simulate_awgn_bpsk(snr_db: float, n_bits: int, rng: np.random.Generator) -> BerPoint:
    """Scalar BPSK over AWGN with no RIS and no precoding."""
    constellation = make_constellation(2)
    bits = random_bits(rng, (n_bits, 1))
    s = modulate(bits, constellation, 1)
    noise = NoiseModel.from_snr_db(snr_db, 1.0)
    s_hat = s + noise.sample(rng, s.shape)
    errors = count_bit_errors(bits, demodulate_min_distance(s_hat, constellation))
    return BerPoint(snr_db=snr_db, sigma_e=0.0, n_bits=n_bits, n_errors=errors, method="awgn-bpsk")
