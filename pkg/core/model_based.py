"""
RIS Link Simulator - Model-Based Transceiver
Phase-shift optimization by element-wise coordinate ascent on the total path
gain, SVD precoding with water-filling, the zero-forcing equalizer and the
end-to-end model-based trial.

Order of design per channel realization: phases first, then precoder, then
equalizer. The outer loop is not iterated.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .channel import (ChannelPair, CsiModel, NoiseModel, PhaseConfig, apply_ris_link,
                      corrupt_csi, effective_channel, sample_channels)
from .errors import ConfigError, DegenerateChannelError, DimensionError, RankDeficiencyError
from .modem import demodulate_min_distance, make_constellation, modulate, random_bits
from .numerics import SvdFactors, frobenius_norm, hermitian, svd

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12
POWER_SUM_TOL = 1e-9


@dataclass
class PhaseOptReport:
    theta: PhaseConfig
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


@dataclass(frozen=True)
class LinkDesign:
    """Precoder ``F`` (N_t x N_s), equalizer ``Z`` (N_s x N_r), power split ``p``."""
    F: np.ndarray
    Z: np.ndarray
    p: np.ndarray
    svd: SvdFactors

    @property
    def n_s(self) -> int:
        return self.F.shape[1]


def gain_matrix(csi: ChannelPair) -> np.ndarray:
    """Hermitian ``M`` with ``M_kl = (G G^H)_kl (H H^H)_lk``, so the path gain is ``v^H M v``."""
    A = csi.G @ hermitian(csi.G)
    B = csi.H @ hermitian(csi.H)
    return A * B.T


def path_gain_objective(csi: ChannelPair, theta: PhaseConfig) -> float:
    """``tr(H^H Theta G G^H Theta^H H)``, the squared Frobenius norm of the cascaded channel."""
    return float(frobenius_norm(effective_channel(csi, theta)) ** 2)


def _quadratic_form(M: np.ndarray, v: np.ndarray) -> float:
    return float(np.real(np.conj(v) @ M @ v))


def optimize_phases(csi: ChannelPair, max_iter: int = 200, tol: float = 1e-6,
                    rng: Optional[np.random.Generator] = None,
                    initial: Optional[PhaseConfig] = None) -> PhaseOptReport:
    """Maximize the path gain over unit-modulus RIS coefficients.

    Each sweep sets ``theta_k = arg(sum_{l != k} M_kl v_l)`` for k = 1..K in
    turn, which is the exact maximizer over ``theta_k`` with the rest fixed,
    so the objective never decreases. Stops when the relative improvement of
    a sweep drops below ``tol`` or after ``max_iter`` sweeps. ``tol = 0``
    always runs all ``max_iter`` sweeps.
    """
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    if tol < 0:
        raise ConfigError(f"tol must be non-negative, got {tol}")
    if csi.batch_size is not None:
        raise DimensionError("optimize_phases takes a single channel realization")

    M = gain_matrix(csi)
    if initial is not None:
        theta = initial.theta.copy()
    elif rng is not None:
        theta = rng.uniform(-np.pi, np.pi, size=csi.K)
    else:
        theta = np.zeros(csi.K)
    v = np.exp(1j * theta)
    diag = np.diag(M).copy()

    trace = [_quadratic_form(M, v)]
    sweeps = 0
    for _ in range(max_iter):
        for k in range(csi.K):
            c = M[k] @ v - diag[k] * v[k]
            if abs(c) > 0:
                theta[k] = np.angle(c)
                v[k] = np.exp(1j * theta[k])
        sweeps += 1
        current = _quadratic_form(M, v)
        previous = trace[-1]
        trace.append(current)
        if tol > 0 and previous > 0 and (current - previous) / previous < tol:
            break
        if previous <= 0 and current <= previous:
            break
    logger.debug("phase optimization: K=%d, %d sweeps, gain %.6g -> %.6g", csi.K, sweeps, trace[0], trace[-1])
    return PhaseOptReport(theta=PhaseConfig(theta), objective_trace=trace, iterations=sweeps)


def water_filling(sigma, P: float, n_s: int, sigma2: float) -> np.ndarray:
    """Capacity water-filling over the ``N_s`` strongest eigen-modes.

    ``p_m = max(0, mu - N_s sigma^2 / (P lambda_m^2))`` with the water level
    ``mu`` found by bisection so that ``sum(p) = N_s``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if P <= 0 or sigma2 <= 0:
        raise ConfigError(f"P and sigma2 must be positive, got P={P}, sigma2={sigma2}")
    if sigma.ndim != 1 or sigma.shape[0] < n_s:
        raise DimensionError(f"need at least N_s={n_s} singular values, got {sigma.shape}")
    if np.any(np.diff(sigma) > 0) or np.any(sigma < 0):
        raise ConfigError("singular values must be non-negative and sorted non-increasing")
    lam = sigma[:n_s]
    if np.all(lam == 0):
        raise DegenerateChannelError("all singular values are zero")

    with np.errstate(divide="ignore"):
        floor = np.where(lam > 0, n_s * sigma2 / (P * lam ** 2), np.inf)

    def poured(mu: float) -> np.ndarray:
        return np.maximum(0.0, mu - floor)

    lo = float(np.min(floor))
    hi = lo + n_s
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poured(mid).sum() < n_s:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break

    # exact level on the active set found by bisection
    active = floor < hi
    mu = (n_s + floor[active].sum()) / np.count_nonzero(active)
    return poured(mu)


def equal_power(n_s: int) -> np.ndarray:
    """Same power on every stream (``p_m = 1``)."""
    return np.ones(n_s)


def allocate_power(sigma, P: float, n_s: int, sigma2: float, strategy: str = "waterfilling") -> np.ndarray:
    if strategy == "waterfilling":
        return water_filling(sigma, P, n_s, sigma2)
    if strategy == "equal":
        return equal_power(n_s)
    raise ConfigError(f"unknown power allocation '{strategy}'; use 'waterfilling' or 'equal'")


def design_link(csi: ChannelPair, theta: PhaseConfig, P: float, sigma2: float, n_s: int,
                power_allocation: str = "waterfilling") -> LinkDesign:
    """Precoder ``F = [V]_{1:N_s} P^{1/2}`` and equalizer
    ``Z = (Sigma_{N_s} P^{1/2})^{-1} [U]^H_{1:N_s}`` for the cascaded channel."""
    if n_s < 1 or n_s > min(csi.n_t, csi.n_r):
        raise DimensionError(f"N_s={n_s} must be between 1 and min(N_t, N_r)={min(csi.n_t, csi.n_r)}")
    factors = svd(effective_channel(csi, theta))
    lam = factors.sigma[:n_s]
    if lam[-1] <= RANK_TOL:
        raise RankDeficiencyError(f"cascaded channel has rank below N_s={n_s} (lambda={lam})")
    p = allocate_power(factors.sigma, P, n_s, sigma2, power_allocation)
    if np.any(p <= 0):
        raise RankDeficiencyError(f"power allocation switched off a stream (p={p})")
    if abs(p.sum() - n_s) > POWER_SUM_TOL:
        raise RankDeficiencyError(f"power fractions sum to {p.sum()}, expected {n_s}")
    root_p = np.sqrt(p)
    F = factors.V[:, :n_s] * root_p
    Z = hermitian(factors.U[:, :n_s]) / (lam * root_p)[:, None]
    return LinkDesign(F=F, Z=Z, p=p, svd=factors)


def equalize(design: LinkDesign, y, P: float) -> np.ndarray:
    """Stream estimates ``s_hat = Z y / sqrt(P / N_s) = s + n_tilde``."""
    y = np.asarray(y, dtype=np.complex128)
    return (design.Z @ y) / np.sqrt(P / design.n_s)


def sum_capacity(design: LinkDesign, P: float, sigma2: float) -> float:
    """Sum rate over the active eigen-modes in bit/s/Hz."""
    lam = design.svd.sigma[:design.n_s]
    return float(np.sum(np.log2(1.0 + design.p * P * lam ** 2 / (design.n_s * sigma2))))


PhaseSelector = Callable[[ChannelPair, np.random.Generator], PhaseConfig]


def optimized_phase_selector(max_iter: int = 200, tol: float = 1e-6) -> PhaseSelector:
    def select(csi: ChannelPair, rng: np.random.Generator) -> PhaseConfig:
        return optimize_phases(csi, max_iter=max_iter, tol=tol, rng=rng).theta
    return select


def run_modelbased_trial(config, rng: np.random.Generator,
                         select_phases: Optional[PhaseSelector] = None,
                         n_symbols: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """One channel realization through the model-based pipeline.

    Draws ``(G, H)``, corrupts the CSI, designs phases, ``F`` and ``Z`` from
    the estimate, transmits ``n_symbols`` symbol vectors through the true
    channel and detects them. Returns ``(bits_tx, bits_rx)`` with shape
    ``(n_symbols, N_s log2 M)``.

    ``config`` needs ``dims``, ``P``, ``snr_db``, ``sigma_e`` and optionally
    ``max_iter``, ``tol``, ``power_allocation``, ``symbols_per_channel``.
    """
    dims = config.dims
    if n_symbols is None:
        n_symbols = getattr(config, "symbols_per_channel", 1)
    if select_phases is None:
        select_phases = optimized_phase_selector(getattr(config, "max_iter", 200), getattr(config, "tol", 1e-6))
    noise = NoiseModel.from_snr_db(config.snr_db, config.P)
    constellation = make_constellation(dims.M)

    true = sample_channels(rng, dims.K, dims.n_t, dims.n_r)
    csi = corrupt_csi(true, CsiModel(config.sigma_e), rng)
    theta = select_phases(csi, rng)
    design = design_link(csi, theta, config.P, noise.sigma2, dims.n_s,
                         getattr(config, "power_allocation", "waterfilling"))

    bits_tx = random_bits(rng, (n_symbols, dims.n_s * constellation.bits_per_symbol))
    s = modulate(bits_tx, constellation, dims.n_s)
    y = apply_ris_link(s.T, design.F, true, theta, config.P, noise, rng)
    s_hat = equalize(design, y, config.P).T
    bits_rx = demodulate_min_distance(s_hat, constellation)
    return bits_tx, bits_rx
