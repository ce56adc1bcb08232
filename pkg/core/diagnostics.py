"""
RIS Link Simulator - Self Test
Invariant checks run by ``main.py selftest``: feasibility bound, SVD
orthogonality, monotone phase ascent, water-filling budget, exact recovery,
finite-difference gradients, the transmit power contract and the AWGN BPSK
oracle.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import erfcinv

from .autoencoder import AutoencoderModel
from .ber import bpsk_awgn_theory, simulate_awgn_bpsk
from .channel import (NoiseModel, PhaseConfig, complex_gaussian, feasibility_bound,
                      sample_channel_batch, sample_channels)
from .config import LinkConfig, SystemDims
from .model_based import optimize_phases, run_modelbased_trial, water_filling
from .modem import bits_to_onehot, count_bit_errors, random_bits
from .neural_net import (BatchNorm, CascadedChannelLayer, ComplexChannelLayer, Dense, Module,
                         PowerNormalization, ReLU, Sigmoid, finite_difference_gradient,
                         relative_error, softmax_cross_entropy)
from .numerics import frobenius_norm, is_semi_unitary, svd
from .streams import derive_stream

logger = logging.getLogger(__name__)

GRADIENT_TOL = 1e-4
GRADIENT_STEP = 1e-5
BOUND_TOL = 1e-9
AWGN_REL_TOL = 0.10


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed_ms: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "elapsed_ms": round(self.elapsed_ms, 3)}


# ---------------------------------------------------------------------------
# gradient helpers (shared with the tests)
# ---------------------------------------------------------------------------

def module_gradient_error(module: Module, x: np.ndarray, rng: np.random.Generator, **kwargs) -> float:
    """Worst relative error between backprop and central differences for
    ``sum(direction * module(x))``, over the input and every parameter."""
    out = module.forward(x, **kwargs)
    direction = rng.standard_normal(out.shape)
    analytic = [module.backward(direction)] + [g.copy() for g in module.gradients()]

    def loss(_):
        return float(np.sum(direction * module.forward(x, **kwargs)))

    numeric = [finite_difference_gradient(loss, x, GRADIENT_STEP)]
    numeric += [finite_difference_gradient(loss, p, GRADIENT_STEP) for p in module.parameters()]
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))


def _away_from_kinks(x: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    x[np.abs(x) < margin] += 10 * margin
    return x


def channel_gradient_errors(rng: np.random.Generator, batch: int = 3, K: int = 4,
                            n_t: int = 3, n_r: int = 2, P: float = 4.0, n_s: int = 2) -> Dict[str, float]:
    """Errors of the RIS channel layer w.r.t. ``x`` and ``theta``, and of the
    cascaded-channel layer w.r.t. ``theta``."""
    pair = sample_channel_batch(rng, batch, K, n_t, n_r)
    theta = rng.uniform(-np.pi, np.pi, size=(batch, K))
    x = rng.standard_normal((batch, 2 * n_t))

    layer = ComplexChannelLayer()
    out = layer.forward(x, theta, pair, P, n_s)
    direction = rng.standard_normal(out.shape)
    grad_x = layer.backward(direction)
    grad_theta = layer.grad_theta.copy()

    def loss(_):
        return float(np.sum(direction * layer.forward(x, theta, pair, P, n_s)))

    errors = {
        "complex_channel_x": relative_error(grad_x, finite_difference_gradient(loss, x, GRADIENT_STEP)),
        "complex_channel_theta": relative_error(grad_theta, finite_difference_gradient(loss, theta, GRADIENT_STEP)),
    }

    cascade = CascadedChannelLayer()
    out = cascade.forward(theta, pair)
    direction = rng.standard_normal(out.shape)
    analytic = cascade.backward(direction)

    def through_cascade(_):
        return float(np.sum(direction * cascade.forward(theta, pair)))

    errors["cascaded_channel_theta"] = relative_error(
        analytic, finite_difference_gradient(through_cascade, theta, GRADIENT_STEP))
    return errors


def layer_gradient_errors(rng: np.random.Generator, batch: int = 6, width: int = 5) -> Dict[str, float]:
    """One random instance of every layer type."""
    errors: Dict[str, float] = {}
    errors["dense"] = module_gradient_error(Dense(width, width + 2, rng), rng.standard_normal((batch, width)), rng)

    bn = BatchNorm(width)
    bn.gamma[:] = rng.uniform(0.5, 1.5, width)
    bn.beta[:] = rng.standard_normal(width)
    errors["batchnorm"] = module_gradient_error(bn, rng.standard_normal((batch, width)), rng)

    errors["relu"] = module_gradient_error(ReLU(), _away_from_kinks(rng.standard_normal((batch, width))), rng)
    errors["sigmoid"] = module_gradient_error(Sigmoid(), rng.standard_normal((batch, width)), rng)
    errors["power_normalize"] = module_gradient_error(PowerNormalization(rng.uniform(0.5, 4.0)),
                                                      rng.standard_normal((batch, 2 * width)), rng)

    logits = rng.standard_normal((batch, width))
    target = np.eye(width)[rng.integers(0, width, size=batch)]
    _, grad = softmax_cross_entropy(logits, target)
    numeric = finite_difference_gradient(lambda z: softmax_cross_entropy(z, target)[0], logits, GRADIENT_STEP)
    errors["softmax_cross_entropy"] = relative_error(grad, numeric)

    errors.update(channel_gradient_errors(rng))
    return errors


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def _random_dims(rng) -> tuple:
    n_t = int(rng.integers(1, 6))
    n_r = int(rng.integers(1, 6))
    K = int(rng.integers(1, 33))
    n_s = int(rng.integers(1, min(n_t, n_r) + 1))
    return K, n_t, n_r, n_s


def check_feasibility(rng, instances: int = 1000) -> str:
    worst = -np.inf
    for _ in range(instances):
        K, n_t, n_r, n_s = _random_dims(rng)
        pair = sample_channels(rng, K, n_t, n_r)
        F = complex_gaussian(rng, (n_t, n_s))
        F *= np.sqrt(n_s) / frobenius_norm(F)
        value, bound = feasibility_bound(pair, PhaseConfig.random(rng, K), F)
        worst = max(worst, value - bound)
        if value > bound + BOUND_TOL:
            raise AssertionError(f"||H^H Theta G F|| = {value} exceeds the bound {bound}")
    return f"{instances} instances, max(value - bound) = {worst:.3e}"


def check_svd(rng, instances: int = 500) -> str:
    worst = 0.0
    for _ in range(instances):
        rows, cols = (int(v) for v in rng.integers(1, 7, size=2))
        A = complex_gaussian(rng, (rows, cols))
        f = svd(A)
        error = float(frobenius_norm(f.reconstruct() - A) / frobenius_norm(A))
        worst = max(worst, error)
        if error > 1e-10 or not (is_semi_unitary(f.U) and is_semi_unitary(f.V)):
            raise AssertionError(f"SVD of a {rows}x{cols} matrix is off (reconstruction {error:.2e})")
        if np.any(np.diff(f.sigma) > 0) or np.any(f.sigma < 0):
            raise AssertionError("singular values are not sorted non-increasing")
    return f"{instances} instances, worst reconstruction {worst:.2e}"


def check_phase_ascent(rng, instances: int = 1000, K: int = 8) -> str:
    sweeps = []
    for _ in range(instances):
        report = optimize_phases(sample_channels(rng, K, 4, 2), rng=rng)
        trace = np.asarray(report.objective_trace)
        if np.any(np.diff(trace) < -1e-12 * trace[:-1]):
            raise AssertionError("objective decreased during coordinate ascent")
        sweeps.append(report.iterations)
    return f"{instances} K={K} traces non-decreasing, median {int(np.median(sweeps))} sweeps"


def check_water_filling(rng, instances: int = 1000) -> str:
    worst = 0.0
    for _ in range(instances):
        n_s = int(rng.integers(1, 5))
        sigma = np.sort(rng.uniform(0.01, 3.0, size=n_s))[::-1]
        p = water_filling(sigma, rng.uniform(0.1, 10.0), n_s, rng.uniform(0.01, 10.0))
        worst = max(worst, abs(p.sum() - n_s))
        if worst > 1e-9 or np.any(p < 0):
            raise AssertionError(f"water-filling broke the budget: p = {p}")
    return f"{instances} instances, max |sum(p) - N_s| = {worst:.2e}"


def check_exact_recovery(rng, vectors: int = 10000) -> str:
    dims = SystemDims()
    P = 4.0
    snr_db = 10.0 * np.log10(P / 1e-12)
    link = LinkConfig(dims=dims, P=P, snr_db=snr_db, sigma_e=0.0)
    errors = 0
    per_channel = 100
    for _ in range(vectors // per_channel):
        bits_tx, bits_rx = run_modelbased_trial(link, rng, n_symbols=per_channel)
        errors += count_bit_errors(bits_tx, bits_rx)
    if errors:
        raise AssertionError(f"{errors} bit errors at sigma^2 = 1e-12")
    return f"{vectors} symbol vectors, 0 errors at sigma^2 = 1e-12"


def check_gradients(rng, instances: int = 50) -> str:
    worst: Dict[str, float] = {}
    for _ in range(instances):
        for name, error in layer_gradient_errors(rng).items():
            worst[name] = max(worst.get(name, 0.0), error)
    failed = {name: err for name, err in worst.items() if not err < GRADIENT_TOL}
    if failed:
        raise AssertionError(f"finite-difference mismatch: {failed}")
    return f"{instances} instances per layer, worst {max(worst.values()):.2e}"


def check_power_contract(rng, batch: int = 64) -> str:
    dims = SystemDims(K=4)
    micro = {"encoder": [16], "ris_net": [8], "decoder": [16]}
    worst = 0.0
    for normalization in ("paper", "sqrt"):
        model = AutoencoderModel(dims, 4.0, normalization, rng, micro)
        true = sample_channel_batch(rng, batch, dims.K, dims.n_t, dims.n_r)
        onehot = bits_to_onehot(random_bits(rng, (batch, dims.bits_per_vector)), dims.M, dims.n_s)
        result = model.forward(onehot, true, true, NoiseModel(1.0), rng)
        expected = model.power_norm.average_power
        worst = max(worst, abs(result.tx_power - expected))
        if abs(result.tx_power - expected) > 1e-9:
            raise AssertionError(f"{normalization}: batch power {result.tx_power}, expected {expected}")
    return f"batch power matches P^2 (paper) and P (sqrt), worst deviation {worst:.2e}"


def check_awgn_oracle(rng, n_bits: int = 1000000) -> str:
    # SNR at which BPSK reaches BER 1e-2
    snr_db = float(20.0 * np.log10(erfcinv(2e-2)))
    point = simulate_awgn_bpsk(snr_db, n_bits, rng)
    theory = bpsk_awgn_theory(snr_db)
    deviation = abs(point.ber - theory) / theory
    if deviation > AWGN_REL_TOL:
        raise AssertionError(f"BER {point.ber:.4e} vs theory {theory:.4e} at {snr_db:.2f} dB")
    return f"BER {point.ber:.4e} vs Q(sqrt(2 SNR)) = {theory:.4e} at {snr_db:.2f} dB ({100 * deviation:.1f}%)"


CHECKS: Dict[str, Callable[[np.random.Generator], str]] = {
    "feasibility_bound": check_feasibility,
    "svd_orthogonality": check_svd,
    "monotone_phase_ascent": check_phase_ascent,
    "water_filling_budget": check_water_filling,
    "exact_recovery": check_exact_recovery,
    "gradient_suite": check_gradients,
    "power_contract": check_power_contract,
    "awgn_oracle": check_awgn_oracle,
}


def run_selftest(seed: int = 0, only: Optional[List[str]] = None) -> List[CheckResult]:
    """Run every check (or those named in ``only``), each on its own seeded stream."""
    names = list(CHECKS) if only is None else list(only)
    results = []
    for name in names:
        check = CHECKS[name]
        start = time.perf_counter()
        try:
            detail = check(derive_stream(seed, "selftest", name))
            passed = True
        except Exception as e:
            detail = f"{type(e).__name__}: {e}"
            passed = False
        elapsed_ms = 1000.0 * (time.perf_counter() - start)
        logger.log(logging.INFO if passed else logging.ERROR, "selftest %s: %s", name, detail)
        results.append(CheckResult(name, passed, detail, elapsed_ms))
    return results
