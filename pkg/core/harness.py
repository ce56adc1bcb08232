"""
RIS Link Simulator - Experiment Harness
Monte Carlo sweeps over SNR and CSI error, the random-phase baseline, CSV
output for plotting, and the per-channel runtime benchmark.

Every sweep point draws from its own sub-stream ``derive_stream(seed,
method, snr_db, sigma_e, K, ...)``, so a point's result does not depend on
the other points or on the worker count.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .autoencoder import AutoencoderModel, LossTrace, evaluate_ber
from .ber import BerPoint
from .channel import ChannelPair, CsiModel, NoiseModel, PhaseConfig, corrupt_csi, sample_channels
from .config import ExperimentConfig
from .errors import ConfigError, RisLinkError
from .model_based import (design_link, optimize_phases, optimized_phase_selector,
                          run_modelbased_trial, sum_capacity)
from .modem import bits_to_onehot, count_bit_errors, random_bits
from .streams import derive_stream

logger = logging.getLogger(__name__)

BER_COLUMNS = ["snr_db", "sigma_e", "n_bits", "n_errors", "ber", "wall_time_ms",
               "ci95_half_width", "low_error_count", "method", "skipped_trials"]
MAX_SKIP_FRACTION = 0.5


def random_phase_baseline(csi: ChannelPair, rng: np.random.Generator) -> PhaseConfig:
    """Uniform i.i.d. phases in [-pi, pi]; ignores the channel."""
    return PhaseConfig.random(rng, csi.K)


def simulate_modelbased_point(config: ExperimentConfig, snr_db: float, sigma_e: float,
                              method: str = "modelbased") -> BerPoint:
    """BER of the model-based link (optimized or random phases) at one point.

    Trials whose design fails (rank-deficient cascade or a stream switched
    off by water-filling) are logged, counted and replaced by fresh ones.
    """
    if method == "modelbased":
        select = optimized_phase_selector(config.max_iter, config.tol)
    elif method == "random-phase":
        select = random_phase_baseline
    else:
        raise ConfigError(f"'{method}' is not a model-based method")
    link = config.link(snr_db, sigma_e)
    bits_per_vector = config.dims.bits_per_vector
    vectors = -(-config.n_bits // bits_per_vector)

    start = time.perf_counter()
    counted = errors = skipped = trial = 0
    while counted < vectors:
        rng = derive_stream(config.seed, method, snr_db, sigma_e, config.dims.K, trial)
        n_symbols = min(config.symbols_per_channel, vectors - counted)
        trial += 1
        try:
            bits_tx, bits_rx = run_modelbased_trial(link, rng, select, n_symbols)
        except RisLinkError as e:
            skipped += 1
            logger.warning("trial %d skipped at SNR=%s dB, sigma_e=%s: %s", trial - 1, snr_db, sigma_e, e)
            if skipped > MAX_SKIP_FRACTION * trial and trial >= 20:
                raise RisLinkError(f"too many failed trials ({skipped}/{trial}) at SNR={snr_db} dB") from e
            continue
        errors += count_bit_errors(bits_tx, bits_rx)
        counted += n_symbols
    elapsed_ms = 1000.0 * (time.perf_counter() - start)
    return BerPoint(snr_db=snr_db, sigma_e=sigma_e, n_bits=counted * bits_per_vector,
                    n_errors=errors, wall_time_ms=elapsed_ms, method=method, skipped_trials=skipped)


def simulate_autoencoder_point(config: ExperimentConfig, model: AutoencoderModel,
                               snr_db: float, sigma_e: float) -> BerPoint:
    rng = derive_stream(config.seed, "autoencoder", snr_db, sigma_e, model.dims.K)
    return evaluate_ber(model, snr_db, sigma_e, config.n_bits, rng, config.eval_batch_size)


def _run_point(task) -> BerPoint:
    config, method, snr_db, sigma_e, model = task
    if method == "autoencoder":
        if model is None:
            raise ConfigError("the autoencoder method needs a trained model or --checkpoint")
        return simulate_autoencoder_point(config, model, snr_db, sigma_e)
    return simulate_modelbased_point(config, snr_db, sigma_e, method)


def run_points(config: ExperimentConfig, points: Sequence[Tuple[str, float, float]],
               model: Optional[AutoencoderModel] = None) -> List[BerPoint]:
    """Simulate ``(method, snr_db, sigma_e)`` points, in parallel when ``workers > 1``.

    Results come back in input order.
    """
    tasks = [(config, method, snr, se, model) for method, snr, se in points]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_run_point(task))
            point = results[-1]
            logger.info("%s: SNR=%g dB, sigma_e=%g -> BER=%.3e (%d errors)",
                        point.method, point.snr_db, point.sigma_e, point.ber, point.n_errors)
    return results


def sweep_snr(config: ExperimentConfig, model: Optional[AutoencoderModel] = None) -> List[BerPoint]:
    """BER versus SNR for every configured method at the first CSI error value."""
    sigma_e = config.sigma_e[0]
    points = [(method, snr, sigma_e) for method in config.methods for snr in config.snr_db]
    return run_points(config, points, model)


def sweep_csi(config: ExperimentConfig, snr_db: float,
              model: Optional[AutoencoderModel] = None) -> List[BerPoint]:
    """BER versus CSI error variance at a fixed SNR."""
    points = [(method, snr_db, se) for method in config.methods for se in config.sigma_e]
    return run_points(config, points, model)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_ber_csv(points: Iterable[BerPoint], path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(BER_COLUMNS)
            for point in points:
                record = point.to_dict()
                writer.writerow([_fmt(record[column]) for column in BER_COLUMNS])
    except OSError as e:
        raise RisLinkError(f"cannot write BER CSV {path}: {e}") from e
    return path


def read_ber_csv(path) -> List[BerPoint]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise RisLinkError(f"cannot read BER CSV {path}: {e}") from e
    return [BerPoint(snr_db=float(row["snr_db"]), sigma_e=float(row["sigma_e"]),
                     n_bits=int(row["n_bits"]), n_errors=int(row["n_errors"]),
                     wall_time_ms=float(row["wall_time_ms"]), method=row["method"],
                     skipped_trials=int(row["skipped_trials"]))
            for row in rows]


def loss_columns(n_s: int) -> List[str]:
    return (["iteration", "L_AE"] + [f"L_{i + 1}" for i in range(n_s)]
            + [f"alpha_{i + 1}" for i in range(n_s)] + ["tx_power"])


def write_loss_csv(trace: LossTrace, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(loss_columns(trace.n_s))
            for i in range(len(trace)):
                row = [i, trace.l_ae[i], *trace.stream_losses[i], *trace.alphas[i], trace.tx_power[i]]
                writer.writerow([_fmt(float(v)) if not isinstance(v, int) else str(v) for v in row])
    except OSError as e:
        raise RisLinkError(f"cannot write loss CSV {path}: {e}") from e
    return path


def read_loss_csv(path) -> LossTrace:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as e:
        raise RisLinkError(f"cannot read loss CSV {path}: {e}") from e
    n_s = (len(header) - 3) // 2
    trace = LossTrace()
    for row in rows:
        values = [float(v) for v in row[1:]]
        trace.record(values[0], np.array(values[1:1 + n_s]), np.array(values[1 + n_s:1 + 2 * n_s]), values[-1])
    return trace


# ---------------------------------------------------------------------------
# runtime benchmark
# ---------------------------------------------------------------------------

def _median_ms(fn, repetitions: int, warmup: int = 5) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return 1000.0 * float(np.median(samples))


def benchmark_runtime(config: ExperimentConfig, model: AutoencoderModel,
                      repetitions: Optional[int] = None, snr_db: float = 5.0) -> Dict[str, float]:
    """Per-channel design time: model-based (``max_iter`` full sweeps + SVD design)
    against one autoencoder inference (RIS net, encoder, channel, decoder)."""
    repetitions = repetitions or config.bench_repetitions
    dims = model.dims
    rng = derive_stream(config.seed, "bench", dims.K)
    noise = NoiseModel.from_snr_db(snr_db, config.P)
    true = sample_channels(rng, dims.K, dims.n_t, dims.n_r)
    csi = corrupt_csi(true, CsiModel(config.sigma_e[0]), rng)

    def model_based():
        report = optimize_phases(csi, max_iter=config.max_iter, tol=0.0, rng=rng)
        return design_link(csi, report.theta, config.P, noise.sigma2, dims.n_s, config.power_allocation)

    true_batch = ChannelPair(true.G[None], true.H[None])
    csi_batch = ChannelPair(csi.G[None], csi.H[None])
    onehot = bits_to_onehot(random_bits(rng, (1, dims.bits_per_vector)), dims.M, dims.n_s)
    model.eval()

    def autoencoder():
        return model.forward(onehot, true_batch, csi_batch, noise, rng)

    modelbased_ms = _median_ms(model_based, repetitions)
    autoencoder_ms = _median_ms(autoencoder, repetitions)
    capacity = sum_capacity(model_based(), config.P, noise.sigma2)
    result = {
        "K": dims.K,
        "max_iter": config.max_iter,
        "modelbased_ms": modelbased_ms,
        "autoencoder_ms": autoencoder_ms,
        "ratio": modelbased_ms / autoencoder_ms if autoencoder_ms > 0 else float("inf"),
        "capacity_bps_hz": capacity,
    }
    logger.info("benchmark K=%d: model-based %.3f ms, autoencoder %.3f ms (x%.1f)",
                dims.K, modelbased_ms, autoencoder_ms, result["ratio"])
    return result
