"""
RIS Link Simulator - Experiment Commands
One handler per CLI subcommand. Every handler returns a result dict with
``success``, ``message``, ``data`` and ``exit_code`` (0 ok, 1 runtime
failure, 2 configuration error).
"""

import logging
from typing import Any, Dict, Iterable, List, Optional

from core.autoencoder import AutoencoderModel, load_checkpoint, save_checkpoint, train
from core.ber import BerPoint
from core.config import ExperimentConfig, with_dims
from core.diagnostics import run_selftest
from core.errors import ConfigError
from core.harness import benchmark_runtime, run_points, sweep_csi, sweep_snr, write_ber_csv, write_loss_csv
from core.streams import derive_stream

logger = logging.getLogger(__name__)

DEFAULT_CHECKPOINT = "results/autoencoder.ckpt"
DEFAULT_LOSS_CSV = "results/loss.csv"


def _result(success: bool, message: str, data: Optional[Dict[str, Any]] = None,
            exit_code: Optional[int] = None) -> Dict[str, Any]:
    return {
        'success': success,
        'message': message,
        'data': data or {},
        'exit_code': (0 if success else 1) if exit_code is None else exit_code,
    }


def _failure(action: str, error: Exception) -> Dict[str, Any]:
    exit_code = 2 if isinstance(error, ConfigError) else 1
    code = getattr(error, 'code', 'runtime_error')
    return _result(False, f"Error {action}: {error}", {'error': str(error), 'code': code}, exit_code)


def _summarize(points: List[BerPoint]) -> List[Dict[str, Any]]:
    return [point.to_dict() for point in points]


class ExperimentCommands:
    def __init__(self, config: ExperimentConfig, progress: bool = True):
        self.config = config
        self.progress = progress

    # ---- model acquisition --------------------------------------------------

    def _train_model(self, config: ExperimentConfig) -> AutoencoderModel:
        model, trace = train(config.train, rng=derive_stream(config.seed, "train", config.dims.K),
                             progress=self.progress)
        logger.info("trained inline: final L_AE %.4f", trace.l_ae[-1])
        return model

    def _autoencoder_for(self, config: ExperimentConfig) -> Optional[AutoencoderModel]:
        if "autoencoder" not in config.methods:
            return None
        if config.checkpoint:
            return load_checkpoint(config.checkpoint, expected_dims=config.dims)
        logger.info("no checkpoint given, training the autoencoder first")
        return self._train_model(config)

    # ---- handlers -------------------------------------------------------------

    def handle_train(self, checkpoint: Optional[str] = None, loss_output: Optional[str] = None) -> Dict[str, Any]:
        """Train the autoencoder, then write the checkpoint and the loss CSV."""
        config = self.config
        checkpoint = checkpoint or config.checkpoint or DEFAULT_CHECKPOINT
        loss_output = loss_output or DEFAULT_LOSS_CSV
        try:
            model, trace = train(config.train, rng=derive_stream(config.seed, "train", config.dims.K),
                                 progress=self.progress)
            save_checkpoint(model, checkpoint)
            write_loss_csv(trace, loss_output)
            target = model.power_norm.average_power
            power_error = max(abs(p - target) for p in trace.tx_power)
            return _result(True, f"Training finished after {len(trace)} iterations: "
                                 f"L_AE {trace.l_ae[0]:.4f} -> {trace.l_ae[-1]:.4f}", {
                'iterations': len(trace),
                'initial_loss': trace.window_mean(0.1, last=False),
                'final_loss': trace.window_mean(0.1, last=True),
                'max_power_error': power_error,
                'checkpoint': str(checkpoint),
                'loss_csv': str(loss_output),
            })
        except Exception as e:
            return _failure("training the autoencoder", e)

    def handle_sweep_snr(self) -> Dict[str, Any]:
        """BER versus SNR for the configured methods."""
        config = self.config
        try:
            points = sweep_snr(config, self._autoencoder_for(config))
            path = write_ber_csv(points, config.output)
            return _result(True, f"Wrote {len(points)} BER points to {path}",
                           {'points': _summarize(points), 'output': str(path)})
        except Exception as e:
            return _failure("running the SNR sweep", e)

    def handle_sweep_csi(self, snr_db: float) -> Dict[str, Any]:
        """BER versus CSI error variance at one SNR."""
        config = self.config
        try:
            points = sweep_csi(config, snr_db, self._autoencoder_for(config))
            path = write_ber_csv(points, config.output)
            return _result(True, f"Wrote {len(points)} BER points at {snr_db:g} dB to {path}",
                           {'points': _summarize(points), 'output': str(path)})
        except Exception as e:
            return _failure("running the CSI sweep", e)

    def handle_evaluate(self, checkpoint: str, snr_db: float, sigma_e: float = 0.0) -> Dict[str, Any]:
        """BER of a saved autoencoder at a single operating point."""
        config = self.config
        try:
            model = load_checkpoint(checkpoint)
            config = with_dims(config, **_dims_dict(model))
            points = run_points(config, [("autoencoder", snr_db, sigma_e)], model)
            path = write_ber_csv(points, config.output)
            point = points[0]
            return _result(True, f"BER {point.ber:.4e} at {snr_db:g} dB, sigma_e={sigma_e:g} "
                                 f"({point.n_errors} errors in {point.n_bits} bits)",
                           {'point': point.to_dict(), 'output': str(path)})
        except Exception as e:
            return _failure("evaluating the checkpoint", e)

    def handle_bench(self, k_values: Iterable[int], repetitions: Optional[int] = None) -> Dict[str, Any]:
        """Per-channel design latency, model-based versus autoencoder inference."""
        try:
            rows = []
            for K in k_values:
                config = with_dims(self.config, K=int(K))
                model = None
                if config.checkpoint:
                    model = load_checkpoint(config.checkpoint)
                    if model.dims != config.dims:
                        logger.warning("checkpoint is for K=%d; timing an untrained model for K=%d",
                                       model.dims.K, config.dims.K)
                        model = None
                if model is None:
                    model = AutoencoderModel(config.dims, config.P, config.train.normalization,
                                             derive_stream(config.seed, "bench-init", K))
                rows.append(benchmark_runtime(config, model, repetitions))
            ordered = all(row['modelbased_ms'] > row['autoencoder_ms'] for row in rows)
            summary = ", ".join(f"K={row['K']}: x{row['ratio']:.1f}" for row in rows)
            return _result(True, f"Model-based / autoencoder latency ratio {summary}",
                           {'rows': rows, 'ordering_holds': ordered})
        except Exception as e:
            return _failure("running the benchmark", e)

    def handle_selftest(self) -> Dict[str, Any]:
        """Run the invariant suite; fails when any check fails."""
        try:
            results = run_selftest(self.config.seed)
        except Exception as e:
            return _failure("running the self test", e)
        failed = [r.name for r in results if not r.passed]
        records = [r.to_dict() for r in results]
        if failed:
            return _result(False, f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}",
                           {'checks': records})
        return _result(True, f"All {len(results)} checks passed", {'checks': records})


def _dims_dict(model: AutoencoderModel) -> Dict[str, int]:
    d = model.dims
    return {'n_t': d.n_t, 'n_r': d.n_r, 'n_s': d.n_s, 'K': d.K, 'M': d.M}
