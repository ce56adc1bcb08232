"""
RIS Link Simulator - Main Entry Point
Command-line front end: autoencoder training, BER sweeps over SNR and CSI
error, single-point evaluation, the runtime benchmark and the self test.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from commands.experiments import ExperimentCommands
from core.config import METHODS, load_experiment_config
from core.errors import ConfigError


def print_banner():
    """Print the simulator banner."""
    banner = """
╔══════════════════════════════════════════════════════════════╗
║          RIS Link Simulator - RIS-assisted MIMO BER          ║
║     model-based design  vs  end-to-end autoencoder design    ║
╚══════════════════════════════════════════════════════════════╝
"""
    print(banner)


def parse_values(text: str) -> List[float]:
    """``'0:20:5'`` (inclusive range), ``'0,5,10'`` or a single number."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1.0)
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            start, stop, step = parts
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [float(start + i * step) for i in range(count)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a number, a list 'a,b,c' or a range 'start:stop:step'")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON file merged over the shipped defaults")
    parser.add_argument("--seed", type=int, help="Master seed (default: RISLINK_SEED or 0)")
    parser.add_argument("--output", help="Output CSV path")
    parser.add_argument("--workers", type=int, help="Worker processes for sweep points")


def _add_methods(parser: argparse.ArgumentParser):
    parser.add_argument("--method", action="append", choices=[*METHODS, "all"],
                        help="Method to simulate; repeat for several, or 'all'")
    parser.add_argument("--checkpoint", help="Trained autoencoder to reuse instead of training inline")
    parser.add_argument("--k", type=int, help="Number of RIS elements")
    parser.add_argument("--bits", type=int, help="Bits per BER point")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py",
                                     description="RIS Link Simulator - RIS-assisted MIMO link BER experiments")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--no-banner", action="store_true", help="Do not print the banner")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train the autoencoder; write checkpoint and loss CSV")
    _add_common(train)
    train.add_argument("--k", type=int, help="Number of RIS elements")
    train.add_argument("--epochs", type=int)
    train.add_argument("--samples", type=int, help="Training samples per epoch")
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--train-snr", type=float, help="Training SNR in dB")
    train.add_argument("--train-sigma-e", type=float, help="CSI error standard deviation during training")
    train.add_argument("--normalization", choices=["paper", "rms", "sqrt"])
    train.add_argument("--checkpoint", help="Checkpoint path to write")
    train.add_argument("--loss-output", help="Loss trace CSV path")

    snr = sub.add_parser("sweep-snr", help="BER versus SNR")
    _add_common(snr)
    _add_methods(snr)
    snr.add_argument("--snr", type=parse_values, help="SNR points in dB, e.g. 0:20:5")
    snr.add_argument("--sigma-e", type=float, help="CSI error standard deviation")

    csi = sub.add_parser("sweep-csi", help="BER versus CSI error at a fixed SNR")
    _add_common(csi)
    _add_methods(csi)
    csi.add_argument("--snr", type=float, required=True, help="SNR in dB")
    csi.add_argument("--sigma-e", type=parse_values, help="CSI error values, e.g. 0:0.5:0.1")

    evaluate = sub.add_parser("evaluate", help="BER of a saved autoencoder at one point")
    _add_common(evaluate)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--snr", type=float, required=True, help="SNR in dB")
    evaluate.add_argument("--sigma-e", type=float, default=0.0)
    evaluate.add_argument("--bits", type=int, help="Bits to simulate")

    bench = sub.add_parser("bench", help="Per-channel design latency comparison")
    _add_common(bench)
    bench.add_argument("--k", type=int, action="append", help="RIS sizes to time (repeatable, default 16 and 32)")
    bench.add_argument("--repetitions", type=int, help="Timed repetitions per design")
    bench.add_argument("--checkpoint", help="Trained autoencoder to time")

    selftest = sub.add_parser("selftest", help="Run the invariant suite")
    selftest.add_argument("--seed", type=int)
    selftest.add_argument("--config")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {
        "seed": "seed", "output": "output", "workers": "workers", "bits": "n_bits",
        "checkpoint": "checkpoint", "epochs": "epochs", "samples": "n_samples",
        "batch_size": "batch_size", "lr": "lr", "train_snr": "train_snr_db",
        "train_sigma_e": "train_sigma_e", "normalization": "normalization",
        "repetitions": "bench_repetitions",
    }
    overrides = {key: getattr(args, flag) for flag, key in flags.items() if getattr(args, flag, None) is not None}
    if isinstance(getattr(args, "k", None), int):
        overrides["K"] = args.k
    methods = getattr(args, "method", None)
    if methods:
        overrides["methods"] = list(METHODS) if "all" in methods else list(dict.fromkeys(methods))
    if args.command == "sweep-snr":
        if args.snr is not None:
            overrides["snr_db"] = args.snr
        if args.sigma_e is not None:
            overrides["sigma_e"] = [args.sigma_e]
    elif args.command == "sweep-csi" and args.sigma_e is not None:
        overrides["sigma_e"] = args.sigma_e
    return overrides


def _print_result(result: Dict[str, Any]):
    icon = "✓" if result['success'] else "❌"
    print(f"{icon} {result['message']}")
    data = result.get('data', {})
    for point in data.get('points', []):
        flag = "  ⚠ fewer than 100 errors" if point['low_error_count'] else ""
        print(f"   {point['method']:<13} SNR={point['snr_db']:6.2f} dB  sigma_e={point['sigma_e']:<5g} "
              f"BER={point['ber']:.4e} ±{point['ci95_half_width']:.1e}{flag}")
    for row in data.get('rows', []):
        print(f"   K={row['K']:<3} model-based {row['modelbased_ms']:.3f} ms  "
              f"autoencoder {row['autoencoder_ms']:.3f} ms  ratio x{row['ratio']:.1f}  "
              f"capacity {row['capacity_bps_hz']:.2f} bit/s/Hz")
    for check in data.get('checks', []):
        print(f"   {'✓' if check['passed'] else '❌'} {check['name']}: {check['detail']}")


def cli_run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns 0 on success, 1 on a runtime failure, 2 on a usage or config error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0

    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    if not args.no_banner:
        print_banner()

    try:
        config = load_experiment_config(getattr(args, "config", None), _overrides(args))
    except ConfigError as e:
        print(f"❌ Configuration error: {e}")
        return 2

    commands = ExperimentCommands(config, progress=sys.stderr.isatty())
    if args.command == "train":
        result = commands.handle_train(args.checkpoint, args.loss_output)
    elif args.command == "sweep-snr":
        result = commands.handle_sweep_snr()
    elif args.command == "sweep-csi":
        result = commands.handle_sweep_csi(args.snr)
    elif args.command == "evaluate":
        result = commands.handle_evaluate(args.checkpoint, args.snr, args.sigma_e)
    elif args.command == "bench":
        result = commands.handle_bench(args.k or [16, 32], args.repetitions)
    else:
        result = commands.handle_selftest()

    _print_result(result)
    return result['exit_code']


def main():
    """Main entry point."""
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
