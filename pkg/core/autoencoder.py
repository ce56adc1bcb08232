"""
RIS Link Simulator - End-to-End Autoencoder
Encoder, RIS network and decoder trained jointly through the fixed RIS
channel, with per-stream cross-entropy losses weighted adaptively.

Forward chain for one mini-batch:

    CSI estimate -> RIS net -> theta -> H_eff (estimated cascade)
    [one-hot bits, H_eff] -> encoder -> power normalization -> x
    x -> true RIS channel + AWGN -> y -> decoder -> per-stream logits

The decoder sees only ``y``; it gets no channel knowledge.
"""

import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .ber import BerPoint
from .channel import (ChannelPair, CsiModel, NoiseModel, PhaseConfig, corrupt_csi,
                      sample_channel_batch)
from .config import SystemDims, TrainConfig
from .errors import (CheckpointCorruptError, CheckpointDimensionError, CheckpointError,
                     CheckpointVersionError, ConfigError, DimensionError)
from .modem import bits_to_onehot, count_bit_errors, indices_to_bits, random_bits
from .neural_net import (AdamState, CascadedChannelLayer, ComplexChannelLayer, PowerNormalization,
                         Sequential, adam_step, build_mlp, softmax_cross_entropy, stack_matrices,
                         unstack_complex)
from .streams import spawn_streams

logger = logging.getLogger(__name__)

ENCODER_HIDDEN = (1024, 1024)
RIS_HIDDEN = (256, 256, 256)
DECODER_HIDDEN = (512, 512)
ALPHA_TOL = 1e-9

CHECKPOINT_MAGIC = b"RISAECKP"
CHECKPOINT_VERSION = 1


@dataclass
class ForwardResult:
    logits: np.ndarray
    theta: np.ndarray
    x: np.ndarray

    @property
    def tx_power(self) -> float:
        """Batch-average squared norm ``(1/B) sum ||x_i||^2``."""
        return float(np.mean(np.sum(np.abs(self.x) ** 2, axis=1)))


class AutoencoderModel:
    """The three networks of the end-to-end link plus the untrainable link layers."""

    def __init__(self, dims: SystemDims, P: float = 4.0, normalization: str = "paper",
                 rng: Optional[np.random.Generator] = None,
                 hidden_widths: Optional[Dict[str, Sequence[int]]] = None):
        self.dims = dims.validate()
        rng = rng if rng is not None else np.random.default_rng()
        hidden = {"encoder": ENCODER_HIDDEN, "ris_net": RIS_HIDDEN, "decoder": DECODER_HIDDEN}
        hidden.update({k: tuple(v) for k, v in (hidden_widths or {}).items()})
        unknown = set(hidden) - {"encoder", "ris_net", "decoder"}
        if unknown:
            raise ConfigError(f"unknown network name(s) in hidden_widths: {sorted(unknown)}")
        self.hidden_widths = hidden

        d = dims
        self.encoder = build_mlp([d.M * d.n_s + 2 * d.n_t * d.n_r, *hidden["encoder"], 2 * d.n_t], rng)
        self.ris_net = build_mlp([2 * d.K * d.n_t + 2 * d.K * d.n_r, *hidden["ris_net"], d.K], rng,
                                 output="sigmoid")
        self.decoder = build_mlp([2 * d.n_r, *hidden["decoder"], d.M * d.n_s], rng, output_init="small")
        self.power_norm = PowerNormalization(P, normalization)
        self.cascade = CascadedChannelLayer()
        self.channel = ComplexChannelLayer()

    @property
    def P(self) -> float:
        return self.power_norm.P

    @property
    def normalization(self) -> str:
        return self.power_norm.mode

    @property
    def networks(self) -> Dict[str, Sequential]:
        return {"encoder": self.encoder, "ris_net": self.ris_net, "decoder": self.decoder}

    def parameters(self) -> List[np.ndarray]:
        return [p for net in self.networks.values() for p in net.parameters()]

    def gradients(self) -> List[np.ndarray]:
        return [g for net in self.networks.values() for g in net.gradients()]

    def state_arrays(self) -> List[Tuple[str, np.ndarray]]:
        return [(f"{name}.{key}", arr) for name, net in self.networks.items()
                for key, arr in net.state_arrays()]

    def train(self):
        for net in self.networks.values():
            net.train()

    def eval(self):
        for net in self.networks.values():
            net.eval()

    # ---- the three networks ------------------------------------------------

    def ris_net_forward(self, csi_estimate: ChannelPair) -> PhaseConfig:
        """Phases ``theta = 2 pi sigmoid(z) - pi`` predicted from the estimated channels."""
        csi = _as_batch(csi_estimate)
        csi.check_dims(self.dims.K, self.dims.n_t, self.dims.n_r)
        features = np.concatenate([stack_matrices(csi.G), stack_matrices(csi.H)], axis=1)
        activation = self.ris_net.forward(features)
        return PhaseConfig(2.0 * np.pi * activation - np.pi)

    def encoder_forward(self, onehot, H_eff, P: Optional[float] = None) -> np.ndarray:
        """Power-normalized complex transmit signals ``(B, N_t)``.

        ``H_eff`` is either complex ``(B, N_r, N_t)`` or already stacked. An
        explicit ``P`` scales this call only; the model keeps its own.
        """
        power_norm = self.power_norm if P is None else PowerNormalization(P, self.normalization)
        onehot = np.asarray(onehot, dtype=np.float64)
        batch = onehot.shape[0]
        H_eff = np.asarray(H_eff)
        stacked = stack_matrices(H_eff) if np.iscomplexobj(H_eff) else H_eff.astype(np.float64)
        features = np.concatenate([onehot.reshape(batch, -1), stacked], axis=1)
        expected = self.dims.M * self.dims.n_s + 2 * self.dims.n_t * self.dims.n_r
        if features.shape[1] != expected:
            raise DimensionError(f"encoder input width {features.shape[1]}, expected {expected}")
        return unstack_complex(power_norm.forward(self.encoder.forward(features)))

    def decoder_forward(self, y) -> np.ndarray:
        """Per-stream logits ``(B, N_s, M)`` from the received signals alone."""
        y = np.asarray(y)
        stacked = np.concatenate([y.real, y.imag], axis=1) if np.iscomplexobj(y) else y
        if stacked.ndim != 2 or stacked.shape[1] != 2 * self.dims.n_r:
            raise DimensionError(f"decoder input must be (B, {2 * self.dims.n_r}) after stacking, got {stacked.shape}")
        logits = self.decoder.forward(stacked)
        return logits.reshape(-1, self.dims.n_s, self.dims.M)

    # ---- full chain --------------------------------------------------------

    def forward(self, onehot, true: ChannelPair, csi: ChannelPair, noise: Optional[NoiseModel],
                rng: Optional[np.random.Generator]) -> ForwardResult:
        batch = np.shape(onehot)[0]
        if true.batch_size != batch or csi.batch_size != batch:
            raise DimensionError("one channel realization per symbol vector is required")
        theta = self.ris_net_forward(csi).theta
        H_eff = self.cascade.forward(theta, csi)
        x = self.encoder_forward(onehot, H_eff)
        y = self.channel.forward(np.concatenate([x.real, x.imag], axis=1), theta, true,
                                 self.P, self.dims.n_s, noise, rng)
        logits = self.decoder_forward(y)
        return ForwardResult(logits=logits, theta=theta, x=x)

    def backward(self, grad_logits: np.ndarray):
        """Backpropagate through all three networks; gradients land in each layer."""
        batch = grad_logits.shape[0]
        d = self.dims
        grad_y = self.decoder.backward(grad_logits.reshape(batch, d.n_s * d.M))
        grad_x = self.channel.backward(grad_y)
        grad_theta = self.channel.grad_theta
        grad_features = self.encoder.backward(self.power_norm.backward(grad_x))
        grad_theta = grad_theta + self.cascade.backward(grad_features[:, d.M * d.n_s:])
        self.ris_net.backward(2.0 * np.pi * grad_theta)


def _as_batch(pair: ChannelPair) -> ChannelPair:
    if pair.batch_size is None:
        return ChannelPair(pair.G[None], pair.H[None])
    return pair


# ---------------------------------------------------------------------------
# loss weighting
# ---------------------------------------------------------------------------

def compute_loss(logits, targets, alpha) -> Tuple[float, np.ndarray, np.ndarray]:
    """``L_AE = sum_i alpha_i L_i`` over the per-stream cross-entropies.

    Returns ``(L_AE, L, dL_AE/dlogits)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if logits.ndim != 3 or logits.shape != targets.shape:
        raise DimensionError(f"logits {logits.shape} and targets {targets.shape} must both be (B, N_s, M)")
    n_s = logits.shape[1]
    if alpha.shape != (n_s,) or np.any(alpha < 0) or abs(alpha.sum() - 1.0) > ALPHA_TOL:
        raise ConfigError(f"loss weights must be {n_s} non-negative numbers summing to 1, got {alpha}")
    losses = np.zeros(n_s)
    grad = np.zeros_like(logits)
    for i in range(n_s):
        losses[i], g = softmax_cross_entropy(logits[:, i, :], targets[:, i, :])
        grad[:, i, :] = alpha[i] * g
    return float(alpha @ losses), losses, grad


def update_alpha(prev_losses) -> np.ndarray:
    """Weights proportional to the previous mini-batch's stream losses.

    Normalized by the plain sum so the weights add up to one; uniform when
    every loss is zero.
    """
    losses = np.asarray(prev_losses, dtype=np.float64)
    if np.any(losses < 0) or not np.all(np.isfinite(losses)):
        raise ConfigError(f"stream losses must be finite and non-negative, got {losses}")
    total = losses.sum()
    if total == 0:
        return np.full(losses.shape, 1.0 / losses.size)
    return losses / total


@dataclass
class LossTrace:
    l_ae: List[float] = field(default_factory=list)
    stream_losses: List[np.ndarray] = field(default_factory=list)
    alphas: List[np.ndarray] = field(default_factory=list)
    tx_power: List[float] = field(default_factory=list)

    def record(self, l_ae: float, losses: np.ndarray, alpha: np.ndarray, tx_power: float):
        self.l_ae.append(float(l_ae))
        self.stream_losses.append(np.array(losses, dtype=np.float64))
        self.alphas.append(np.array(alpha, dtype=np.float64))
        self.tx_power.append(float(tx_power))

    def __len__(self) -> int:
        return len(self.l_ae)

    @property
    def n_s(self) -> int:
        return self.stream_losses[0].size if self.stream_losses else 0

    def losses_array(self) -> np.ndarray:
        return np.array(self.stream_losses)

    def window_mean(self, fraction: float, last: bool) -> float:
        """Mean ``L_AE`` over the first or last ``fraction`` of iterations."""
        count = max(1, int(round(len(self) * fraction)))
        window = self.l_ae[-count:] if last else self.l_ae[:count]
        return float(np.mean(window))


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

def train(config: TrainConfig, rng: Optional[np.random.Generator] = None,
          progress: bool = False) -> Tuple[AutoencoderModel, LossTrace]:
    """Joint SGD (Adam) over fresh symbols and channels every mini-batch."""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    init_rng, data_rng = spawn_streams(rng, 2)
    dims = config.dims
    model = AutoencoderModel(dims, config.P, config.normalization, init_rng, config.hidden_widths)
    model.train()
    optimizer = AdamState(lr=config.lr)
    noise = NoiseModel.from_snr_db(config.train_snr_db, config.P)
    csi_model = CsiModel(config.sigma_e)
    alpha = np.full(dims.n_s, 1.0 / dims.n_s)
    trace = LossTrace()
    batch = config.batch_size

    logger.info("training autoencoder: %s, %d iterations of %d", dims, config.iterations, batch)
    iterations = tqdm(range(config.iterations), desc="training", disable=not progress)
    for iteration in iterations:
        bits = random_bits(data_rng, (batch, dims.bits_per_vector))
        onehot = bits_to_onehot(bits, dims.M, dims.n_s)
        true = sample_channel_batch(data_rng, batch, dims.K, dims.n_t, dims.n_r)
        csi = corrupt_csi(true, csi_model, data_rng)

        result = model.forward(onehot, true, csi, noise, data_rng)
        l_ae, losses, grad = compute_loss(result.logits, onehot, alpha)
        trace.record(l_ae, losses, alpha, result.tx_power)
        model.backward(grad)
        adam_step(optimizer, model.parameters(), model.gradients())
        alpha = update_alpha(losses)

        if progress:
            iterations.set_postfix(loss=f"{l_ae:.4f}")
        if iteration % 100 == 0:
            logger.debug("iteration %d: L_AE=%.5f, L=%s, alpha=%s", iteration, l_ae, losses, trace.alphas[-1])

    model.eval()
    logger.info("training done: L_AE %.4f -> %.4f", trace.l_ae[0], trace.l_ae[-1])
    return model, trace


def evaluate_ber(model: AutoencoderModel, snr_db: float, sigma_e: float, n_bits: int,
                 rng: np.random.Generator, batch_size: int = 1000) -> BerPoint:
    """Monte Carlo BER of a trained model over fresh channels.

    Runs full batches of ``batch_size`` symbol vectors (the power
    normalization is batch-coupled) and counts exactly
    ``ceil(n_bits / bits_per_vector)`` vectors.
    """
    dims = model.dims
    model.eval()
    noise = NoiseModel.from_snr_db(snr_db, model.P)
    csi_model = CsiModel(sigma_e)
    vectors = -(-n_bits // dims.bits_per_vector)
    n_batches = -(-vectors // batch_size)
    start = time.perf_counter()
    errors = 0
    counted = 0
    for stream in spawn_streams(rng, n_batches):
        bits = random_bits(stream, (batch_size, dims.bits_per_vector))
        onehot = bits_to_onehot(bits, dims.M, dims.n_s)
        true = sample_channel_batch(stream, batch_size, dims.K, dims.n_t, dims.n_r)
        csi = corrupt_csi(true, csi_model, stream)
        result = model.forward(onehot, true, csi, noise, stream)
        bits_rx = indices_to_bits(np.argmax(result.logits, axis=2), dims.M)
        take = min(batch_size, vectors - counted)
        errors += count_bit_errors(bits[:take], bits_rx[:take])
        counted += take
    elapsed_ms = 1000.0 * (time.perf_counter() - start)
    return BerPoint(snr_db=snr_db, sigma_e=sigma_e, n_bits=counted * dims.bits_per_vector,
                    n_errors=errors, wall_time_ms=elapsed_ms, method="autoencoder")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
#
# Layout: 8-byte magic, uint32 version, uint32 header length, UTF-8 JSON
# header, then every array as little-endian float64 in header order.
# The header carries the dimension tuple (n_t, n_r, n_s, K, M), P, the
# normalization mode, hidden widths, array names/shapes and a CRC-32 of the
# payload. A sidecar "<path>.manifest.txt" lists the arrays for humans.

def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.txt")


def save_checkpoint(model: AutoencoderModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = model.state_arrays()
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    header = {
        "dims": list(model.dims.as_tuple()),
        "P": model.P,
        "normalization": model.normalization,
        "hidden_widths": {k: list(v) for k, v in model.hidden_widths.items()},
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
        "crc32": zlib.crc32(payload),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
    with open(manifest_path(path), "w", encoding="utf-8") as f:
        f.write(f"version {CHECKPOINT_VERSION}\n")
        f.write("dims n_t={} n_r={} n_s={} K={} M={}\n".format(*model.dims.as_tuple()))
        for name, arr in arrays:
            f.write(f"{name} {'x'.join(str(s) for s in arr.shape) or 'scalar'}\n")
    logger.info("checkpoint saved to %s (%d arrays)", path, len(arrays))
    return path


def load_checkpoint(path, expected_dims: Optional[SystemDims] = None) -> AutoencoderModel:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    prefix = len(CHECKPOINT_MAGIC) + 8
    if len(raw) < prefix or raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointCorruptError(f"{path} is not a checkpoint file")
    version, header_len = struct.unpack("<II", raw[len(CHECKPOINT_MAGIC):prefix])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path} has format version {version}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(raw[prefix:prefix + header_len].decode("utf-8"))
        dims = SystemDims(*header["dims"])
        specs = header["arrays"]
        crc = header["crc32"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointCorruptError(f"{path} has an unreadable header: {e}") from e
    payload = raw[prefix + header_len:]
    if zlib.crc32(payload) != crc:
        raise CheckpointCorruptError(f"{path} payload checksum mismatch")

    if expected_dims is not None and dims != expected_dims:
        raise CheckpointDimensionError(
            f"{path} holds a model for dims {dims.as_tuple()}, expected {expected_dims.as_tuple()}")

    model = AutoencoderModel(dims, header.get("P", 4.0), header.get("normalization", "paper"),
                             hidden_widths=header.get("hidden_widths"))
    targets = model.state_arrays()
    if [s["name"] for s in specs] != [name for name, _ in targets]:
        raise CheckpointDimensionError(f"{path} array layout does not match dims {dims.as_tuple()}")
    offset = 0
    for spec, (name, target) in zip(specs, targets):
        shape = tuple(spec["shape"])
        if shape != target.shape:
            raise CheckpointDimensionError(f"{name}: stored shape {shape}, model expects {target.shape}")
        count = int(np.prod(shape))
        chunk = payload[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise CheckpointCorruptError(f"{path} is truncated at array {name}")
        target[...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += 8 * count
    if offset != len(payload):
        raise CheckpointCorruptError(f"{path} has {len(payload) - offset} trailing bytes")
    model.eval()
    return model
