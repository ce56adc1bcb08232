"""
RIS Link Simulator - Neural Network Core
Dense networks on numpy with hand-derived backpropagation: fully connected,
batch-norm, ReLU and sigmoid layers, softmax cross-entropy, Adam, and the two
custom layers of the end-to-end link (batch power normalization and the
fixed complex RIS channel).

Every module follows the same contract:

    y = layer.forward(x)          # caches what backward needs
    grad_x = layer.backward(g)    # fills layer.grads, returns dL/dx

Complex signals cross into the networks as stacked real vectors
``[Re(z_1..z_n), Im(z_1..z_n)]``; complex matrices are stacked as the
row-major real part followed by the row-major imaginary part.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .channel import ChannelPair, NoiseModel
from .errors import BackwardBeforeForwardError, DimensionError, NonFiniteError
from .modem import onehot_indices

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5
SMALL_INIT_STD = 0.01


# ---------------------------------------------------------------------------
# complex <-> real stacking
# ---------------------------------------------------------------------------

def stack_complex(z) -> np.ndarray:
    """``(B, n)`` complex -> ``(B, 2n)`` real."""
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1).astype(np.float64)


def unstack_complex(x) -> np.ndarray:
    """``(B, 2n)`` real -> ``(B, n)`` complex."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise DimensionError(f"stacked width must be even, got {x.shape[-1]}")
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def stack_matrices(A) -> np.ndarray:
    """``(B, r, c)`` complex -> ``(B, 2rc)`` real."""
    A = np.asarray(A)
    flat = A.reshape(A.shape[0], -1)
    return stack_complex(flat)


def unstack_matrices(x, rows: int, cols: int) -> np.ndarray:
    return unstack_complex(x).reshape(-1, rows, cols)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Module:
    """Base layer: parameters, their gradients and a training flag."""

    def __init__(self):
        self.training = True
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise BackwardBeforeForwardError(f"{self!r}: backward called before forward")
        return self._cache

    def parameters(self) -> List[np.ndarray]:
        return []

    def gradients(self) -> List[np.ndarray]:
        return []

    def state_arrays(self) -> List[Tuple[str, np.ndarray]]:
        """Every array a checkpoint must restore, in a fixed order."""
        return []

    def train(self):
        self.training = True

    def eval(self):
        self.training = False


class Dense(Module):
    """Fully connected ``y = x W^T + b``."""

    def __init__(self, n_in: int, n_out: int, rng: Optional[np.random.Generator] = None,
                 init: str = "he"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng()
        if init == "he":
            std = np.sqrt(2.0 / n_in)
        elif init == "glorot":
            std = np.sqrt(2.0 / (n_in + n_out))
        elif init == "small":
            std = SMALL_INIT_STD
        else:
            raise ValueError(f"unknown init '{init}'")
        self.W = rng.normal(0.0, std, size=(n_out, n_in))
        self.b = np.zeros(n_out)
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"Dense {self.n_in}->{self.n_out} got input of shape {x.shape}")
        self._cache = x
        return x @ self.W.T + self.b

    def backward(self, grad_out):
        x = self._cached()
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != (x.shape[0], self.n_out):
            raise DimensionError(f"Dense backward expected {(x.shape[0], self.n_out)}, got {grad_out.shape}")
        self.grad_W = grad_out.T @ x
        self.grad_b = grad_out.sum(axis=0)
        return grad_out @ self.W

    def parameters(self):
        return [self.W, self.b]

    def gradients(self):
        return [self.grad_W, self.grad_b]

    def state_arrays(self):
        return [("W", self.W), ("b", self.b)]

    def __repr__(self):
        return f"Dense({self.n_in} -> {self.n_out})"


class BatchNorm(Module):
    """Per-feature batch normalization with running statistics for inference."""

    def __init__(self, width: int, momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON):
        super().__init__()
        if not 0 < momentum < 1:
            raise ValueError(f"momentum must be in (0, 1), got {momentum}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.grad_gamma = np.zeros(width)
        self.grad_beta = np.zeros(width)

    @property
    def width(self) -> int:
        return self.gamma.shape[0]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.width:
            raise DimensionError(f"BatchNorm({self.width}) got input of shape {x.shape}")
        if self.training:
            batch = x.shape[0]
            if batch < 2:
                raise DimensionError("batch normalization in training mode needs a batch of at least 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            x_hat = (x - mean) * inv_std
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * var * batch / (batch - 1))
            self._cache = ("train", x_hat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            x_hat = (x - self.running_mean) * inv_std
            self._cache = ("infer", x_hat, inv_std)
        return self.gamma * x_hat + self.beta

    def backward(self, grad_out):
        mode, x_hat, inv_std = self._cached()
        grad_out = np.asarray(grad_out, dtype=np.float64)
        self.grad_gamma = np.sum(grad_out * x_hat, axis=0)
        self.grad_beta = grad_out.sum(axis=0)
        g_hat = grad_out * self.gamma
        if mode == "infer":
            return g_hat * inv_std
        batch = x_hat.shape[0]
        return (inv_std / batch) * (batch * g_hat - g_hat.sum(axis=0)
                                    - x_hat * np.sum(g_hat * x_hat, axis=0))

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]

    def state_arrays(self):
        return [("gamma", self.gamma), ("beta", self.beta),
                ("running_mean", self.running_mean), ("running_var", self.running_var)]

    def __repr__(self):
        return f"BatchNorm({self.width})"


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, grad_out) -> np.ndarray:
    return np.asarray(grad_out) * (np.asarray(x) > 0)


def sigmoid(x) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


def sigmoid_backward(y, grad_out) -> np.ndarray:
    """Gradient through the sigmoid given its output ``y``."""
    y = np.asarray(y)
    return np.asarray(grad_out) * y * (1.0 - y)


class ReLU(Module):
    def forward(self, x):
        self._cache = np.asarray(x, dtype=np.float64)
        return relu(self._cache)

    def backward(self, grad_out):
        return relu_backward(self._cached(), grad_out)

    def __repr__(self):
        return "ReLU"


class Sigmoid(Module):
    def forward(self, x):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad_out):
        return sigmoid_backward(self._cached(), grad_out)

    def __repr__(self):
        return "Sigmoid"


class Sequential(Module):
    """Layers applied in order; backward runs them in reverse."""

    def __init__(self, layers: Sequence[Module]):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def state_arrays(self):
        return [(f"{i}.{name}", arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.state_arrays()]

    def load_state_arrays(self, arrays: Sequence[np.ndarray]):
        """Copy arrays (in ``state_arrays`` order) into this network in place."""
        targets = self.state_arrays()
        if len(targets) != len(arrays):
            raise DimensionError(f"expected {len(targets)} arrays, got {len(arrays)}")
        for (name, target), value in zip(targets, arrays):
            value = np.asarray(value, dtype=np.float64)
            if value.shape != target.shape:
                raise DimensionError(f"{name}: expected shape {target.shape}, got {value.shape}")
            target[...] = value

    def train(self):
        self.training = True
        for layer in self.layers:
            layer.train()

    def eval(self):
        self.training = False
        for layer in self.layers:
            layer.eval()

    @property
    def widths(self) -> List[int]:
        dense = [layer for layer in self.layers if isinstance(layer, Dense)]
        return [dense[0].n_in] + [layer.n_out for layer in dense]

    def __repr__(self):
        return " -> ".join(repr(layer) for layer in self.layers)


def build_mlp(widths: Sequence[int], rng: np.random.Generator, output: Optional[str] = None,
              momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON,
              output_init: str = "glorot") -> Sequential:
    """Dense -> BatchNorm -> ReLU for every hidden width, then a final Dense.

    Hidden layers use He initialization; the output layer uses ``output_init``
    (Glorot by default, ``'small'`` for near-uniform initial logits) and an
    optional ``'sigmoid'`` activation.
    """
    if len(widths) < 2:
        raise ValueError("an MLP needs at least an input and an output width")
    layers: List[Module] = []
    for n_in, n_out in zip(widths[:-2], widths[1:-1]):
        layers += [Dense(n_in, n_out, rng, init="he"), BatchNorm(n_out, momentum, epsilon), ReLU()]
    layers.append(Dense(widths[-2], widths[-1], rng, init=output_init))
    if output == "sigmoid":
        layers.append(Sigmoid())
    elif output is not None:
        raise ValueError(f"unknown output activation '{output}'")
    return Sequential(layers)


# ---------------------------------------------------------------------------
# loss and optimizer
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits, target) -> Tuple[float, np.ndarray]:
    """Batch-mean cross-entropy of ``softmax(logits)`` against one-hot rows.

    Returns ``(loss, dloss/dlogits)`` with the gradient ``(softmax - target) / B``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape or logits.ndim != 2:
        raise DimensionError(f"logits {logits.shape} and targets {target.shape} must both be (B, M)")
    hot = onehot_indices(target)
    batch = logits.shape[0]
    log_p = log_softmax(logits, axis=1)
    loss = -float(np.mean(log_p[np.arange(batch), hot]))
    grad = (softmax(logits, axis=1) - target) / batch
    return loss, grad


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> Sequence[np.ndarray]:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise DimensionError(f"parameter shape {p.shape} does not match gradient shape {np.shape(g)}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif len(state.m) != len(params):
        raise DimensionError("parameter list changed since the first Adam step")
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# link layers
# ---------------------------------------------------------------------------

NORMALIZATION_MODES = ("paper", "sqrt")
NORMALIZATION_ALIASES = {"rms": "paper"}


def canonical_normalization(mode: str) -> str:
    """Resolve an alias such as ``rms`` to its mode name; unknown names raise ``ValueError``."""
    if isinstance(mode, str):
        mode = NORMALIZATION_ALIASES.get(mode, mode)
    if mode not in NORMALIZATION_MODES:
        raise ValueError(f"normalization must be one of {NORMALIZATION_MODES} (or an alias in "
                         f"{sorted(NORMALIZATION_ALIASES)}), got '{mode}'")
    return mode


class PowerNormalization(Module):
    """Batch-coupled transmit power scaling ``x = c x'`` with
    ``c = target sqrt(B) / sqrt(sum_i ||x'_i||^2)``.

    ``mode='paper'`` (alias ``rms``) uses ``target = P`` (batch-average power ``P^2``);
    ``mode='sqrt'`` uses ``target = sqrt(P)`` (batch-average power ``P``).
    Works on stacked real vectors, whose squared norms equal the complex ones.
    """

    def __init__(self, P: float, mode: str = "paper"):
        super().__init__()
        self.P = P
        self.mode = canonical_normalization(mode)

    @property
    def target(self) -> float:
        return self.P if self.mode == "paper" else np.sqrt(self.P)

    @property
    def average_power(self) -> float:
        return self.target ** 2

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        total = float(np.sum(x ** 2))
        if total <= 0:
            raise NonFiniteError("power normalization of an all-zero batch")
        scale = self.target * np.sqrt(x.shape[0]) / np.sqrt(total)
        self._cache = (x, scale, total)
        return scale * x

    def backward(self, grad_out):
        x, scale, total = self._cached()
        grad_out = np.asarray(grad_out, dtype=np.float64)
        return scale * grad_out - (scale / total) * np.sum(grad_out * x) * x

    def __repr__(self):
        return f"PowerNormalization(P={self.P}, mode={self.mode})"


def power_normalize(x_prime, P: float, mode: str = "paper") -> np.ndarray:
    """Complex ``(B, N_t)`` batch scaled to the normalized transmit power."""
    x_prime = np.asarray(x_prime, dtype=np.complex128)
    out = PowerNormalization(P, mode).forward(stack_complex(x_prime))
    return unstack_complex(out)


class ComplexChannelLayer(Module):
    """Untrainable RIS link ``y_i = sqrt(P/N_s) H_i^H Theta_i G_i x_i + n_i``.

    Input and output are stacked real vectors. The per-sample channels,
    phases and noise are set by :meth:`forward`; backward returns the
    gradient w.r.t. the transmitted signal and stores the gradient w.r.t.
    the phases in ``grad_theta`` (noise is a constant).
    """

    def __init__(self):
        super().__init__()
        self.grad_theta = None

    def forward(self, x, theta=None, pair: Optional[ChannelPair] = None, P: float = 1.0, n_s: int = 1,
                noise: Optional[NoiseModel] = None, rng: Optional[np.random.Generator] = None):
        if pair is None or theta is None:
            raise DimensionError("channel layer needs the per-sample channels and phases")
        x_c = unstack_complex(x)
        theta = np.asarray(theta, dtype=np.float64)
        if pair.batch_size != x_c.shape[0] or x_c.shape[1] != pair.n_t:
            raise DimensionError(f"signal batch {x_c.shape} does not match channels "
                                 f"(B={pair.batch_size}, N_t={pair.n_t})")
        if theta.shape != (x_c.shape[0], pair.K):
            raise DimensionError(f"theta must be (B, K)={(x_c.shape[0], pair.K)}, got {theta.shape}")
        scale = np.sqrt(P / n_s)
        v = np.exp(1j * theta)
        u = np.einsum("bkt,bt->bk", pair.G, x_c)
        y = scale * np.einsum("bkr,bk->br", np.conj(pair.H), v * u)
        if noise is not None:
            if rng is None:
                raise ValueError("a noisy channel layer needs an rng")
            y = y + noise.sample(rng, y.shape)
        self._cache = (pair, v, u, scale)
        return stack_complex(y)

    def backward(self, grad_out):
        pair, v, u, scale = self._cached()
        g = unstack_complex(grad_out)
        w = np.einsum("bkr,br->bk", pair.H, g)
        grad_x = scale * np.einsum("bkt,bk->bt", np.conj(pair.G), np.conj(v) * w)
        self.grad_theta = -scale * np.imag(v * u * np.conj(w))
        return stack_complex(grad_x)

    def __repr__(self):
        return "ComplexChannel"


class CascadedChannelLayer(Module):
    """Estimated cascaded channel ``H_eff = H_hat^H Theta G_hat`` as a function of the phases.

    ``forward`` maps ``theta`` (B, K) to the stacked ``H_eff`` (B, 2 N_r N_t);
    ``backward`` returns the gradient w.r.t. ``theta``.
    """

    def forward(self, theta, csi: Optional[ChannelPair] = None):
        if csi is None:
            raise DimensionError("cascaded channel layer needs the estimated channels")
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (csi.batch_size, csi.K):
            raise DimensionError(f"theta must be (B, K)={(csi.batch_size, csi.K)}, got {theta.shape}")
        v = np.exp(1j * theta)
        H_eff = np.einsum("bkr,bk,bkt->brt", np.conj(csi.H), v, csi.G)
        self._cache = (csi, v)
        return stack_matrices(H_eff)

    def backward(self, grad_out):
        csi, v = self._cached()
        g = unstack_matrices(grad_out, csi.n_r, csi.n_t)
        q = np.einsum("brt,bkr,bkt->bk", np.conj(g), np.conj(csi.H), csi.G)
        return -np.imag(v * q)

    def __repr__(self):
        return "CascadedChannel"


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (``x`` restored afterwards)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        f_plus = f(x)
        flat[i] = original - step
        f_minus = f(x)
        flat[i] = original
        grad_flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
