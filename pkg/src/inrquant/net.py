"""Dense coordinate MLP with hand-written reverse mode and Adam.

Layers map ``x @ W + b``; every hidden layer is followed by the configured
activation and the last layer is linear.  Weight matrices are stored as
``(fan_in, fan_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TrainingFault

ACTIVATIONS = ("sine", "relu", "gaussian")
LOSSES = ("mse", "log10_mse")
MSE_FLOOR = 1e-12


@dataclass(frozen=True)
class NetworkArch:
    hidden_layers: int = 1
    hidden_width: int = 20
    activation: str = "sine"
    omega: float = 30.0
    sigma: float = 1.0
    input_dim: int = 2
    output_dim: int = 3
    num_frequencies: int = 0  # 0 disables positional encoding

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.hidden_layers < 0:
            raise ConfigurationError("hidden_layers must be >= 0")
        for name in ("hidden_width", "input_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.num_frequencies < 0:
            raise ConfigurationError("num_frequencies must be >= 0")
        if self.activation == "gaussian" and self.sigma <= 0:
            raise ConfigurationError("gaussian sigma must be positive")

    @property
    def encoded_dim(self) -> int:
        if self.num_frequencies:
            return self.input_dim * 2 * self.num_frequencies
        return self.input_dim

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.encoded_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_weights(self) -> int:
        return sum(a * b for a, b in self.layer_shapes)

    def to_dict(self) -> dict:
        return {
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "activation": self.activation,
            "omega": self.omega,
            "sigma": self.sigma,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "num_frequencies": self.num_frequencies,
        }


@dataclass
class WeightSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __len__(self):
        return len(self.weights)

    def copy(self) -> "WeightSet":
        return WeightSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "WeightSet":
        return WeightSet(
            [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases]
        )

    def zeros_like(self) -> "WeightSet":
        return WeightSet(
            [np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases]
        )

    def arrays(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def equals(self, other: "WeightSet") -> bool:
        """Bitwise equality of every array."""
        if len(self) != len(other):
            return False
        return all(
            a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in zip(self.arrays(), other.arrays())
        )


def check_shapes(arch: NetworkArch, ws: WeightSet) -> None:
    shapes = arch.layer_shapes
    if len(ws.weights) != len(shapes) or len(ws.biases) != len(shapes):
        raise ConfigurationError(
            f"expected {len(shapes)} layers, got {len(ws.weights)} weights / {len(ws.biases)} biases"
        )
    for i, ((fi, fo), w, b) in enumerate(zip(shapes, ws.weights, ws.biases)):
        if w.shape != (fi, fo) or b.shape != (fo,):
            raise ConfigurationError(
                f"layer {i}: expected W{(fi, fo)} b{(fo,)}, got W{w.shape} b{b.shape}"
            )


def init_weights(arch: NetworkArch, rng: np.random.Generator) -> WeightSet:
    """SIREN-style initialization; biases follow the usual ±1/sqrt(fan_in)."""
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(arch.layer_shapes):
        if arch.activation == "sine":
            bound = 1.0 / fan_in if i == 0 else math.sqrt(6.0 / fan_in) / arch.omega
        else:
            bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bb = 1.0 / math.sqrt(fan_in)
        biases.append(rng.uniform(-bb, bb, size=fan_out))
    return WeightSet(weights, biases)


def positional_encode(x, num_frequencies: int) -> np.ndarray:
    """Encode each coordinate as ``(sin(2^j pi x), cos(2^j pi x))`` pairs.

    Works on a single vector or on a batch ``(n, d)``; output has
    ``d * 2 * num_frequencies`` features ordered coordinate-major, then
    frequency, then (sin, cos).
    """
    if num_frequencies < 1:
        raise ConfigurationError("num_frequencies must be >= 1")
    x = np.asarray(x)
    freqs = (2.0 ** np.arange(num_frequencies)) * np.pi
    angles = x[..., :, None] * freqs.astype(x.dtype if x.dtype.kind == "f" else np.float64)
    out = np.stack([np.sin(angles), np.cos(angles)], axis=-1)
    return out.reshape(*x.shape[:-1], x.shape[-1] * 2 * num_frequencies)


def _activate(arch: NetworkArch, z: np.ndarray) -> np.ndarray:
    if arch.activation == "sine":
        return np.sin(arch.omega * z)
    if arch.activation == "relu":
        return np.maximum(z, 0)
    return np.exp(-(z * z) / (2.0 * arch.sigma**2))


def _activate_grad(arch: NetworkArch, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if arch.activation == "sine":
        return arch.omega * np.cos(arch.omega * z)
    if arch.activation == "relu":
        return (z > 0).astype(z.dtype)
    return -z / arch.sigma**2 * a


def _prepare_input(arch: NetworkArch, coords, dtype) -> np.ndarray:
    x = np.asarray(coords, dtype=dtype)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ConfigurationError(
            f"coords must have shape (n, {arch.input_dim}), got {x.shape}"
        )
    if arch.num_frequencies:
        x = positional_encode(x, arch.num_frequencies)
    return x


def _forward_cache(arch, ws, coords):
    check_shapes(arch, ws)
    x = _prepare_input(arch, coords, ws.weights[0].dtype)
    inputs, pre = [], []
    h = x
    last = len(ws.weights) - 1
    for i, (w, b) in enumerate(zip(ws.weights, ws.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if i == last else _activate(arch, z)
    return h, inputs, pre


def forward(arch: NetworkArch, ws: WeightSet, coords) -> np.ndarray:
    """Evaluate the network on a batch of raw coordinates ``(n, input_dim)``.

    Computation runs in the dtype of the weights, so a float32 weight set
    gives a float32 evaluation.
    """
    return _forward_cache(arch, ws, coords)[0]


def loss_value(pred: np.ndarray, targets: np.ndarray, loss: str = "mse") -> float:
    mse = float(np.mean((pred - targets) ** 2))
    if loss == "mse":
        return mse
    if loss == "log10_mse":
        return math.log10(max(mse, MSE_FLOOR))
    raise ConfigurationError(f"unknown loss {loss!r}")


def backward(arch: NetworkArch, ws: WeightSet, coords, targets, loss: str = "mse"):
    """Return ``(loss, grads)`` for a full batch.

    ``mse`` is the mean over all output elements.  ``log10_mse`` is
    ``log10(mse)`` (the negated, unscaled PSNR), whose gradient is the mse
    gradient divided by ``mse * ln 10``.
    """
    if loss not in LOSSES:
        raise ConfigurationError(f"unknown loss {loss!r}")
    out, inputs, pre = _forward_cache(arch, ws, coords)
    targets = np.asarray(targets, dtype=out.dtype)
    if targets.shape != out.shape:
        raise ConfigurationError(f"targets shape {targets.shape} != output shape {out.shape}")
    diff = out - targets
    mse = float(np.mean(diff * diff))
    if not math.isfinite(mse):
        raise TrainingFault("non-finite loss")
    grad = diff * (2.0 / diff.size)
    if loss == "mse":
        value = mse
    else:
        value = math.log10(max(mse, MSE_FLOOR))
        grad = grad / (mse * math.log(10.0)) if mse > MSE_FLOOR else np.zeros_like(grad)

    n = len(ws.weights)
    gw: list[np.ndarray] = [None] * n
    gb: list[np.ndarray] = [None] * n
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            z = pre[i]
            grad = grad * _activate_grad(arch, z, inputs[i + 1])
        gw[i] = inputs[i].T @ grad
        gb[i] = grad.sum(axis=0)
        if i:
            grad = grad @ ws.weights[i].T
    return value, WeightSet(gw, gb)


@dataclass
class AdamState:
    m: WeightSet
    v: WeightSet
    t: int = 0

    @classmethod
    def zeros(cls, ws: WeightSet) -> "AdamState":
        return cls(ws.zeros_like(), ws.zeros_like(), 0)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.99
    beta2: float = 0.999
    weight_decay: float = 1e-8
    eps: float = 1e-8


def adam_step(
    params: WeightSet,
    grads: WeightSet,
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.99,
    beta2: float = 0.999,
    weight_decay: float = 1e-8,
    eps: float = 1e-8,
) -> WeightSet:
    """One bias-corrected Adam update with L2 weight decay added to the gradient.

    Moments in ``state`` are advanced in place; the returned weight set is new.
    """
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    new = []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if weight_decay:
            g = g + weight_decay * p
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        new.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
    k = len(params.weights)
    return WeightSet(new[:k], new[k:])
