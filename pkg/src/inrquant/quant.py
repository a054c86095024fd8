"""Weight quantization maps and layer-wise quantization error.

Four schemes are supported: ``explicit_unit`` (fixed uniform grid on
[-1, 1]), ``distributional`` (uniform within d standard deviations of the
layer mean), ``minmax`` (uniform between the layer extremes) and ``kmeans``
(centroids of the optimal 1D clustering).  Every map assigns a value to its
nearest level, with exact midpoints going to the lower level, so values
outside the level range clamp to the boundary levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .kmeans1d import kmeans_1d

METHODS = ("explicit_unit", "distributional", "minmax", "kmeans")


def _check_bits(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1 or k > 16:
        raise ConfigurationError(f"bits must be an integer in [1, 16], got {k!r}")


@dataclass(frozen=True, eq=False)
class QuantizationMap:
    levels: np.ndarray
    method: str
    bits: int

    def __post_init__(self):
        levels = np.unique(np.asarray(self.levels, dtype=np.float64))
        if levels.size == 0:
            raise ConfigurationError("a quantization map needs at least one level")
        if levels.size > 2**self.bits:
            raise ConfigurationError(f"{levels.size} levels exceed 2^{self.bits}")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return self.levels.size

    def indices(self, w) -> np.ndarray:
        return assign_indices(w, self.levels)

    def __call__(self, w) -> np.ndarray:
        return apply_map(w, self)


@dataclass(frozen=True, eq=False)
class LayerQuantState:
    """One map per weight matrix, plus each layer's error when its map was built."""

    maps: tuple[QuantizationMap, ...]
    ref_errors: tuple[float, ...] = field(default=())

    def __len__(self):
        return len(self.maps)


def assign_indices(w, levels: np.ndarray) -> np.ndarray:
    """Index of the nearest level for every value (ties to the lower level)."""
    w = np.asarray(w, dtype=np.float64)
    if levels.size == 1:
        return np.zeros(w.shape, dtype=np.int64)
    pos = np.clip(np.searchsorted(levels, w, side="left"), 1, levels.size - 1)
    lo = levels[pos - 1]
    hi = levels[pos]
    return np.where(hi - w < w - lo, pos, pos - 1)


def apply_map(w, qmap: QuantizationMap) -> np.ndarray:
    return qmap.levels[assign_indices(w, qmap.levels)]


def quantize_explicit(x, k: int):
    """Uniform k-bit quantizer on [-1, 1]; inputs are clamped first.

    ``q_k(x) = 2 * (round((2^k - 1) * (x + 1) / 2) / (2^k - 1) - 1/2)`` with
    round-half-up.
    """
    _check_bits(k)
    steps = 2**k - 1
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    q = 2.0 * (np.floor(steps * (x + 1.0) / 2.0 + 0.5) / steps - 0.5)
    return q if q.ndim else float(q)


def explicit_levels(k: int) -> np.ndarray:
    _check_bits(k)
    steps = 2**k - 1
    return 2.0 * (np.arange(steps + 1) / steps - 0.5)


def distributional_width(k: int) -> float:
    """Number of standard deviations covered at ``k`` bits: 3 + 3(k-1)/15."""
    return 3.0 + 3.0 * (k - 1) / 15.0


def build_explicit_map(k: int) -> QuantizationMap:
    return QuantizationMap(explicit_levels(k), "explicit_unit", k)


def build_distributional_map(w, k: int) -> QuantizationMap:
    _check_bits(k)
    w = np.asarray(w, dtype=np.float64).ravel()
    mu = float(w.mean())
    sigma = float(w.std())
    if sigma == 0.0:
        return QuantizationMap(np.array([mu]), "distributional", k)
    d = distributional_width(k)
    return QuantizationMap(np.linspace(mu - d * sigma, mu + d * sigma, 2**k), "distributional", k)


def build_minmax_map(w, k: int) -> QuantizationMap:
    _check_bits(k)
    w = np.asarray(w, dtype=np.float64).ravel()
    lo, hi = float(w.min()), float(w.max())
    if lo == hi:
        return QuantizationMap(np.array([lo]), "minmax", k)
    return QuantizationMap(np.linspace(lo, hi, 2**k), "minmax", k)


def build_kmeans_map(w, k: int) -> QuantizationMap:
    _check_bits(k)
    centroids, _ = kmeans_1d(w, 2**k)
    return QuantizationMap(centroids, "kmeans", k)


def build_map(w, method: str, k: int) -> QuantizationMap:
    if method == "explicit_unit":
        return build_explicit_map(k)
    if method == "distributional":
        return build_distributional_map(w, k)
    if method == "minmax":
        return build_minmax_map(w, k)
    if method == "kmeans":
        return build_kmeans_map(w, k)
    raise ConfigurationError(f"unknown quantization method {method!r}")


def layer_error(w, qmap: QuantizationMap) -> float:
    """Squared L2 distance between a layer and its quantized image."""
    w = np.asarray(w, dtype=np.float64)
    e = w - apply_map(w, qmap)
    return float(np.sum(e * e))


def tlqe(weights, state: LayerQuantState) -> float:
    """Total layer-wise quantization error over all weight matrices.

    ``weights`` may be a :class:`~inrquant.net.WeightSet` or a list of arrays.
    """
    mats = getattr(weights, "weights", weights)
    if len(mats) != len(state.maps):
        raise ConfigurationError(f"{len(mats)} layers but {len(state.maps)} maps")
    return sum(layer_error(w, q) for w, q in zip(mats, state.maps))


def build_state(weights, method: str, k: int) -> LayerQuantState:
    mats = getattr(weights, "weights", weights)
    maps = tuple(build_map(w, method, k) for w in mats)
    return LayerQuantState(maps, tuple(layer_error(w, q) for w, q in zip(mats, maps)))


def quantize_weights(weights, state: LayerQuantState) -> list[np.ndarray]:
    mats = getattr(weights, "weights", weights)
    if len(mats) != len(state.maps):
        raise ConfigurationError(f"{len(mats)} layers but {len(state.maps)} maps")
    return [apply_map(w, q) for w, q in zip(mats, state.maps)]
