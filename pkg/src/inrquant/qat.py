"""Quantization-aware training with straight-through gradients.

Each epoch quantizes the full-precision weight matrices with the current
per-layer maps, computes the loss and its gradient at the quantized point,
and applies that gradient to the full-precision weights (the quantizer is
treated as the identity on the backward pass).  Maps are then optionally
rebuilt from the updated weights, either every ``repartition_interval``
epochs or when a layer's error has grown by more than ``delta_threshold``
since its map was built.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import net, quant
from .data import RegressionDataset, outputs_to_image
from .errors import ConfigurationError, TrainingFault
from .metrics import psnr
from .net import AdamConfig, AdamState, NetworkArch, WeightSet
from .quant import LayerQuantState, QuantizationMap

HISTORY_FIELDS = ("epoch", "loss", "psnr", "tlqe", "repartitioned")


@dataclass(frozen=True)
class QatConfig:
    arch: NetworkArch = field(default_factory=NetworkArch)
    method: str = "kmeans"
    bits: int = 3
    epochs: int = 2000
    repartition_interval: int | None = 1  # None keeps the epoch-0 maps
    delta_threshold: float | None = None
    loss: str = "mse"
    seed: int = 0
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    eval_interval: int = 1

    def __post_init__(self):
        if self.method not in quant.METHODS:
            raise ConfigurationError(f"unknown quantization method {self.method!r}")
        if not 1 <= self.bits <= 16:
            raise ConfigurationError("bits must be in [1, 16]")
        if self.repartition_interval is not None and self.repartition_interval < 1:
            raise ConfigurationError("repartition_interval must be >= 1")
        if self.loss not in net.LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.eval_interval < 1:
            raise ConfigurationError("eval_interval must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QatConfig":
        d = dict(d)
        if "arch" in d:
            d["arch"] = NetworkArch(**d["arch"])
        if "optimizer" in d:
            d["optimizer"] = AdamConfig(**d["optimizer"])
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    psnr: float
    tlqe: float
    repartitioned: bool


@dataclass
class TrainedModel:
    config: QatConfig
    weights: WeightSet  # full precision, last epoch
    state: LayerQuantState  # maps at the last epoch
    best_weights: WeightSet  # quantized weights + biases of the best epoch
    best_state: LayerQuantState
    best_psnr: float
    best_epoch: int
    history: list[EpochRecord] = field(default_factory=list)
    repartition_seconds: list[float] = field(default_factory=list)

    @property
    def arch(self) -> NetworkArch:
        return self.config.arch

    @property
    def repartitions(self) -> int:
        return sum(r.repartitioned for r in self.history)


def quantized_weightset(weights: WeightSet, state: LayerQuantState) -> WeightSet:
    return WeightSet(quant.quantize_weights(weights, state), list(weights.biases))


def qat_epoch(
    arch: NetworkArch,
    weights: WeightSet,
    state: LayerQuantState,
    adam: AdamState,
    data: RegressionDataset,
    loss: str = "mse",
    opt: AdamConfig = AdamConfig(),
) -> tuple[float, WeightSet]:
    """One full-batch straight-through step; returns ``(loss, new full-precision weights)``."""
    if len(state) != len(weights):
        raise ConfigurationError("missing quantization maps")
    qws = quantized_weightset(weights, state)
    value, grads = net.backward(arch, qws, data.coords, data.targets, loss)
    new = net.adam_step(
        weights, grads, adam, opt.lr, opt.beta1, opt.beta2, opt.weight_decay, opt.eps
    )
    return value, new


def maybe_repartition(
    epoch: int, config: QatConfig, weights: WeightSet, state: LayerQuantState
) -> LayerQuantState:
    """Rebuild maps when due; returns ``state`` itself when nothing changes."""
    if config.method == "explicit_unit":
        return state
    interval = config.repartition_interval
    if interval is not None and epoch % interval == 0:
        return quant.build_state(weights, config.method, config.bits)
    if config.delta_threshold is None:
        return state
    maps, refs = list(state.maps), list(state.ref_errors)
    changed = False
    for i, (w, qmap) in enumerate(zip(weights.weights, state.maps)):
        if quant.layer_error(w, qmap) >= refs[i] + config.delta_threshold:
            maps[i] = quant.build_map(w, config.method, config.bits)
            refs[i] = quant.layer_error(w, maps[i])
            changed = True
    if not changed:
        return state
    return LayerQuantState(tuple(maps), tuple(refs))


def quantized_psnr(arch: NetworkArch, qws: WeightSet, data: RegressionDataset) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        out = net.forward(arch, qws, data.coords)
    if not np.all(np.isfinite(out)):
        raise ConfigurationError("model output is not finite")
    return psnr(data.to_image(out), data.image)


def train(config: QatConfig, data: RegressionDataset, progress=None) -> TrainedModel:
    """Run quantization-aware training on one signal and keep the best epoch.

    Maps are built from the initial weights before the first step.  The best
    epoch is chosen by the PSNR of the quantized model on the training
    signal; epoch 0 (untrained) counts as a candidate.
    """
    arch = config.arch
    if data.targets.shape[1] != arch.output_dim or data.coords.shape[1] != arch.input_dim:
        raise ConfigurationError(
            f"signal has {data.coords.shape[1]}->{data.targets.shape[1]} dims, "
            f"architecture expects {arch.input_dim}->{arch.output_dim}"
        )
    rng = np.random.default_rng(config.seed)
    weights = net.init_weights(arch, rng)
    adam = AdamState.zeros(weights)
    state = quant.build_state(weights, config.method, config.bits)

    best_ws = quantized_weightset(weights, state)
    best_psnr = quantized_psnr(arch, best_ws, data)
    best_state, best_epoch = state, 0
    history: list[EpochRecord] = []
    timings: list[float] = []

    for epoch in range(1, config.epochs + 1):
        try:
            value, weights = qat_epoch(arch, weights, state, adam, data, config.loss, config.optimizer)
        except TrainingFault as exc:
            raise TrainingFault(f"non-finite loss at epoch {epoch}", epoch) from exc
        if not all(np.all(np.isfinite(a)) for a in weights.arrays()):
            raise TrainingFault(f"non-finite weights at epoch {epoch}", epoch)

        t0 = time.perf_counter()
        new_state = maybe_repartition(epoch, config, weights, state)
        repartitioned = new_state is not state
        if repartitioned:
            timings.append(time.perf_counter() - t0)
        state = new_state

        if epoch % config.eval_interval == 0 or epoch == config.epochs:
            qws = quantized_weightset(weights, state)
            try:
                p = quantized_psnr(arch, qws, data)
            except ConfigurationError as exc:
                raise TrainingFault(f"non-finite output at epoch {epoch}", epoch) from exc
            history.append(EpochRecord(epoch, value, p, quant.tlqe(weights, state), repartitioned))
            if p > best_psnr:
                best_psnr, best_ws, best_state, best_epoch = p, qws, state, epoch
            if progress is not None:
                progress(history[-1])

    return TrainedModel(
        config=config,
        weights=weights,
        state=state,
        best_weights=best_ws,
        best_state=best_state,
        best_psnr=best_psnr,
        best_epoch=best_epoch,
        history=history,
        repartition_seconds=timings,
    )


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for r in history:
            writer.writerow([r.epoch, repr(r.loss), repr(r.psnr), repr(r.tlqe), int(r.repartitioned)])


def render(arch: NetworkArch, ws: WeightSet, height: int, width: int) -> np.ndarray:
    """Evaluate a model on the full pixel grid and return a [0, 1] image."""
    from .data import coordinate_grid

    out = net.forward(arch, ws, coordinate_grid(height, width))
    return outputs_to_image(out, height, width, arch.output_dim)


# model files --------------------------------------------------------------

MODEL_FORMAT = 1


def _pack_state(prefix: str, state: LayerQuantState, arrays: dict) -> dict:
    for i, q in enumerate(state.maps):
        arrays[f"{prefix}{i}"] = np.asarray(q.levels)
    return {"ref_errors": list(state.ref_errors)}


def _unpack_state(prefix, meta, arrays, n, method, bits) -> LayerQuantState:
    maps = tuple(QuantizationMap(arrays[f"{prefix}{i}"], method, bits) for i in range(n))
    return LayerQuantState(maps, tuple(meta["ref_errors"]))


def save_model(model: TrainedModel, path) -> None:
    """Write a model as an ``.npz`` archive with a JSON metadata entry."""
    arrays: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(model.weights.weights, model.weights.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    for i, (w, b) in enumerate(zip(model.best_weights.weights, model.best_weights.biases)):
        arrays[f"qw{i}"] = w
        arrays[f"qb{i}"] = b
    meta = {
        "format": MODEL_FORMAT,
        "config": model.config.to_dict(),
        "best_psnr": model.best_psnr,
        "best_epoch": model.best_epoch,
        "state": _pack_state("levels", model.state, arrays),
        "best_state": _pack_state("best_levels", model.best_state, arrays),
        "history": [asdict(r) for r in model.history],
    }
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays["meta"]))
    if meta.get("format") != MODEL_FORMAT:
        raise ConfigurationError(f"unsupported model format {meta.get('format')!r}")
    config = QatConfig.from_dict(meta["config"])
    n = len(config.arch.layer_shapes)
    weights = WeightSet([arrays[f"w{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)])
    best = WeightSet([arrays[f"qw{i}"] for i in range(n)], [arrays[f"qb{i}"] for i in range(n)])
    return TrainedModel(
        config=config,
        weights=weights,
        state=_unpack_state("levels", meta["state"], arrays, n, config.method, config.bits),
        best_weights=best,
        best_state=_unpack_state("best_levels", meta["best_state"], arrays, n, config.method, config.bits),
        best_psnr=meta["best_psnr"],
        best_epoch=meta["best_epoch"],
        history=[EpochRecord(**r) for r in meta["history"]],
    )


def evaluate_weights(arch: NetworkArch, ws: WeightSet, image) -> dict:
    """Metrics of a model rendered at 32-bit precision against a [0, 1] image."""
    from .data import as_image
    from .metrics import evaluate_images

    image = as_image(image)
    h, w, c = image.shape
    if c != arch.output_dim:
        raise ConfigurationError(f"model outputs {arch.output_dim} channels, image has {c}")
    recon = render(arch, ws.astype(np.float32), h, w).astype(np.float64)
    return evaluate_images(recon, image)
