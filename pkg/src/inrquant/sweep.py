"""Grid sweeps over architecture and quantization settings.

Every grid point is trained with :func:`inrquant.qat.train`, compressed with
:func:`inrquant.codec.encode`, decoded again and evaluated at 32-bit
precision.  Records come out in grid order (hidden_layers, widths, bits,
methods, seeds, outermost first) whatever order workers finish in.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

from . import codec
from .data import load_image, make_dataset
from .errors import ConfigurationError, TrainingFault
from .net import AdamConfig, NetworkArch
from .qat import QatConfig, evaluate_weights, train


@dataclass(frozen=True)
class SweepSpec:
    signal: str
    hidden_layers: list[int] = field(default_factory=lambda: [1])
    widths: list[int] = field(default_factory=lambda: [20])
    bits: list[int] = field(default_factory=lambda: [1, 3, 5, 8])
    methods: list[str] = field(default_factory=lambda: ["kmeans"])
    seeds: list[int] = field(default_factory=lambda: [0])
    epochs: int = 2000
    repartition_interval: int | None = 1
    loss: str = "mse"
    activation: str = "sine"
    optimizer: dict = field(default_factory=dict)
    budget: int | None = None  # bytes

    def __post_init__(self):
        for name in ("hidden_layers", "widths", "bits", "methods", "seeds"):
            if not getattr(self, name):
                raise ConfigurationError(f"sweep grid {name!r} is empty")
        for k in self.bits:
            if not 1 <= k <= 16:
                raise ConfigurationError(f"bits must be in [1, 16], got {k}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "SweepSpec":
        with open(path) as fh:
            d = json.load(fh)
        spec = cls.from_dict(d)
        sig = Path(spec.signal)
        if not sig.is_absolute():
            spec = cls.from_dict({**d, "signal": str(Path(path).parent / sig)})
        return spec

    def points(self) -> list[tuple]:
        return list(product(self.hidden_layers, self.widths, self.bits, self.methods, self.seeds))

    def config_for(self, point) -> QatConfig:
        h, w, k, method, seed = point
        return QatConfig(
            arch=NetworkArch(hidden_layers=h, hidden_width=w, activation=self.activation),
            method=method,
            bits=k,
            epochs=self.epochs,
            repartition_interval=self.repartition_interval,
            loss=self.loss,
            seed=seed,
            optimizer=AdamConfig(**self.optimizer),
        )


@dataclass
class SweepRecord:
    hidden_layers: int
    hidden_width: int
    bits: int
    method: str
    seed: int
    status: str = "ok"
    best_epoch: int = -1
    best_psnr: float = math.nan
    final_psnr: float = math.nan
    psnr: float = math.nan
    ssim: float = math.nan
    gradient_psnr: float = math.nan
    raw_bits: int = -1
    compressed_bytes: int = -1
    bits_per_weight: float = math.nan
    repartitions: int = 0
    wall_clock_s: float = math.nan


CSV_FIELDS = tuple(f.name for f in fields(SweepRecord) if f.name != "wall_clock_s")


def evaluate_point(config: QatConfig, image, data=None) -> SweepRecord:
    """Train, compress, decode and evaluate one configuration."""
    a = config.arch
    rec = SweepRecord(a.hidden_layers, a.hidden_width, config.bits, config.method, config.seed)
    t0 = time.perf_counter()
    try:
        model = train(config, data if data is not None else make_dataset(image))
    except TrainingFault as exc:
        rec.status = f"diverged@{exc.epoch}"
        rec.wall_clock_s = time.perf_counter() - t0
        return rec
    blob = codec.encode(model)
    decoded = codec.decode(blob)
    rate = codec.measure_rate(blob)
    metrics = evaluate_weights(decoded.arch, decoded.weights, image)
    rec.best_epoch = model.best_epoch
    rec.best_psnr = model.best_psnr
    rec.final_psnr = model.history[-1].psnr if model.history else model.best_psnr
    rec.psnr = metrics["psnr"]
    rec.ssim = metrics["ssim"]
    rec.gradient_psnr = metrics["gradient_psnr"]
    rec.raw_bits = rate["raw_bits"]
    rec.compressed_bytes = rate["compressed_bytes"]
    rec.bits_per_weight = rate["bits_per_weight_effective"]
    rec.repartitions = model.repartitions
    rec.wall_clock_s = time.perf_counter() - t0
    return rec


def _run_point(args):
    spec, point = args
    image = load_image(spec.signal)
    return evaluate_point(spec.config_for(point), image)


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_row(rec: SweepRecord, include_timing: bool = False) -> list[str]:
    names = CSV_FIELDS + (("wall_clock_s",) if include_timing else ())
    return [_format(getattr(rec, n)) for n in names]


def run_sweep(spec: SweepSpec, out_csv=None, workers: int = 1, include_timing: bool = False):
    """Run every grid point; stream rows to ``out_csv`` in grid order.

    Wall-clock times are kept on the records but left out of the CSV unless
    ``include_timing`` is set, so that repeated sweeps write identical files.
    """
    image = load_image(spec.signal)
    points = spec.points()
    records: list[SweepRecord] = []
    fh = writer = None
    if out_csv is not None:
        fh = open(out_csv, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS + (("wall_clock_s",) if include_timing else ()))
    try:
        if workers <= 1:
            data = make_dataset(image)
            results = (evaluate_point(spec.config_for(p), image, data) for p in points)
            for rec in results:
                records.append(rec)
                if writer:
                    writer.writerow(record_row(rec, include_timing))
                    fh.flush()
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_point, (spec, p)) for p in points]
                for fut in futures:
                    rec = fut.result()
                    records.append(rec)
                    if writer:
                        writer.writerow(record_row(rec, include_timing))
                        fh.flush()
    finally:
        if fh:
            fh.close()
    return records


def read_records(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                kw[k] = int(v) if t == "int" else float(v) if t == "float" else v
            out.append(SweepRecord(**kw))
    return out


def pareto_filter(records, budget: float) -> list:
    """Non-dominated records with ``compressed_bytes <= budget``, best PSNR first.

    A record is dominated when another one is no larger and has no lower
    PSNR, and is strictly better in at least one of the two.
    """
    ok = [
        r for r in records
        if r.status == "ok" and 0 <= r.compressed_bytes <= budget and not math.isnan(r.psnr)
    ]
    front = [
        r for r in ok
        if not any(
            s.compressed_bytes <= r.compressed_bytes
            and s.psnr >= r.psnr
            and (s.compressed_bytes < r.compressed_bytes or s.psnr > r.psnr)
            for s in ok
        )
    ]
    if not front:
        warnings.warn(f"no record fits within a budget of {budget} bytes")
    return sorted(front, key=lambda r: (-r.psnr, r.compressed_bytes))
