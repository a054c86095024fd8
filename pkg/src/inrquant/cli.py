"""Command-line interface: ``inrquant {train,eval,compress,decompress,sweep,info}``.

Exit codes: 0 success, 1 usage or invalid input, 2 runtime failure.
Existing outputs are never replaced unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import codec
from .data import load_image, make_dataset, save_image
from .errors import ConfigurationError, ConsistencyError, DecodeError, TrainingFault
from .metrics import psnr
from .net import AdamConfig, NetworkArch
from .qat import QatConfig, evaluate_weights, load_model, render, save_model, train, write_history_csv
from .sweep import SweepSpec, pareto_filter, run_sweep

log = logging.getLogger("inrquant")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
DEFAULT_SEED = 0
METRIC_KEYS = ("psnr", "ssim", "gradient_psnr", "raw_bits", "compressed_bytes", "bits_per_weight")

# built-in training defaults; a --config file overrides these, flags override both
TRAIN_DEFAULTS = {
    "hidden_layers": 1,
    "width": 20,
    "activation": "sine",
    "omega": 30.0,
    "sigma": 1.0,
    "frequencies": 0,
    "method": "kmeans",
    "bits": 3,
    "epochs": 2000,
    "interval": 1,
    "no_repartition": False,
    "delta": None,
    "loss": "mse",
    "seed": DEFAULT_SEED,
    "lr": 1e-4,
    "beta1": 0.99,
    "beta2": 0.999,
    "weight_decay": 1e-8,
    "eval_interval": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require_input(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    return p


def _check_output(path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise UsageError(f"{p} exists; pass --force to overwrite")
    if not p.parent.exists():
        raise UsageError(f"output directory {p.parent} does not exist")
    return p


def _is_artifact(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(3) == b"BZh"


def _load_any(path):
    """Return ``(arch, 32-bit weights, artifact bytes)`` for a model file or artifact."""
    if _is_artifact(path):
        blob = Path(path).read_bytes()
        dec = codec.decode(blob)
        return dec.arch, dec.weights, blob, dec.method, dec.bits
    model = load_model(path)
    return model.arch, model.best_weights.astype(np.float32), codec.encode(model), model.config.method, model.config.bits


def _train_settings(args) -> dict:
    settings = dict(TRAIN_DEFAULTS)
    if args.config:
        with open(_require_input(args.config)) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(TRAIN_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        settings.update(file_cfg)
    for key in TRAIN_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def build_config(settings: dict) -> QatConfig:
    arch = NetworkArch(
        hidden_layers=settings["hidden_layers"],
        hidden_width=settings["width"],
        activation=settings["activation"],
        omega=settings["omega"],
        sigma=settings["sigma"],
        num_frequencies=settings["frequencies"],
    )
    return QatConfig(
        arch=arch,
        method=settings["method"],
        bits=settings["bits"],
        epochs=settings["epochs"],
        repartition_interval=None if settings["no_repartition"] else settings["interval"],
        delta_threshold=settings["delta"],
        loss=settings["loss"],
        seed=settings["seed"],
        optimizer=AdamConfig(
            lr=settings["lr"],
            beta1=settings["beta1"],
            beta2=settings["beta2"],
            weight_decay=settings["weight_decay"],
        ),
        eval_interval=settings["eval_interval"],
    )


def cmd_train(args) -> int:
    signal = _require_input(args.signal)
    out = _check_output(args.out, args.force)
    history = _check_output(args.history or out.with_suffix(".history.csv"), args.force)
    try:
        config = build_config(_train_settings(args))
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    image = load_image(signal)
    data = make_dataset(image)
    if data.targets.shape[1] != config.arch.output_dim:
        config = QatConfig.from_dict(
            {**config.to_dict(), "arch": {**config.arch.to_dict(), "output_dim": data.targets.shape[1]}}
        )
    model = train(config, data)
    save_model(model, out)
    write_history_csv(model.history, history)
    final = model.history[-1] if model.history else None
    rendered = render(model.arch, model.best_weights.astype(np.float32), *image.shape[:2])
    print(f"best epoch {model.best_epoch}: quantized PSNR {model.best_psnr:.4f} dB")
    if final:
        print(f"final epoch {final.epoch}: PSNR {final.psnr:.4f} dB, TLQE {final.tlqe:.6g}")
    print(f"32-bit evaluation: PSNR {psnr(rendered, image):.4f} dB")
    print(f"wrote {out} and {history}")
    return EXIT_OK


def cmd_eval(args) -> int:
    src = _require_input(args.model)
    signal = _require_input(args.signal)
    if args.json:
        _check_output(args.json, args.force)
    arch, weights, blob, _, _ = _load_any(src)
    image = load_image(signal)
    try:
        metrics = evaluate_weights(arch, weights, image)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    rate = codec.measure_rate(blob)
    report = {
        **metrics,
        "raw_bits": rate["raw_bits"],
        "compressed_bytes": rate["compressed_bytes"],
        "bits_per_weight": rate["bits_per_weight_effective"],
    }
    report = {k: report[k] for k in METRIC_KEYS}
    for k in METRIC_KEYS:
        v = report[k]
        print(f"{k}: {v:.4f}" if isinstance(v, float) else f"{k}: {v}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_compress(args) -> int:
    src = _require_input(args.model)
    out = _check_output(args.out, args.force)
    model = load_model(src)
    blob = codec.encode(model)
    out.write_bytes(blob)
    rate = codec.measure_rate(blob)
    print(f"wrote {out}: {rate['compressed_bytes']} bytes ({rate['raw_bits']} raw bits)")
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--size must look like HxW, got {text!r}") from exc
    return h, w


def cmd_decompress(args) -> int:
    src = _require_input(args.artifact)
    out = _check_output(args.out, args.force)
    if out.suffix.lower() in (".png", ".ppm"):
        if not args.size:
            raise UsageError("--size HxW is required when rendering an image")
        h, w = _parse_size(args.size)
        dec = codec.decode(src.read_bytes())
        save_image(out, render(dec.arch, dec.weights, h, w).astype(np.float64))
    elif out.suffix.lower() == ".npz":
        dec = codec.decode(src.read_bytes())
        arrays = {}
        for i, (w, b) in enumerate(zip(dec.weights.weights, dec.weights.biases)):
            arrays[f"w{i}"], arrays[f"b{i}"] = w, b
            arrays[f"levels{i}"] = dec.state.maps[i].levels.astype(np.float32)
        arrays["arch"] = np.array(json.dumps(dec.arch.to_dict(), sort_keys=True))
        with open(out, "wb") as fh:
            np.savez(fh, **arrays)
    else:
        raise UsageError("--out must end in .png, .ppm or .npz")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec_path = _require_input(args.spec)
    out = _check_output(args.out, args.force)
    try:
        spec = SweepSpec.from_json(spec_path)
    except (ConfigurationError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid sweep spec: {exc}") from exc
    _require_input(spec.signal)
    records = run_sweep(spec, out, workers=args.workers, include_timing=args.timing)
    print(f"wrote {len(records)} records to {out}")
    if spec.budget is not None:
        for r in pareto_filter(records, spec.budget):
            print(
                f"  h={r.hidden_layers} w={r.hidden_width} k={r.bits} {r.method} seed={r.seed}: "
                f"{r.psnr:.2f} dB, {r.compressed_bytes} bytes"
            )
    return EXIT_OK


def cmd_info(args) -> int:
    src = _require_input(args.file)
    arch, _, blob, method, bits = _load_any(src)
    rate = codec.measure_rate(blob)
    print(f"file: {src}")
    print("kind: " + ("artifact" if _is_artifact(src) else "model"))
    print(
        f"arch: {arch.hidden_layers} hidden x {arch.hidden_width}, {arch.activation}, "
        f"{arch.input_dim}->{arch.output_dim}, encoding "
        + (f"positional({arch.num_frequencies})" if arch.num_frequencies else "none")
    )
    print(f"method: {method}")
    print(f"bits: {bits}")
    print(f"weights: {arch.num_weights}")
    print(f"raw_bits: {rate['raw_bits']}")
    print(f"compressed_bytes: {rate['compressed_bytes']}")
    print(f"bits_per_weight: {rate['bits_per_weight_effective']:.4f}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="inrquant", description="Quantize and compress coordinate-network image models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="quantization-aware training on one image")
    t.add_argument("--signal", required=True, help="PNG or PPM image")
    t.add_argument("--out", required=True, help="model file (.npz)")
    t.add_argument("--history", help="history CSV (default: <out>.history.csv)")
    t.add_argument("--config", help="JSON file with training settings")
    t.add_argument("--hidden-layers", dest="hidden_layers", type=int)
    t.add_argument("--width", type=int)
    t.add_argument("--activation", choices=["sine", "relu", "gaussian"])
    t.add_argument("--omega", type=float, help="sine frequency (default 30)")
    t.add_argument("--sigma", type=float, help="gaussian width (default 1)")
    t.add_argument("--frequencies", type=int, help="positional encoding frequencies (0 = off)")
    t.add_argument("--method", choices=["explicit_unit", "distributional", "minmax", "kmeans"])
    t.add_argument("--bits", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--interval", type=int, help="repartition every N epochs")
    t.add_argument("--no-repartition", dest="no_repartition", action="store_const", const=True)
    t.add_argument("--delta", type=float, help="also repartition a layer when its error grows by this much")
    t.add_argument("--loss", choices=["mse", "log10_mse"])
    t.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    t.add_argument("--lr", type=float)
    t.add_argument("--beta1", type=float)
    t.add_argument("--beta2", type=float)
    t.add_argument("--weight-decay", dest="weight_decay", type=float)
    t.add_argument("--eval-interval", dest="eval_interval", type=int)
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="PSNR / SSIM / gradient PSNR and sizes")
    e.add_argument("model", help="model file or compressed artifact")
    e.add_argument("--signal", required=True)
    e.add_argument("--json", help="also write metrics as JSON")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compress", help="model file -> compressed artifact")
    c.add_argument("model")
    c.add_argument("--out", required=True)
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_compress)

    d = sub.add_parser("decompress", help="artifact -> rendered image or weight archive")
    d.add_argument("artifact")
    d.add_argument("--out", required=True, help=".png/.ppm renders, .npz dumps weights")
    d.add_argument("--size", help="render size HxW")
    d.add_argument("--force", action="store_true")
    d.set_defaults(func=cmd_decompress)

    s = sub.add_parser("sweep", help="grid sweep from a JSON spec")
    s.add_argument("spec")
    s.add_argument("--out", required=True, help="CSV output")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--timing", action="store_true", help="add a wall-clock column")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("info", help="describe a model file or artifact")
    i.add_argument("file")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"inrquant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingFault as exc:
        print(f"inrquant: training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DecodeError, ConsistencyError, ConfigurationError, OSError) as exc:
        print(f"inrquant: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
