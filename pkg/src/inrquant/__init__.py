"""Quantization-aware training and compression of coordinate-network image models."""

from .codec import decode, encode, measure_rate
from .data import load_image, make_dataset, save_image, synthetic_signal
from .errors import ConfigurationError, ConsistencyError, DecodeError, TrainingFault
from .metrics import gradient_psnr, psnr, ssim
from .net import AdamConfig, NetworkArch, WeightSet
from .qat import QatConfig, TrainedModel, train
from .quant import (
    LayerQuantState,
    QuantizationMap,
    apply_map,
    build_distributional_map,
    build_kmeans_map,
    build_minmax_map,
    layer_error,
    quantize_explicit,
    tlqe,
)
from .sweep import SweepSpec, pareto_filter, run_sweep

__version__ = "0.1.0"
