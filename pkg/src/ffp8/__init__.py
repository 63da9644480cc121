"""Configurable 8-bit flexible floating-point codec and quantization toolkit."""

from . import analysis, bundle, errors, search, toynet
from ._kernels import NUMBA_AVAILABLE, kernel_backend, numba_enabled, warmup_kernels
from .analysis import (
    Coverage,
    QuantReport,
    TensorStats,
    coverage,
    error_metrics,
    merge_stats,
    tensor_stats,
)
from .bundle import (
    Layer,
    ModelBundle,
    Tensor,
    dequantize_tensor,
    quantize_tensor,
    read_bundle,
    write_bundle,
)
from .formats import (
    FormatSpec,
    RangeWindow,
    ValueTable,
    decode,
    decode_array,
    default_bias,
    encode_array,
    encode_rne,
    enumerate_values,
    fp32_bits_to_float,
    make_format,
    range_window,
    to_fp32_bits,
    to_fp32_bits_array,
    value_table,
)
from .search import (
    Assignment,
    SearchConfig,
    bias_star,
    candidate_formats,
    elide_sign,
    layerwise_optimize,
    load_assignment,
    save_assignment,
    select_format,
)
from .toynet import (
    ToyDataset,
    collect_activation_stats,
    evaluate,
    forward,
    make_dataset,
    train_baseline,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "analysis",
    "bundle",
    "errors",
    "search",
    "toynet",
    "NUMBA_AVAILABLE",
    "kernel_backend",
    "numba_enabled",
    "warmup_kernels",
    "Coverage",
    "QuantReport",
    "TensorStats",
    "coverage",
    "error_metrics",
    "merge_stats",
    "tensor_stats",
    "Layer",
    "ModelBundle",
    "Tensor",
    "dequantize_tensor",
    "quantize_tensor",
    "read_bundle",
    "write_bundle",
    "FormatSpec",
    "RangeWindow",
    "ValueTable",
    "decode",
    "decode_array",
    "default_bias",
    "encode_array",
    "encode_rne",
    "enumerate_values",
    "fp32_bits_to_float",
    "make_format",
    "range_window",
    "to_fp32_bits",
    "to_fp32_bits_array",
    "value_table",
    "Assignment",
    "SearchConfig",
    "bias_star",
    "candidate_formats",
    "elide_sign",
    "layerwise_optimize",
    "load_assignment",
    "save_assignment",
    "select_format",
    "ToyDataset",
    "collect_activation_stats",
    "evaluate",
    "forward",
    "make_dataset",
    "train_baseline",
]
