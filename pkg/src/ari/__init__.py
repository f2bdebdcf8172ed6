"""Adaptive-resolution inference: margin-gated reduced-precision cascades.

A classifier runs first at reduced precision (mantissa-truncated floats or
short stochastic bit streams). When its top-2 score margin clears a
threshold calibrated from disagreement data, the answer is accepted;
otherwise the same weights are rerun at full precision. The package splits
into quantization (``qfloat``), stream simulation (``scsim``), the model
itself (``mlp``), the cascade and its calibration (``cascade``,
``calibrate``), energy accounting (``energy``), dataset plumbing
(``data``), and a CLI (``cli``).
"""

from .calibrate import (
    CalibrationResult,
    MarginSample,
    MaxMargin,
    Percentile,
    collect_disagreements,
    fallback_fraction,
    margin_histogram,
    nearest_rank,
    parse_policy,
    residual_risk,
    threshold,
)
from .cascade import (
    AriConfig,
    AriResult,
    BatchStats,
    batch_infer,
    flip_magnitudes,
    infer,
    margin,
    margins_of,
)
from .data import Dataset, load_cifar10, load_idx, split, synth_blobs
from .energy import (
    EnergyProfile,
    SavingsReport,
    backend_for,
    check_cascade_ordering,
    default_profile,
    e_ari,
    load_profile,
    savings,
    sweep_report,
)
from .mlp import (
    FULL_FLOAT,
    FULL_STOCHASTIC,
    Backend,
    FloatBackend,
    MlpModel,
    ModelFileError,
    ScoreVector,
    StochasticBackend,
    Topology,
    accuracy,
    forward,
    forward_batch,
    forward_real,
    forward_real_batch,
    load_model,
    save_model,
    train,
)
from .qfloat import (
    FORMATS,
    FP8,
    FP10,
    FP12,
    FP14,
    FP16,
    QFormat,
    QScalar,
    prelu_q,
    qadd,
    qmac,
    qmul,
    quantize,
    quantize_array,
)
from .scsim import (
    Bitstream,
    LfsmConfig,
    LfsrConfig,
    ScNetwork,
    decode_bipolar,
    default_lfsr_width,
    encode_bipolar,
    lfsr_next,
    sc_forward,
    sc_neuron,
    xnor_mul,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # qfloat
    "QFormat",
    "QScalar",
    "FORMATS",
    "FP8",
    "FP10",
    "FP12",
    "FP14",
    "FP16",
    "quantize",
    "quantize_array",
    "qadd",
    "qmul",
    "qmac",
    "prelu_q",
    # scsim
    "Bitstream",
    "LfsrConfig",
    "LfsmConfig",
    "ScNetwork",
    "lfsr_next",
    "default_lfsr_width",
    "encode_bipolar",
    "decode_bipolar",
    "xnor_mul",
    "sc_neuron",
    "sc_forward",
    # mlp
    "Topology",
    "Backend",
    "FloatBackend",
    "StochasticBackend",
    "FULL_FLOAT",
    "FULL_STOCHASTIC",
    "ScoreVector",
    "MlpModel",
    "ModelFileError",
    "train",
    "forward",
    "forward_batch",
    "forward_real",
    "forward_real_batch",
    "accuracy",
    "save_model",
    "load_model",
    # cascade
    "margin",
    "margins_of",
    "flip_magnitudes",
    "AriConfig",
    "AriResult",
    "BatchStats",
    "infer",
    "batch_infer",
    # calibrate
    "MarginSample",
    "MaxMargin",
    "Percentile",
    "parse_policy",
    "CalibrationResult",
    "collect_disagreements",
    "nearest_rank",
    "threshold",
    "fallback_fraction",
    "residual_risk",
    "margin_histogram",
    # energy
    "EnergyProfile",
    "SavingsReport",
    "default_profile",
    "load_profile",
    "backend_for",
    "e_ari",
    "savings",
    "check_cascade_ordering",
    "sweep_report",
    # data
    "Dataset",
    "load_idx",
    "load_cifar10",
    "synth_blobs",
    "split",
]
