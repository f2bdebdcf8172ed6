"""Reduced-precision floating point emulation by mantissa truncation.

Every format shares the IEEE 754 binary16 layout: 1 sign bit, 5 exponent
bits, and a mantissa that keeps only the top ``mantissa_bits`` of the ten
binary16 fraction bits. A value is quantized by encoding it to binary16 and
clearing the low ``10 - mantissa_bits`` fraction bits, which truncates the
magnitude toward zero while leaving sign and exponent untouched. FP16
(mantissa_bits=10) clears nothing and is exactly IEEE binary16.

Arithmetic helpers model a fixed-width datapath: every operation computes
the real-arithmetic result and immediately re-quantizes it to the active
format. ``qmac`` quantizes once after the fused multiply-add, so the
product itself is never rounded. Intermediates are held in float64, which
represents sums and products of these narrow formats exactly for all
magnitudes an MLP datapath produces (a float64 mantissa is wide enough
unless a value near the top of the exponent range meets a product of two
subnormals, 2**-48 against 2**15, which exceeds 53 bits).

Rules at the edges:

* finite values beyond a format's range saturate to its largest finite
  magnitude with the sign preserved,
* infinities propagate unchanged,
* NaN propagates and is never silently replaced,
* subnormals are kept, with the same fraction bits cleared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QFormat",
    "QScalar",
    "FP8",
    "FP10",
    "FP12",
    "FP14",
    "FP16",
    "FORMATS",
    "quantize",
    "quantize_array",
    "qadd",
    "qmul",
    "qmac",
    "prelu_q",
]

SIGN_BITS = 1
EXPONENT_BITS = 5
FULL_MANTISSA_BITS = 10

# binary16 constants
_HALF_EXPONENT_MASK = 0x7C00
_HALF_FRACTION_MASK = 0x03FF
_HALF_MAX_FINITE_BITS = 0x7BFF


@dataclass(frozen=True)
class QFormat:
    """A reduced binary16 format keeping ``mantissa_bits`` fraction bits.

    The total width is ``1 + 5 + mantissa_bits``, so mantissa_bits 2..10
    spans the FP8..FP16 family. Formats with fewer mantissa bits are
    strict subsets of wider ones: every representable value of a narrow
    format is representable in every wider one.
    """

    mantissa_bits: int

    def __post_init__(self) -> None:
        if not 2 <= self.mantissa_bits <= FULL_MANTISSA_BITS:
            raise ValueError(
                f"mantissa_bits must be in [2, {FULL_MANTISSA_BITS}], "
                f"got {self.mantissa_bits}"
            )

    @classmethod
    def from_width(cls, width: int) -> "QFormat":
        """Build a format from its total bit width, e.g. 10 -> FP10."""
        return cls(mantissa_bits=width - SIGN_BITS - EXPONENT_BITS)

    @property
    def width(self) -> int:
        return SIGN_BITS + EXPONENT_BITS + self.mantissa_bits

    @property
    def label(self) -> str:
        return f"FP{self.width}"

    @property
    def cleared_bits(self) -> int:
        return FULL_MANTISSA_BITS - self.mantissa_bits

    @property
    def clear_mask(self) -> int:
        """uint16 mask that zeroes the truncated fraction bits."""
        return 0xFFFF ^ ((1 << self.cleared_bits) - 1)

    @property
    def max_finite(self) -> float:
        """Largest finite magnitude, (2 - 2**-mantissa_bits) * 2**15."""
        bits = np.uint16(_HALF_MAX_FINITE_BITS & self.clear_mask)
        return float(bits.view(np.float16))

    @property
    def min_positive(self) -> float:
        """Smallest positive (subnormal) magnitude, 2**(cleared_bits - 24)."""
        return float(np.uint16(1 << self.cleared_bits).view(np.float16))

    def __str__(self) -> str:
        return self.label


FP8 = QFormat(2)
FP10 = QFormat(4)
FP12 = QFormat(6)
FP14 = QFormat(8)
FP16 = QFormat(10)

FORMATS = {f.width: f for f in (FP8, FP10, FP12, FP14, FP16)}


@dataclass(frozen=True)
class QScalar:
    """A value certified representable in a given format.

    Construction re-quantizes under the carried format and rejects values
    that change, so a QScalar is a fixed point of its own quantizer.
    """

    value: float
    fmt: QFormat

    def __post_init__(self) -> None:
        q = quantize(self.value, self.fmt)
        same = (q == self.value) or (np.isnan(q) and np.isnan(self.value))
        if not same:
            raise ValueError(
                f"{self.value!r} is not representable in {self.fmt}: "
                f"quantizes to {q!r}"
            )

    @classmethod
    def from_real(cls, x: float, fmt: QFormat) -> "QScalar":
        """Quantize an arbitrary real into the format."""
        return cls(quantize(x, fmt), fmt)

    def __float__(self) -> float:
        return self.value


def quantize(x: float, fmt: QFormat) -> float:
    """Quantize a real value to ``fmt``.

    The value is encoded to binary16 (IEEE round-to-nearest-even) and the
    low fraction bits beyond the format's mantissa are cleared, truncating
    the magnitude toward zero. Finite inputs beyond the binary16 range
    saturate to the format's largest finite magnitude; +-inf propagates;
    NaN propagates.

    Args:
        x: a real value (float convertible).
        fmt: target format.

    Returns:
        The nearest-below representable value as a Python float.
    """
    x = float(x)
    if np.isnan(x):
        return float("nan")
    if np.isinf(x):
        return x
    with np.errstate(over="ignore"):
        h = np.float16(x)
    if np.isinf(h):
        # finite input past the binary16 range: saturate, keep the sign
        return float(np.copysign(fmt.max_finite, x))
    bits = h.view(np.uint16) & np.uint16(fmt.clear_mask)
    return float(bits.view(np.float16))


def quantize_array(x: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Vectorized :func:`quantize` for float64 arrays.

    Semantically identical to mapping ``quantize`` over the elements;
    returns a float64 array of representable values.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        h = x.astype(np.float16)
    bits = h.view(np.uint16)
    bits &= np.uint16(fmt.clear_mask)  # in place, reinterprets h's buffer
    out = h.astype(np.float64)
    # clearing fraction bits of a NaN pattern could leave a bare infinity,
    # and finite overflow must saturate rather than escape to inf
    nan_mask = np.isnan(x)
    if nan_mask.any():
        out[nan_mask] = np.nan
    over = np.isinf(out) & np.isfinite(x)
    if over.any():
        out[over] = np.copysign(fmt.max_finite, x[over])
    return out


def qadd(a: float, b: float, fmt: QFormat) -> float:
    """Sum re-quantized to ``fmt``. Operands must be representable in fmt."""
    return quantize(float(a) + float(b), fmt)


def qmul(a: float, b: float, fmt: QFormat) -> float:
    """Product re-quantized to ``fmt``. Operands must be representable in fmt."""
    return quantize(float(a) * float(b), fmt)


def qmac(acc: float, a: float, b: float, fmt: QFormat) -> float:
    """Fused multiply-add ``acc + a * b`` quantized once at the end.

    The product feeds the accumulator unrounded, so one qmac is one
    quantization step no matter the operand magnitudes.
    """
    return quantize(float(acc) + float(a) * float(b), fmt)


def prelu_q(x: float, alpha: float, fmt: QFormat) -> float:
    """Parametric ReLU on a representable value.

    Non-negative inputs pass through untouched; negative inputs return
    ``quantize(alpha * x, fmt)``.

    Args:
        x: input, representable in fmt.
        alpha: negative-slope coefficient, must be >= 0.
        fmt: active datapath format.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    x = float(x)
    if np.isnan(x):
        return float("nan")
    if x >= 0:
        return x
    return quantize(float(alpha) * x, fmt)


def quantize_prelu_array(x: np.ndarray, alpha: float, fmt: QFormat) -> np.ndarray:
    """Vectorized :func:`prelu_q` over a float64 array of representable values."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    neg = x < 0
    out = x.copy()
    if neg.any():
        out[neg] = quantize_array(float(alpha) * x[neg], fmt)
    return out
