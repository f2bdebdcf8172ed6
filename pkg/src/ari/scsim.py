"""Bit-serial stochastic computing primitives and network simulation.

Values live in the bipolar encoding: a real x in [-1, 1] maps to a bit
stream whose ones-probability is (x + 1) / 2, and decoding inverts that,
2 * ones / length - 1. Streams are produced by a stochastic number
generator (SNG): a maximal-length LFSR emits a pseudo-random integer each
tick and the comparator outputs 1 when the integer falls below
round((x + 1) / 2 * 2**width).

Multiplication of bipolar streams is a single XNOR gate per tick, and a
neuron is an XNOR column feeding the signed per-tick sum (ones minus
zeros) into a saturating up/down counter, the linear finite state machine
(LFSM). The counter's thresholded state is the neuron's output bit, so an
entire layer is again a set of bit streams and layers chain without any
intermediate decode.

Accuracy scales with stream length: doubling the length halves the
variance of the decoded value. Lengths are powers of two; the LFSR simply
wraps when the stream outlives its period, which biases counts by at most
one period traversal (bounded and tested, not corrected).
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "MAXIMAL_TAPS",
    "LfsrConfig",
    "LfsmConfig",
    "Bitstream",
    "lfsr_next",
    "default_lfsr_width",
    "encode_bipolar",
    "decode_bipolar",
    "xnor_mul",
    "sc_neuron",
    "ScNetwork",
    "sc_forward",
    "DEFAULT_SC_SEED",
    "DEFAULT_SC_LFSR_WIDTH",
]

log = logging.getLogger(__name__)

# Known maximal-length tap sets (Fibonacci form, taps are 1-indexed bit
# positions counted from the LSB, the polynomial degrees with the +1 term
# implied). Each entry yields the full period 2**width - 1; the test suite
# re-verifies every row by enumeration.
MAXIMAL_TAPS: dict[int, tuple[int, ...]] = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
}

# A 4096-tick full model pairs naturally with a 12-bit register, and using
# the same register for every shorter run keeps one circuit description, so
# reduced-length runs are exact prefixes of the full-length run.
DEFAULT_SC_LFSR_WIDTH = 12
DEFAULT_SC_SEED = 7

_MIN_BACKEND_LENGTH = 64
_MAX_BACKEND_LENGTH = 4096


def default_lfsr_width(length: int) -> int:
    """SNG register width for a standalone stream of the given length.

    The classic 10-bit generator covers lengths up to its 1023-value
    period; longer streams get log2(length) bits so one period spans the
    stream.
    """
    width = 10
    while (1 << width) < length:
        width += 1
    return width


@functools.lru_cache(maxsize=None)
def _check_maximal(width: int, taps: tuple[int, ...]) -> bool:
    state = 1
    period = (1 << width) - 1
    for step in range(period):
        state = _step_state(state, taps, width)
        if state == 1:
            return step + 1 == period
    return False


def _step_state(state: int, taps: tuple[int, ...], width: int) -> int:
    feedback = 0
    for t in taps:
        feedback ^= (state >> (t - 1)) & 1
    return ((state << 1) & ((1 << width) - 1)) | feedback


@dataclass(frozen=True)
class LfsrConfig:
    """A maximal-length Fibonacci LFSR: register width, taps, start state."""

    width: int = 10
    taps: tuple[int, ...] = ()
    seed: int = 1

    def __post_init__(self) -> None:
        if not 3 <= self.width <= 16:
            raise ValueError(f"width must be in [3, 16], got {self.width}")
        taps = self.taps or MAXIMAL_TAPS[self.width]
        object.__setattr__(self, "taps", tuple(taps))
        if any(not 1 <= t <= self.width for t in self.taps):
            raise ValueError(f"taps out of range for width {self.width}: {self.taps}")
        if not 1 <= self.seed < (1 << self.width):
            raise ValueError(
                f"seed must be a nonzero {self.width}-bit value, got {self.seed}"
            )
        if not _check_maximal(self.width, self.taps):
            raise ValueError(
                f"taps {self.taps} are not maximal for width {self.width}"
            )

    @property
    def period(self) -> int:
        return (1 << self.width) - 1


def lfsr_next(state: int, cfg: LfsrConfig) -> tuple[int, int]:
    """Advance the register one tick.

    Returns ``(state, number)`` where ``number`` is the value the
    comparator sees this tick; with this stepping convention that is the
    freshly advanced register content, always in [1, 2**width - 1].
    """
    if not 1 <= state < (1 << cfg.width):
        raise ValueError(f"state must be a nonzero {cfg.width}-bit value, got {state}")
    new = _step_state(state, cfg.taps, cfg.width)
    return new, new


@dataclass(frozen=True)
class LfsmConfig:
    """Saturating up/down counter used as the neuron activation.

    The counter has ``state_count`` states, starts at ``initial_state``,
    adds the signed tick sum while clamping to [0, state_count - 1], and
    outputs 1 while the state is at or above ``threshold_state``.
    """

    state_count: int = 32
    threshold_state: int = 16
    initial_state: int = 16

    def __post_init__(self) -> None:
        if self.state_count < 2:
            raise ValueError(f"state_count must be >= 2, got {self.state_count}")
        if not 0 <= self.threshold_state < self.state_count:
            raise ValueError(
                f"threshold_state must be in [0, {self.state_count - 1}], "
                f"got {self.threshold_state}"
            )
        if not 0 <= self.initial_state < self.state_count:
            raise ValueError(
                f"initial_state must be in [0, {self.state_count - 1}], "
                f"got {self.initial_state}"
            )


class Bitstream:
    """An immutable bit sequence of power-of-two length."""

    __slots__ = ("bits",)

    def __init__(self, bits) -> None:
        arr = np.ascontiguousarray(bits, dtype=bool)
        if arr.ndim != 1:
            raise ValueError(f"bits must be one-dimensional, got shape {arr.shape}")
        n = arr.shape[0]
        if n < 2 or n & (n - 1):
            raise ValueError(f"length must be a power of two >= 2, got {n}")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Bitstream is immutable")

    @property
    def length(self) -> int:
        return self.bits.shape[0]

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        return isinstance(other, Bitstream) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        ones = int(self.bits.sum())
        return f"Bitstream(length={self.length}, ones={ones})"


def _encode_threshold(x, width: int):
    """Comparator threshold round((x + 1) / 2 * 2**width), half-to-even."""
    return np.rint((np.asarray(x, dtype=np.float64) + 1.0) / 2.0 * (1 << width))


def _lfsr_values(cfg: LfsrConfig, n: int) -> np.ndarray:
    """The first n comparator values emitted from the seed, wrapping freely."""
    out = np.empty(n, dtype=np.uint32)
    state = cfg.seed
    taps, width = cfg.taps, cfg.width
    for i in range(n):
        state = _step_state(state, taps, width)
        out[i] = state
    return out


def encode_bipolar(x: float, length: int, cfg: LfsrConfig) -> Bitstream:
    """Encode a bipolar value into a stochastic bit stream.

    Args:
        x: value in [-1, 1].
        length: stream length, a power of two.
        cfg: the SNG's LFSR.

    Returns:
        Bitstream whose ones-fraction approximates (x + 1) / 2. The
        endpoints are exact: +1 encodes to all ones and -1 to all zeros.
    """
    x = float(x)
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x must be in [-1, 1], got {x}")
    threshold = float(_encode_threshold(x, cfg.width))
    values = _lfsr_values(cfg, length)
    return Bitstream(values < threshold)


def decode_bipolar(s: Bitstream) -> float:
    """Decoded bipolar value, 2 * ones / length - 1, always in [-1, 1]."""
    return 2.0 * float(np.count_nonzero(s.bits)) / s.length - 1.0


def xnor_mul(a: Bitstream, b: Bitstream) -> Bitstream:
    """Bipolar multiplication: per-tick XNOR of two equal-length streams."""
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} vs {b.length}")
    return Bitstream(a.bits == b.bits)


def sc_neuron(
    inputs: Sequence[Bitstream],
    weights: Sequence[Bitstream],
    act: LfsmConfig = LfsmConfig(),
) -> Bitstream:
    """One stochastic neuron over paired input and weight streams.

    Each tick the neuron forms every XNOR product, takes the signed sum of
    the product bits (ones minus zeros), pushes it into the saturating
    counter, and emits 1 when the updated state is at or above the
    threshold. The emitted stream has the common input length.
    """
    if len(inputs) == 0 or len(inputs) != len(weights):
        raise ValueError(
            f"need equal nonzero stream counts, got {len(inputs)} inputs "
            f"and {len(weights)} weights"
        )
    length = inputs[0].length
    for s in (*inputs, *weights):
        if s.length != length:
            raise ValueError("all streams must share one length")
    k = len(inputs)
    in_bits = np.stack([s.bits for s in inputs])
    w_bits = np.stack([s.bits for s in weights])
    products = in_bits == w_bits  # (k, length)
    deltas = 2 * products.sum(axis=0, dtype=np.int64) - k
    out = np.empty(length, dtype=bool)
    state = act.initial_state
    top = act.state_count - 1
    for t in range(length):
        state += int(deltas[t])
        if state < 0:
            state = 0
        elif state > top:
            state = top
        out[t] = state >= act.threshold_state
    return Bitstream(out)


def _bank_step(states: np.ndarray, taps: tuple[int, ...], width: int) -> np.ndarray:
    """Vectorized LFSR advance for an array of independent registers."""
    feedback = np.zeros_like(states)
    for t in taps:
        feedback ^= (states >> np.uint32(t - 1)) & np.uint32(1)
    mask = np.uint32((1 << width) - 1)
    return ((states << np.uint32(1)) & mask) | feedback


class ScNetwork:
    """A fully connected network compiled to stochastic hardware form.

    Weights and biases are clipped to [-1, 1] and turned into comparator
    thresholds. Every stream gets its own LFSR; seeds come from one seeded
    master generator in a fixed order (input streams first, then each
    layer's weight streams row-major, then its bias streams), so a given
    (model, master_seed, lfsr_width) triple always builds the identical
    circuit. First-layer weight seeds are redrawn if they collide with
    their partnered input seed, since XNOR of two identical streams would
    read as a constant +1. Biases join each neuron's tick sum as one extra
    product stream with an implicit +1 weight.
    """

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        master_seed: int = DEFAULT_SC_SEED,
        lfsr_width: int = DEFAULT_SC_LFSR_WIDTH,
        lfsm: LfsmConfig = LfsmConfig(),
    ) -> None:
        if len(weights) == 0 or len(weights) != len(biases):
            raise ValueError("need one bias vector per weight matrix")
        self.lfsr = LfsrConfig(width=lfsr_width, seed=1)
        self.lfsm = lfsm
        self.master_seed = int(master_seed)
        width = self.lfsr.width
        period = self.lfsr.period
        rng = np.random.default_rng(self.master_seed)

        n_inputs = weights[0].shape[0]
        if n_inputs <= period:
            self.input_seeds = rng.choice(period, size=n_inputs, replace=False).astype(
                np.uint32
            ) + np.uint32(1)
        else:
            log.warning(
                "more input streams (%d) than LFSR states (%d); seeds repeat",
                n_inputs,
                period,
            )
            self.input_seeds = rng.integers(
                1, period + 1, size=n_inputs, dtype=np.uint32
            )

        self.weight_thresholds: list[np.ndarray] = []
        self.bias_thresholds: list[np.ndarray] = []
        self.weight_seeds: list[np.ndarray] = []
        self.bias_seeds: list[np.ndarray] = []
        for l, (w, b) in enumerate(zip(weights, biases)):
            w = np.clip(np.asarray(w, dtype=np.float64), -1.0, 1.0)
            b = np.clip(np.asarray(b, dtype=np.float64), -1.0, 1.0)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: weight/bias shapes disagree")
            self.weight_thresholds.append(_encode_threshold(w, width))
            self.bias_thresholds.append(_encode_threshold(b, width))
            seeds = rng.integers(1, period + 1, size=w.shape, dtype=np.uint32)
            if l == 0:
                partner = self.input_seeds[:, None]
                collide = seeds == partner
                while collide.any():
                    seeds[collide] = rng.integers(
                        1, period + 1, size=int(collide.sum()), dtype=np.uint32
                    )
                    collide = seeds == partner
            self.weight_seeds.append(seeds)
            self.bias_seeds.append(
                rng.integers(1, period + 1, size=b.shape, dtype=np.uint32)
            )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        sizes = [self.weight_thresholds[0].shape[0]]
        sizes += [w.shape[1] for w in self.weight_thresholds]
        return tuple(sizes)

    def run_batch(
        self, x: np.ndarray, length: int, collect_bits: bool = False
    ) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
        """Simulate the network tick by tick over a batch of inputs.

        Args:
            x: (batch, n_inputs) bipolar inputs; values are clipped to
                [-1, 1].
            length: ticks to run, a power of two.
            collect_bits: also return the raw output-layer bit history
                with shape (batch, n_classes, length).

        Returns:
            (batch, n_classes) decoded scores in [-1, 1], plus the bit
            history when requested.
        """
        if length < 2 or length & (length - 1):
            raise ValueError(f"length must be a power of two >= 2, got {length}")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"expected {self.layer_sizes[0]} inputs per row, got {x.shape[1]}"
            )
        if not np.isfinite(x).all():
            raise ValueError("non-finite input")
        x = np.clip(x, -1.0, 1.0)
        batch = x.shape[0]
        width, taps = self.lfsr.width, self.lfsr.taps
        x_thresholds = _encode_threshold(x, width)  # (batch, n_inputs)

        input_states = self.input_seeds.copy()
        weight_states = [s.copy() for s in self.weight_seeds]
        bias_states = [s.copy() for s in self.bias_seeds]
        n_layers = len(weight_states)
        lfsm_states = [
            np.full((batch, t.shape[0]), self.lfsm.initial_state, dtype=np.int64)
            for t in self.bias_thresholds
        ]
        counts = np.zeros((batch, self.layer_sizes[-1]), dtype=np.int64)
        history = (
            np.empty((batch, self.layer_sizes[-1], length), dtype=bool)
            if collect_bits
            else None
        )
        top = self.lfsm.state_count - 1

        for t in range(length):
            input_states = _bank_step(input_states, taps, width)
            bits = input_states[None, :] < x_thresholds  # (batch, n_in)
            for l in range(n_layers):
                weight_states[l] = _bank_step(weight_states[l], taps, width)
                bias_states[l] = _bank_step(bias_states[l], taps, width)
                w_bits = weight_states[l] < self.weight_thresholds[l]  # (n_in, n_out)
                b_bits = bias_states[l] < self.bias_thresholds[l]  # (n_out,)
                # ones_nj = sum_i (bits_ni == w_bits_ij), expanded so only
                # one (batch, n_out) matmul is needed per tick
                bf = bits.astype(np.float64)
                wf = w_bits.astype(np.float64)
                k = bits.shape[1]
                ones = 2.0 * (bf @ wf) + k - bf.sum(axis=1, keepdims=True) - wf.sum(axis=0)
                delta = (2.0 * ones - k).astype(np.int64) + (
                    2 * b_bits.astype(np.int64) - 1
                )
                np.clip(lfsm_states[l] + delta, 0, top, out=lfsm_states[l])
                bits = lfsm_states[l] >= self.lfsm.threshold_state
            counts += bits
            if history is not None:
                history[:, :, t] = bits
        scores = 2.0 * counts / length - 1.0
        if history is not None:
            return scores, history
        return scores

    def run(self, x: np.ndarray, length: int) -> np.ndarray:
        """Single-input convenience wrapper, returns (n_classes,) scores."""
        return self.run_batch(np.asarray(x)[None, :], length)[0]


def sc_forward(
    model,
    x: np.ndarray,
    length: int,
    master_seed: int = DEFAULT_SC_SEED,
    lfsr_width: int = DEFAULT_SC_LFSR_WIDTH,
    lfsm: LfsmConfig = LfsmConfig(),
) -> np.ndarray:
    """Stochastic forward pass of a trained model on one bipolar input.

    ``model`` is anything with ``weights`` and ``biases`` sequences (one
    matrix and one vector per layer). Returns the decoded output scores in
    [-1, 1]; wrap them in a backend-tagged score type at the caller when
    needed.
    """
    net = ScNetwork(
        model.weights,
        model.biases,
        master_seed=master_seed,
        lfsr_width=lfsr_width,
        lfsm=lfsm,
    )
    return net.run(x, length)
