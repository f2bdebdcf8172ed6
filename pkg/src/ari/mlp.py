"""Seeded MLP classifier with swappable inference backends.

Training always runs in full-precision real arithmetic: minibatch SGD on
softmax cross-entropy with PReLU hidden activations (negative slopes are
trained and clipped to stay non-negative). Everything is driven by one
seed, so a fixed (dataset, topology, hyperparameters, seed) tuple
reproduces the model bit for bit.

Inference picks a backend per call:

* ``FloatBackend(fmt)`` runs the reduced floating point datapath: weights,
  biases, inputs, and every multiply-accumulate step are quantized to the
  format, one quantization per MAC. ``FloatBackend(FP16)`` is the
  designated full model.
* ``StochasticBackend(length)`` compiles the model to the bit-serial
  stochastic network and decodes its output streams.
  ``StochasticBackend(4096)`` is the designated full model.

Scores are raw, never softmax-normalized; the float path returns the
output layer's accumulators, the stochastic path returns decoded bipolar
values in [-1, 1]. Inputs are unit-interval vectors for both families;
the stochastic path remaps them to bipolar internally.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from typing import Union

import numpy as np

from .qfloat import FP16, QFormat, quantize, quantize_array, quantize_prelu_array
from .scsim import (
    DEFAULT_SC_LFSR_WIDTH,
    DEFAULT_SC_SEED,
    LfsmConfig,
    ScNetwork,
)

__all__ = [
    "Topology",
    "FloatBackend",
    "StochasticBackend",
    "Backend",
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
    "loss_and_gradients",
    "accuracy",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

MODEL_MAGIC = b"ARIM"
MODEL_VERSION = 1

_MIN_SC_LENGTH = 64
_MAX_SC_LENGTH = 4096


@dataclass(frozen=True)
class Topology:
    """Layer sizes, input first. At least input and output are required."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least 2 layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    @property
    def n_weight_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_hidden(self) -> int:
        return len(self.sizes) - 2

    def __str__(self) -> str:
        return "-".join(str(s) for s in self.sizes)


@dataclass(frozen=True)
class FloatBackend:
    """Reduced floating point datapath at the given format."""

    fmt: QFormat

    @property
    def label(self) -> str:
        return self.fmt.label

    @property
    def level(self) -> int:
        return self.fmt.width


@dataclass(frozen=True)
class StochasticBackend:
    """Bit-serial stochastic datapath at the given sequence length.

    The master seed and LFSR width pin the compiled circuit so repeated
    runs are bit-reproducible; the width defaults to the one that covers
    the longest supported sequence, which keeps every length on the same
    circuit and makes shorter runs exact prefixes of longer ones.
    """

    length: int
    master_seed: int = DEFAULT_SC_SEED
    lfsr_width: int = DEFAULT_SC_LFSR_WIDTH

    def __post_init__(self) -> None:
        n = self.length
        if n < _MIN_SC_LENGTH or n > _MAX_SC_LENGTH or n & (n - 1):
            raise ValueError(
                f"length must be a power of two in "
                f"[{_MIN_SC_LENGTH}, {_MAX_SC_LENGTH}], got {n}"
            )

    @property
    def label(self) -> str:
        return f"SC{self.length}"

    @property
    def level(self) -> int:
        return self.length


Backend = Union[FloatBackend, StochasticBackend]

FULL_FLOAT = FloatBackend(FP16)
FULL_STOCHASTIC = StochasticBackend(_MAX_SC_LENGTH)


class ScoreVector:
    """Per-class scores produced by one backend for one input."""

    __slots__ = ("scores", "backend")

    def __init__(self, scores: np.ndarray, backend: Backend) -> None:
        arr = np.ascontiguousarray(scores, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise ValueError(f"scores must be a vector of >= 2 classes, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "backend", backend)

    def __setattr__(self, name, value):
        raise AttributeError("ScoreVector is immutable")

    def __len__(self) -> int:
        return self.scores.shape[0]

    def __repr__(self) -> str:
        return f"ScoreVector(backend={self.backend!r}, scores={self.scores!r})"


class ModelFileError(Exception):
    """Raised when a model file is malformed, truncated, or corrupt."""


@dataclass(frozen=True, eq=False)
class MlpModel:
    """A trained network: weights, biases, and PReLU slopes per hidden layer."""

    topology: Topology
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    prelu_alphas: np.ndarray
    trained_epochs: int = 0

    def __post_init__(self) -> None:
        sizes = self.topology.sizes
        weights = tuple(
            np.ascontiguousarray(w, dtype=np.float64) for w in self.weights
        )
        biases = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in self.biases)
        alphas = np.ascontiguousarray(self.prelu_alphas, dtype=np.float64)
        if len(weights) != self.topology.n_weight_layers:
            raise ValueError(
                f"expected {self.topology.n_weight_layers} weight matrices, "
                f"got {len(weights)}"
            )
        for l, (w, b) in enumerate(zip(weights, biases)):
            want = (sizes[l], sizes[l + 1])
            if w.shape != want:
                raise ValueError(f"layer {l}: weight shape {w.shape}, expected {want}")
            if b.shape != (sizes[l + 1],):
                raise ValueError(
                    f"layer {l}: bias shape {b.shape}, expected {(sizes[l + 1],)}"
                )
        if alphas.shape != (self.topology.n_hidden,):
            raise ValueError(
                f"expected {self.topology.n_hidden} PReLU slopes, got {alphas.shape}"
            )
        if (alphas < 0).any():
            raise ValueError("PReLU slopes must be >= 0")
        for arr in (*weights, *biases, alphas):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "prelu_alphas", alphas)


def _check_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.topology.n_inputs,):
        raise ValueError(
            f"input shape {x.shape}, expected {(model.topology.n_inputs,)}"
        )
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    return x


def _check_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.topology.n_inputs:
        raise ValueError(
            f"batch shape {x.shape}, expected (n, {model.topology.n_inputs})"
        )
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    return x


def forward_real_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Full-precision reference forward pass, (n, n_classes) raw scores."""
    x = _check_batch(model, x)
    a = x
    last = model.topology.n_weight_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if l < last:
            alpha = model.prelu_alphas[l]
            a = np.where(z >= 0, z, alpha * z)
        else:
            a = z
    return a


def forward_real(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Single-input full-precision reference, (n_classes,) raw scores."""
    return forward_real_batch(model, _check_input(model, x)[None, :])[0]


def _forward_float_batch(model: MlpModel, x: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Quantized datapath: one quantization per MAC, bias-seeded accumulators."""
    n = x.shape[0]
    a = quantize_array(x, fmt)
    last = model.topology.n_weight_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        wq = quantize_array(w, fmt)
        bq = quantize_array(b, fmt)
        acc = np.broadcast_to(bq, (n, bq.shape[0])).copy()
        for i in range(wq.shape[0]):
            acc = quantize_array(acc + a[:, i : i + 1] * wq[i], fmt)
        if l < last:
            alpha = quantize(float(model.prelu_alphas[l]), fmt)
            a = quantize_prelu_array(acc, alpha, fmt)
        else:
            a = acc
    return a


def _forward_stochastic_batch(
    model: MlpModel, x: np.ndarray, backend: StochasticBackend
) -> np.ndarray:
    net = ScNetwork(
        model.weights,
        model.biases,
        master_seed=backend.master_seed,
        lfsr_width=backend.lfsr_width,
    )
    return net.run_batch(2.0 * x - 1.0, backend.length)


def forward_batch(model: MlpModel, x: np.ndarray, backend: Backend) -> np.ndarray:
    """Run a batch of unit-interval inputs, (n, n_classes) raw scores."""
    x = _check_batch(model, x)
    if isinstance(backend, FloatBackend):
        return _forward_float_batch(model, x, backend.fmt)
    if isinstance(backend, StochasticBackend):
        return _forward_stochastic_batch(model, x, backend)
    raise TypeError(f"unknown backend {backend!r}")


def forward(model: MlpModel, x: np.ndarray, backend: Backend) -> ScoreVector:
    """Run one unit-interval input through the chosen backend."""
    x = _check_input(model, x)
    scores = forward_batch(model, x[None, :], backend)[0]
    return ScoreVector(scores, backend)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradients(
    model: MlpModel, x: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Mean cross-entropy over a batch plus gradients for every parameter.

    Returns ``(loss, dW, db, dalpha)`` where the gradient lists parallel
    ``model.weights`` and ``model.biases`` and ``dalpha`` parallels
    ``model.prelu_alphas``. Gradients are means over the batch.
    """
    x = _check_batch(model, x)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    last = model.topology.n_weight_layers - 1

    activations = [x]
    pre = []
    a = x
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if l < last:
            alpha = model.prelu_alphas[l]
            a = np.where(z >= 0, z, alpha * z)
        else:
            a = z
        activations.append(a)

    probs = _softmax(activations[-1])
    true_class_probs = probs[np.arange(n), labels]
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(true_class_probs)))

    grad = probs
    grad[np.arange(n), labels] -= 1.0
    grad /= n

    dws: list[np.ndarray] = [None] * (last + 1)
    dbs: list[np.ndarray] = [None] * (last + 1)
    dalpha = np.zeros_like(model.prelu_alphas)
    for l in range(last, -1, -1):
        dws[l] = activations[l].T @ grad
        dbs[l] = grad.sum(axis=0)
        if l > 0:
            upstream = grad @ model.weights[l].T
            z = pre[l - 1]
            alpha = model.prelu_alphas[l - 1]
            neg = z < 0
            dalpha[l - 1] = float((upstream * np.where(neg, z, 0.0)).sum())
            grad = upstream * np.where(neg, alpha, 1.0)
    return loss, dws, dbs, dalpha


def train(
    dataset,
    topology: Topology,
    epochs: int,
    learning_rate: float = 0.05,
    batch_size: int = 32,
    seed: int = 0,
    weight_clip: float | None = None,
    epoch_callback=None,
) -> MlpModel:
    """Train a fresh model with seeded minibatch SGD.

    Args:
        dataset: anything with unit-interval ``inputs`` (n, d) and integer
            ``labels`` (n,).
        topology: layer sizes; input and output must match the dataset.
        epochs: full passes over the data, >= 1.
        learning_rate: SGD step size.
        batch_size: minibatch size (the tail batch may be smaller).
        seed: drives init and shuffling; fixed seed means bit-identical
            weights across runs.
        weight_clip: optionally clip weights and biases to
            [-weight_clip, weight_clip] after each step, which keeps the
            model inside the stochastic backend's native range.
        epoch_callback: optional ``f(epoch_index, mean_loss)`` invoked after
            each epoch with the example-weighted mean minibatch loss.

    Returns:
        The trained model. Raises ValueError if the loss stops being
        finite (diverged) or on inconsistent arguments.
    """
    x = np.asarray(dataset.inputs, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (n, d) array")
    if x.shape[1] != topology.n_inputs:
        raise ValueError(
            f"dataset has {x.shape[1]} features, topology expects {topology.n_inputs}"
        )
    if labels.min() < 0 or labels.max() >= topology.n_classes:
        raise ValueError("labels out of range for the topology's class count")

    rng = np.random.default_rng(seed)
    sizes = topology.sizes
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / sizes[l]), size=(sizes[l], sizes[l + 1]))
        for l in range(topology.n_weight_layers)
    ]
    biases = [np.zeros(sizes[l + 1]) for l in range(topology.n_weight_layers)]
    alphas = np.full(topology.n_hidden, 0.25)

    n = x.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch_model = MlpModel(
                topology,
                tuple(weights),
                tuple(biases),
                alphas,
                trained_epochs=epoch,
            )
            loss, dws, dbs, dalpha = loss_and_gradients(batch_model, x[idx], labels[idx])
            if not np.isfinite(loss):
                raise ValueError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch offset {start}"
                )
            loss_sum += loss * len(idx)
            weights = [w - learning_rate * dw for w, dw in zip(weights, dws)]
            biases = [b - learning_rate * db for b, db in zip(biases, dbs)]
            alphas = np.maximum(alphas - learning_rate * dalpha, 0.0)
            if weight_clip is not None:
                weights = [np.clip(w, -weight_clip, weight_clip) for w in weights]
                biases = [np.clip(b, -weight_clip, weight_clip) for b in biases]
        if epoch_callback is not None:
            epoch_callback(epoch, loss_sum / n)

    model = MlpModel(
        topology, tuple(weights), tuple(biases), alphas, trained_epochs=epochs
    )
    final_acc = accuracy(model, dataset)
    log.info(
        "trained %s for %d epochs (seed %d): train accuracy %.4f",
        topology,
        epochs,
        seed,
        final_acc,
    )
    return model


def accuracy(model: MlpModel, dataset, backend: Backend | None = None) -> float:
    """Fraction of dataset elements whose argmax matches the label.

    ``backend=None`` uses the full-precision reference forward pass.
    """
    x = np.asarray(dataset.inputs, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    if backend is None:
        scores = forward_real_batch(model, x)
    else:
        scores = forward_batch(model, x, backend)
    return float(np.mean(scores.argmax(axis=1) == labels))


def save_model(model: MlpModel, path) -> None:
    """Serialize a model: magic, version, topology, raw float64 weights, CRC32.

    All integers and floats are little-endian; the trailing CRC32 covers
    every preceding byte.
    """
    parts = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION)]
    sizes = model.topology.sizes
    parts.append(struct.pack("<I", len(sizes)))
    parts.append(struct.pack(f"<{len(sizes)}I", *sizes))
    parts.append(struct.pack("<I", model.trained_epochs))
    parts.append(struct.pack("<I", len(model.prelu_alphas)))
    parts.append(np.ascontiguousarray(model.prelu_alphas, dtype="<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body))
    path = str(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> MlpModel:
    """Read a model file back, verifying magic, version, sizes, and CRC32."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MODEL_MAGIC) + 2 + 4:
        raise ModelFileError(f"{path}: file too short ({len(blob)} bytes)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError(f"{path}: checksum mismatch")
    if body[:4] != MODEL_MAGIC:
        raise ModelFileError(f"{path}: bad magic {body[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<H", body, off)
    off += 2
    if version != MODEL_VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    try:
        (n_sizes,) = struct.unpack_from("<I", body, off)
        off += 4
        sizes = struct.unpack_from(f"<{n_sizes}I", body, off)
        off += 4 * n_sizes
        (trained_epochs,) = struct.unpack_from("<I", body, off)
        off += 4
        (n_alphas,) = struct.unpack_from("<I", body, off)
        off += 4
        alphas = np.frombuffer(body, "<f8", count=n_alphas, offset=off).copy()
        off += 8 * n_alphas
        weights = []
        biases = []
        for l in range(n_sizes - 1):
            n_in, n_out = sizes[l], sizes[l + 1]
            w = np.frombuffer(body, "<f8", count=n_in * n_out, offset=off)
            off += 8 * n_in * n_out
            b = np.frombuffer(body, "<f8", count=n_out, offset=off)
            off += 8 * n_out
            weights.append(w.reshape(n_in, n_out).copy())
            biases.append(b.copy())
    except (struct.error, ValueError) as exc:
        raise ModelFileError(f"{path}: truncated or malformed body: {exc}") from exc
    if off != len(body):
        raise ModelFileError(
            f"{path}: {len(body) - off} unexpected trailing bytes before checksum"
        )
    try:
        return MlpModel(
            Topology(tuple(sizes)),
            tuple(weights),
            tuple(biases),
            alphas,
            trained_epochs=trained_epochs,
        )
    except ValueError as exc:
        raise ModelFileError(f"{path}: inconsistent model contents: {exc}") from exc
