"""Dataset loading, synthesis, and split management.

Inputs are always dense float64 row vectors with integer labels and a
declared normalization: ``unit-interval`` for [0, 1] pixel data and
``bipolar`` for [-1, 1] stochastic-native data. The two are affine images
of each other, so converting back and forth is lossless up to float
rounding.

Supported sources:

* IDX image/label file pairs (big-endian headers, one unsigned byte per
  pixel or label),
* CIFAR-10 binary batches (3073-byte records, one label byte then 3072
  pixel bytes),
* seeded synthetic Gaussian blobs for tests and smoke runs.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "Dataset",
    "load_idx",
    "load_cifar10",
    "synth_blobs",
    "split",
    "IDX_IMAGE_MAGIC",
    "IDX_LABEL_MAGIC",
]

log = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_CIFAR_RECORD = 3073  # 1 label byte + 32*32*3 pixel bytes
_CIFAR_PIXELS = 3072
_CIFAR_CLASSES = 10

_NORMALIZATIONS = ("unit-interval", "bipolar")


@dataclass(frozen=True)
class Dataset:
    """Labeled vectors plus bookkeeping about where they came from."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    split_tag: str = "train"
    normalization: str = "unit-interval"

    def __post_init__(self) -> None:
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ValueError(f"inputs must be (n, d), got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match {inputs.shape[0]} rows"
            )
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.normalization not in _NORMALIZATIONS:
            raise ValueError(
                f"normalization must be one of {_NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )
        if inputs.shape[0]:
            if labels.min() < 0 or labels.max() >= self.n_classes:
                raise ValueError("labels out of [0, n_classes)")
            lo, hi = (0.0, 1.0) if self.normalization == "unit-interval" else (-1.0, 1.0)
            if inputs.min() < lo or inputs.max() > hi:
                raise ValueError(
                    f"inputs outside the declared {self.normalization} range"
                )
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def to_bipolar(self) -> "Dataset":
        """Affinely map unit-interval data onto [-1, 1]."""
        if self.normalization == "bipolar":
            return self
        return replace(self, inputs=self.inputs * 2.0 - 1.0, normalization="bipolar")

    def to_unit(self) -> "Dataset":
        """Affinely map bipolar data onto [0, 1]."""
        if self.normalization == "unit-interval":
            return self
        return replace(
            self, inputs=(self.inputs + 1.0) / 2.0, normalization="unit-interval"
        )


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair as unit-interval vectors.

    Headers are big-endian: images carry (magic, count, rows, cols) and
    labels carry (magic, count). Image and label counts must agree and the
    payload sizes must match the headers exactly.
    """
    with open(images_path, "rb") as f:
        header = f.read(16)
        if len(header) != 16:
            raise ValueError(f"{images_path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(
                f"{images_path}: bad magic 0x{magic:08x}, "
                f"expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise ValueError(
            f"{images_path}: {len(payload)} payload bytes, header promises {expected}"
        )

    with open(labels_path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise ValueError(f"{labels_path}: truncated IDX header")
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(
                f"{labels_path}: bad magic 0x{magic:08x}, "
                f"expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        label_payload = f.read()
    if len(label_payload) != label_count:
        raise ValueError(
            f"{labels_path}: {len(label_payload)} payload bytes, "
            f"header promises {label_count}"
        )
    if label_count != count:
        raise ValueError(
            f"image/label count mismatch: {count} images, {label_count} labels"
        )

    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    labels = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)
    n_classes = max(int(labels.max()) + 1, 2) if count else 10
    return Dataset(
        inputs=pixels.astype(np.float64) / 255.0,
        labels=labels,
        n_classes=n_classes,
        split_tag="train",
        normalization="unit-interval",
    )


def load_cifar10(paths: Sequence) -> Dataset:
    """Load CIFAR-10 binary batches as unit-interval vectors.

    Every file must be a whole number of 3073-byte records and labels must
    be below 10. Zero records overall is legal but suspicious, so it loads
    as an empty dataset with a logged warning.
    """
    if isinstance(paths, (str, bytes)):
        paths = [paths]
    if not paths:
        raise ValueError("no batch files given")
    all_pixels = []
    all_labels = []
    for path in paths:
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) % _CIFAR_RECORD:
            raise ValueError(
                f"{path}: {len(blob)} bytes is not a whole number of "
                f"{_CIFAR_RECORD}-byte records"
            )
        records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        labels = records[:, 0].astype(np.int64)
        if records.shape[0] and labels.max() >= _CIFAR_CLASSES:
            bad = int(labels.max())
            raise ValueError(f"{path}: label {bad} out of range for 10 classes")
        all_labels.append(labels)
        all_pixels.append(records[:, 1:])
    pixels = np.concatenate(all_pixels)
    labels = np.concatenate(all_labels)
    if pixels.shape[0] == 0:
        log.warning("CIFAR-10 batches contained no records")
    return Dataset(
        inputs=pixels.astype(np.float64) / 255.0,
        labels=labels,
        n_classes=_CIFAR_CLASSES,
        split_tag="train",
        normalization="unit-interval",
    )


def synth_blobs(
    classes: int,
    dims: int,
    n_per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Seeded Gaussian clusters rescaled onto the unit interval.

    Class centers sit on scaled coordinate axes so that any two centers
    (while classes <= dims) are exactly ``separation`` apart in units of
    the within-cluster standard deviation. After sampling, one global
    affine map takes the whole cloud into [0, 1]; it rescales distances
    uniformly, so cluster geometry is preserved.
    """
    if classes < 2:
        raise ValueError(f"classes must be >= 2, got {classes}")
    if dims < 1 or n_per_class < 1:
        raise ValueError("dims and n_per_class must be >= 1")
    if not separation > 0:
        raise ValueError(f"separation must be > 0, got {separation}")
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, dims))
    scale = separation / np.sqrt(2.0)
    for c in range(classes):
        centers[c, c % dims] = scale * (1 + c // dims)
    labels = np.repeat(np.arange(classes), n_per_class)
    points = centers[labels] + rng.standard_normal((classes * n_per_class, dims))
    lo, hi = points.min(), points.max()
    unit = (points - lo) / (hi - lo)
    return Dataset(
        inputs=unit,
        labels=labels,
        n_classes=classes,
        split_tag="train",
        normalization="unit-interval",
    )


def split(
    dataset: Dataset,
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/calibration/test split.

    Fractions must be non-negative and sum to one. Membership is decided
    per class with a seeded shuffle, then cumulative rounding keeps every
    class's proportions honest within one element. Within each split the
    original dataset order is preserved, so the three index sets always
    reassemble the input exactly.
    """
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3 or any(f < 0 for f in fracs):
        raise ValueError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fracs)}")
    rng = np.random.default_rng(seed)
    picks: tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]] = ([], [], [])
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        rng.shuffle(idx)
        n = idx.shape[0]
        b1 = round(fracs[0] * n)
        b2 = round((fracs[0] + fracs[1]) * n)
        picks[0].append(idx[:b1])
        picks[1].append(idx[b1:b2])
        picks[2].append(idx[b2:])
    tags = ("train", "calibration", "test")
    out = []
    for part, tag in zip(picks, tags):
        chosen = np.sort(np.concatenate(part)) if part else np.empty(0, np.int64)
        out.append(
            Dataset(
                inputs=dataset.inputs[chosen],
                labels=dataset.labels[chosen],
                n_classes=dataset.n_classes,
                split_tag=tag,
                normalization=dataset.normalization,
            )
        )
    return out[0], out[1], out[2]
