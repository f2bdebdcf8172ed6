"""Shared fixtures and independent binary-format writers.

The writers here are deliberately separate implementations of the IDX and
CIFAR-10 container layouts (struct-level, big-endian where the format says
so) so the loaders in the package are checked against something other than
themselves.
"""

from __future__ import annotations

import struct

import numpy as np
import pytest

from ari.data import Dataset, split, synth_blobs
from ari.mlp import MlpModel, Topology, train


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write IDX image/label files from a uint8 (n, rows, cols) stack."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(labels.tobytes())


def write_cifar_batch(path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write one CIFAR-10 batch: per record 1 label byte + 3072 pixel bytes."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), 3072)
    records = bytearray()
    for label, pixels in zip(np.asarray(labels, dtype=np.uint8), images):
        records.append(int(label))
        records.extend(pixels.tobytes())
    with open(path, "wb") as fh:
        fh.write(bytes(records))


@pytest.fixture(scope="session")
def blobs_small() -> Dataset:
    return synth_blobs(classes=4, dims=8, n_per_class=100, separation=6.0, seed=1)


@pytest.fixture(scope="session")
def blobs_split(blobs_small):
    return split(blobs_small, (0.6, 0.25, 0.15), seed=1)


@pytest.fixture(scope="session")
def model_small(blobs_split) -> MlpModel:
    train_ds = blobs_split[0]
    return train(
        train_ds,
        Topology((8, 16, 4)),
        epochs=30,
        learning_rate=0.3,
        batch_size=32,
        seed=0,
    )
