"""Shared fixtures: deterministic image-style datasets in the real file formats.

The image experiments run against IDX/CIFAR files on disk.  When the
environment provides real files (FLATPRIOR_DATA, or FLATPRIOR_MNIST_IMAGES /
FLATPRIOR_MNIST_LABELS), those are used; otherwise a deterministic synthetic
two-class image set is written in the exact IDX byte format and consumed
through the same loaders.  The synthetic images mimic the two structural
features of handwritten digits the experiments rely on: sparse localized
strokes (most pixels black) and a subpopulation of genuinely confusable
examples, built as tight clusters of cross-class blends carrying both
labels, which keep some training margins small the way ambiguous digits do.
"""

from __future__ import annotations

import os
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flatprior.data import load_mnist

SYNTH_COUNT = 4000
SYNTH_SEED = 20240817


def _sparse_prototypes(rng: np.random.Generator) -> np.ndarray:
    """Ten 28x28 prototype images: coarse random grids upsampled 4x, then
    thresholded so only the brightest quarter of pixels survive."""
    coarse = rng.uniform(0.0, 1.0, size=(10, 7, 7))
    protos = np.kron(coarse, np.ones((4, 4))).reshape(10, 784)
    for k in range(10):
        cut = np.quantile(protos[k], 0.75)
        protos[k] = np.where(protos[k] >= cut, protos[k], 0.0)
    return protos


def make_synthetic_idx(images_path: Path, labels_path: Path,
                       count: int = SYNTH_COUNT, seed: int = SYNTH_SEED,
                       ambiguous_frac: float = 0.15) -> None:
    """Write a two-class image set in the standard IDX byte format.

    Digit identities 0-9 map to labels via digit >= 5, matching the
    binarized loader.  85% of examples are noisy copies of their digit
    prototype; the rest sit in 25 tight "confusable" clusters centered on a
    blend of one low and one high digit, with the digit identity (and hence
    the label) drawn at random per example.  Pixels are uint8 in the file,
    [0, 1] after loading.
    """
    rng = np.random.default_rng(seed)
    protos = _sparse_prototypes(rng)
    n_clusters = 25
    pairs = [(rng.integers(0, 5), rng.integers(5, 10)) for _ in range(n_clusters)]
    centers = np.stack([0.5 * protos[a] + 0.5 * protos[b] for a, b in pairs])
    digits = rng.integers(0, 10, size=count).astype(np.uint8)
    imgs = protos[digits].copy()
    amb = rng.uniform(size=count) < ambiguous_frac
    cluster = rng.integers(0, n_clusters, size=count)
    for i in np.where(amb)[0]:
        lo, hi = pairs[cluster[i]]
        digits[i] = lo if rng.uniform() < 0.5 else hi
        imgs[i] = centers[cluster[i]] + rng.normal(0.0, 0.02, 784)
    clean = ~amb
    noise = rng.normal(0.0, 0.12, size=(count, 784)) * (imgs > 0)
    imgs[clean] += noise[clean]
    imgs = np.clip(imgs, 0.0, 1.0)
    pixel_bytes = np.round(imgs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        fh.write(pixel_bytes.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, count))
        fh.write(digits.tobytes())


def _env_mnist_paths():
    imgs = os.environ.get("FLATPRIOR_MNIST_IMAGES")
    labs = os.environ.get("FLATPRIOR_MNIST_LABELS")
    if imgs and labs and os.path.exists(imgs) and os.path.exists(labs):
        return imgs, labs
    data_dir = os.environ.get("FLATPRIOR_DATA")
    if data_dir:
        for suffix in ("", ".gz"):
            i = os.path.join(data_dir, "train-images-idx3-ubyte" + suffix)
            l = os.path.join(data_dir, "train-labels-idx1-ubyte" + suffix)
            if os.path.exists(i) and os.path.exists(l):
                return i, l
    return None


@pytest.fixture(scope="session")
def mnist_is_real() -> bool:
    return _env_mnist_paths() is not None


@pytest.fixture(scope="session")
def mnist_files(tmp_path_factory):
    """(images_path, labels_path) for a real or synthetic IDX dataset."""
    real = _env_mnist_paths()
    if real:
        return real
    root = tmp_path_factory.mktemp("idx")
    images = root / "train-images-idx3-ubyte"
    labels = root / "train-labels-idx1-ubyte"
    make_synthetic_idx(images, labels)
    return str(images), str(labels)


@pytest.fixture(scope="session")
def mnist_set(mnist_files):
    return load_mnist(*mnist_files)


@pytest.fixture(scope="session")
def cifar_file(tmp_path_factory):
    """Small CIFAR-10-format binary batch with a known class layout."""
    root = tmp_path_factory.mktemp("cifar")
    path = root / "data_batch_1.bin"
    rng = np.random.default_rng(7)
    classes = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 3, 3, 1, 7], dtype=np.uint8)
    records = []
    for c in classes:
        pixels = rng.integers(0, 256, size=3072, dtype=np.uint16).astype(np.uint8)
        records.append(bytes([c]) + pixels.tobytes())
    path.write_bytes(b"".join(records))
    return str(path), classes
