"""Dataset ingestion and split construction.

Readers for the classic IDX image format and the CIFAR-10 binary batch
format, binarization to two classes, the seeded train/attack/test split
(attack examples carry deliberately flipped labels), and exhaustive Boolean
input enumeration.  Loading is byte-deterministic; no network access.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import LabeledSet

__all__ = [
    "SplitConfig",
    "load_mnist",
    "load_cifar10_binary",
    "make_split",
    "boolean_inputs",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 class byte + 32*32*3 pixels
CIFAR_KEEP = {1: 0, 3: 1}  # automobile -> 0, cat -> 1


@dataclass(frozen=True)
class SplitConfig:
    """Sizes of the train set S, attack set A and test set E, plus the shuffle seed."""

    train_size: int
    attack_size: int
    test_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.train_size < 0 or self.attack_size < 0 or self.test_size < 0:
            raise ValueError("split sizes must be nonnegative")

    @property
    def total(self) -> int:
        return self.train_size + self.attack_size + self.test_size


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_mnist(images_path, labels_path) -> LabeledSet:
    """Binarized IDX image set: digits 0-4 get label 0, digits 5-9 label 1.

    Pixels are scaled to [0, 1]; row order is preserved from the files.
    Gzipped files are decompressed transparently.
    """
    img = _read_bytes(images_path)
    lab = _read_bytes(labels_path)
    if len(img) < 16 or len(lab) < 8:
        raise ValueError("truncated IDX file")
    magic, count, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad image magic 0x{magic:08x}")
    lmagic, lcount = struct.unpack(">II", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise ValueError(f"bad label magic 0x{lmagic:08x}")
    if lcount != count:
        raise ValueError(f"image count {count} != label count {lcount}")
    n_pix = count * rows * cols
    if len(img) != 16 + n_pix:
        raise ValueError("image file length does not match header")
    if len(lab) != 8 + count:
        raise ValueError("label file length does not match header")
    pixels = np.frombuffer(img, dtype=np.uint8, offset=16).reshape(count, rows * cols)
    digits = np.frombuffer(lab, dtype=np.uint8, offset=8)
    if digits.size and digits.max() > 9:
        raise ValueError("label byte outside 0-9")
    return LabeledSet(pixels.astype(np.float64) / 255.0, (digits >= 5).astype(np.uint8))


def load_cifar10_binary(batch_paths) -> LabeledSet:
    """Two-class subset of CIFAR-10 binary batches: automobile (0) vs cat (1).

    Each record is 1 class byte + 3072 pixel bytes (1024 R, 1024 G, 1024 B,
    row-major 32x32); records of any other class are dropped.  Features are
    the 3072 pixels scaled to [0, 1], flattened in file order.
    """
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    feats, labels = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) % CIFAR_RECORD_BYTES != 0:
            raise ValueError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        kept = rec[np.isin(rec[:, 0], list(CIFAR_KEEP))]
        feats.append(kept[:, 1:].astype(np.float64) / 255.0)
        labels.append(np.array([CIFAR_KEEP[c] for c in kept[:, 0]], dtype=np.uint8))
    if not feats:
        return LabeledSet(np.empty((0, CIFAR_RECORD_BYTES - 1)), np.empty(0, dtype=np.uint8))
    return LabeledSet(np.concatenate(feats, axis=0), np.concatenate(labels))


def make_split(full: LabeledSet, cfg: SplitConfig):
    """Seeded shuffle, then carve (S, A, E) as consecutive disjoint slices.

    S keeps true labels, A has every label flipped (the attack set), E keeps
    true labels.  The same seed always produces the same split.
    """
    if cfg.total > len(full):
        raise ValueError(
            f"split needs {cfg.total} examples but only {len(full)} are available"
        )
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(full))
    s_idx = perm[: cfg.train_size]
    a_idx = perm[cfg.train_size : cfg.train_size + cfg.attack_size]
    e_idx = perm[cfg.train_size + cfg.attack_size : cfg.total]
    s = full.subset(s_idx)
    a = full.subset(a_idx)
    a = LabeledSet(a.inputs, (1 - a.labels).astype(np.uint8))
    e = full.subset(e_idx)
    return s, a, e


def boolean_inputs(n: int) -> np.ndarray:
    """All 2^n binary vectors, row k = binary digits of k, most significant first."""
    if not 1 <= n <= 20:
        raise ValueError("n must be in [1, 20]")
    k = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1)
    return ((k[:, None] >> shifts[None, :]) & 1).astype(np.float64)
