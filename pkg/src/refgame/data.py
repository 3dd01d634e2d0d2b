"""CIFAR-10 binary ingestion and dataset split utilities.

The published binary layout is parsed bit-exactly: each record is 3073 bytes
(1 label byte followed by 3072 pixel bytes as three 1024-byte row-major
channel planes, R then G then B), 10000 records per batch file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

RECORD_BYTES = 3073
RECORDS_PER_FILE = 10_000
FILE_BYTES = RECORD_BYTES * RECORDS_PER_FILE  # 30,730,000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
N_CLASSES = 10
CLASS_NAMES = ("airplane", "automobile", "bird", "cat", "deer",
               "dog", "frog", "horse", "ship", "truck")


@dataclass
class DatasetSplit:
    """A named set of images with class labels."""

    images: np.ndarray  # (N, 32, 32, 3) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64 in [0, 10)
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and not (0 <= self.labels.min()
                                     and self.labels.max() < N_CLASSES):
            raise ValueError("labels outside [0, 10)")

    def __len__(self) -> int:
        return len(self.images)

    def channel_stats(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Per-channel pixel mean and standard deviation."""
        mean = self.images.mean(axis=(0, 1, 2))
        std = self.images.std(axis=(0, 1, 2))
        return tuple(float(m) for m in mean), tuple(max(float(s), 1e-6) for s in std)


def _parse_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != FILE_BYTES:
        raise DataFormatError(
            f"{path}: expected {FILE_BYTES} bytes, found {raw.size}")
    records = raw.reshape(RECORDS_PER_FILE, RECORD_BYTES)
    labels = records[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise DataFormatError(
            f"{path}: label byte {labels[bad[0]]} > 9 at offset "
            f"{int(bad[0]) * RECORD_BYTES}")
    pixels = records[:, 1:].reshape(RECORDS_PER_FILE, 3, 32, 32)
    images = pixels.transpose(0, 2, 3, 1).astype(np.float32) / 255.0
    return images, labels.astype(np.int64)


def _resolve_dir(path) -> Path:
    path = Path(path)
    nested = path / "cifar-10-batches-bin"
    if nested.is_dir():
        return nested
    return path


def load_cifar10(path) -> tuple[DatasetSplit, DatasetSplit]:
    """Parse the binary batch files into (train, test) splits."""
    root = _resolve_dir(path)
    missing = [name for name in (*TRAIN_FILES, TEST_FILE)
               if not (root / name).is_file()]
    if missing:
        raise DataFormatError(
            f"{root}: missing CIFAR-10 batch files: {', '.join(missing)}")
    train_images, train_labels = [], []
    for name in TRAIN_FILES:
        images, labels = _parse_file(root / name)
        train_images.append(images)
        train_labels.append(labels)
    test_images, test_labels = _parse_file(root / TEST_FILE)
    train = DatasetSplit(np.concatenate(train_images),
                         np.concatenate(train_labels), name="train")
    test = DatasetSplit(test_images, test_labels, name="test")
    return train, test


def record_bytes(image: np.ndarray, label: int) -> bytes:
    """Serialise one image + label back into the binary record layout."""
    if image.shape != (32, 32, 3):
        raise ValueError(f"expected a (32, 32, 3) image, got {image.shape}")
    if not 0 <= int(label) <= 9:
        raise ValueError(f"label {label} outside [0, 9]")
    pixels = np.round(np.asarray(image, dtype=np.float64) * 255.0)
    planes = pixels.astype(np.uint8).transpose(2, 0, 1)
    return bytes([int(label)]) + planes.tobytes()


def stratified_subsample(split: DatasetSplit, n: int, seed: int) -> DatasetSplit:
    """Seed-deterministic subsample with equal per-class counts."""
    if n % N_CLASSES != 0:
        raise ValueError(f"subsample size {n} must be a multiple of {N_CLASSES}")
    per_class = n // N_CLASSES
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    chosen = []
    for c in range(N_CLASSES):
        pool = np.nonzero(split.labels == c)[0]
        if pool.size < per_class:
            raise ValueError(
                f"class {c} has only {pool.size} images, need {per_class}")
        chosen.append(rng.choice(pool, size=per_class, replace=False))
    idx = np.concatenate(chosen)
    rng.shuffle(idx)
    return DatasetSplit(split.images[idx], split.labels[idx],
                        name=f"{split.name}[{n}]")
