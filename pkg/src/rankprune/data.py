"""Desk-scale datasets: seeded synthetic images and the IDX file format.

The synthetic generator builds one low-frequency template per class from a
seeded cosine basis and adds per-sample Gaussian noise, producing a task
that a nearest-centroid baseline solves well above chance but below 100%.
The IDX loader reads the standard big-endian image/label container
(magic 0x00000803 for images, 0x00000801 for labels) and scales pixels
to [0, 1].
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import IdxFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Immutable image-classification dataset with a train/test split."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, ch, h, w), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must align with images")
        if self.labels.size and int(self.labels.max()) >= self.class_count:
            raise ValueError("labels must be < class_count")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise ValueError("train and test splits must be disjoint")
        train_classes = set(self.labels[self.train_idx].tolist())
        if train_classes != set(range(self.class_count)):
            raise ValueError("every class needs at least one train sample")

    @property
    def train_images(self) -> np.ndarray:
        return self.images[self.train_idx]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def test_images(self) -> np.ndarray:
        return self.images[self.test_idx]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_idx]

    def fingerprint(self) -> str:
        """Content hash covering pixels, labels, and split layout."""
        h = hashlib.sha256()
        h.update(struct.pack("<I", self.class_count))
        for a in (self.images, self.labels, self.train_idx, self.test_idx):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def _stratified_split(labels: np.ndarray, train_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        n_train = max(1, int(round(members.size * train_fraction)))
        train.extend(members[:n_train].tolist())
        test.extend(members[n_train:].tolist())
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(np.asarray(test, dtype=np.int64))


def generate_synthetic(
    seed: int,
    classes: int = 4,
    per_class: int = 200,
    size: tuple[int, int, int] = (1, 8, 8),
    noise: float = 0.9,
    train_fraction: float = 0.8,
) -> Dataset:
    """Seeded multi-class images: class template + per-sample noise.

    Templates combine a handful of low-frequency cosine waves with seeded
    coefficients, rescaled to mean 0.5 and std 0.25 so pixels sit mostly
    inside [0, 1]; noise is i.i.d. Gaussian with the given std.
    """
    if classes < 2 or per_class < 2:
        raise ValueError(f"need classes >= 2 and per_class >= 2, got {classes}, {per_class}")
    ch, h, w = size
    if min(ch, h, w) < 1:
        raise ValueError(f"degenerate size {size}")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    freqs = [(0, 1), (1, 0), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2)]
    templates = np.zeros((classes, ch, h, w))
    for cls in range(classes):
        for c in range(ch):
            plane = np.zeros((h, w))
            for fy, fx in freqs:
                coeff = rng.normal()
                phase = rng.uniform(0.0, 2.0 * np.pi)
                plane += coeff * np.cos(2.0 * np.pi * (fy * yy / h + fx * xx / w) + phase)
            std = plane.std()
            if std > 0.0:
                plane = plane / std
            templates[cls, c] = 0.5 + 0.25 * plane
    images = np.zeros((classes * per_class, ch, h, w))
    labels = np.zeros(classes * per_class, dtype=np.int64)
    for cls in range(classes):
        lo = cls * per_class
        images[lo : lo + per_class] = templates[cls] + rng.normal(
            0.0, noise, size=(per_class, ch, h, w)
        )
        labels[lo : lo + per_class] = cls
    train_idx, test_idx = _stratified_split(labels, train_fraction)
    return Dataset(
        images=images,
        labels=labels,
        class_count=classes,
        train_idx=train_idx,
        test_idx=test_idx,
    )


def _read_idx(path, expected_magic: int, what: str) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise IdxFormatError(f"{what} file too short for magic: {path}")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"bad magic 0x{magic:08x} in {what} file (expected 0x{expected_magic:08x}): {path}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise IdxFormatError(f"truncated {what} header: {path}")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) != header + count:
        raise IdxFormatError(
            f"truncated {what} payload: expected {count} bytes, got {len(buf) - header}: {path}"
        )
    return np.frombuffer(buf, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, train_fraction: float = 0.8) -> Dataset:
    """Load an IDX image/label pair as single-channel images in [0, 1]."""
    raw_images = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    raw_labels = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {raw_images.shape[0]} images vs {raw_labels.shape[0]} labels"
        )
    images = (raw_images.astype(np.float64) / 255.0)[:, np.newaxis, :, :]
    labels = raw_labels.astype(np.int64)
    train_idx, test_idx = _stratified_split(labels, train_fraction)
    return Dataset(
        images=images,
        labels=labels,
        class_count=int(labels.max()) + 1,
        train_idx=train_idx,
        test_idx=test_idx,
    )
