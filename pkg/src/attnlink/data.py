"""Dataset ingestion and synthetic-shapes generation.

CIFAR-10 uses the plain binary layout: one record = 1 label byte + 3072 pixel
bytes (1024 R, 1024 G, 1024 B, row-major). The shapes generator produces a
deterministic two-class set (square vs disc) with tight localization boxes.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError

RECORD_BYTES = 3073
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)


@dataclass
class Dataset:
    images: np.ndarray                      # [N, 3, 32, 32] float32 in [0, 1]
    labels: list
    boxes: list = field(default_factory=list)  # optional (x0, y0, x1, y1) per image

    def __len__(self):
        return self.images.shape[0]


def read_cifar10_batch(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % RECORD_BYTES:
        raise FormatError(
            f"file length {len(raw)} is not a multiple of {RECORD_BYTES}",
            offset=(len(raw) // RECORD_BYTES) * RECORD_BYTES)
    n = len(raw) // RECORD_BYTES
    if n == 0:
        return Dataset(images=np.zeros((0, 3, 32, 32), dtype=np.float32), labels=[])
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(n, RECORD_BYTES)
    labels = rec[:, 0]
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        raise FormatError(f"label byte {labels[bad[0]]} > 9", offset=int(bad[0]) * RECORD_BYTES)
    images = rec[:, 1:].reshape(n, 3, 32, 32).astype(np.float32) / 255.0
    return Dataset(images=images, labels=[int(x) for x in labels])


def write_cifar10_batch(path, dataset):
    """Inverse of the reader (pixels re-quantized to bytes)."""
    n = len(dataset)
    rec = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = np.asarray(dataset.labels, dtype=np.uint8)
    rec[:, 1:] = np.rint(np.clip(dataset.images, 0.0, 1.0) * 255.0).astype(np.uint8).reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(rec.tobytes())


def normalize_images(images, mean=CIFAR10_MEAN, std=CIFAR10_STD):
    mean = np.asarray(mean, dtype=images.dtype).reshape(1, 3, 1, 1)
    std = np.asarray(std, dtype=images.dtype).reshape(1, 3, 1, 1)
    return (images - mean) / std


def gen_shapes(seed, n, classes=2):
    """Deterministic noisy-background shapes: class 0 = square, class 1 = disc."""
    if n <= 0:
        raise InputError(f"sample count must be positive, got {n}")
    if classes != 2:
        raise InputError(f"shapes generator supports exactly 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    images = np.empty((n, 3, 32, 32), dtype=np.float32)
    labels = []
    boxes = []
    yy, xx = np.mgrid[0:32, 0:32]
    for i in range(n):
        label = int(rng.integers(0, 2))
        size = int(rng.integers(8, 17))
        x0 = int(rng.integers(0, 33 - size))
        y0 = int(rng.integers(0, 33 - size))
        color = rng.uniform(0.6, 1.0, size=3)
        img = rng.uniform(0.0, 0.2, size=(3, 32, 32))
        if label == 0:
            mask = (yy >= y0) & (yy < y0 + size) & (xx >= x0) & (xx < x0 + size)
        else:
            cy, cx = y0 + (size - 1) / 2.0, x0 + (size - 1) / 2.0
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= (size / 2.0) ** 2
        img[:, mask] = color[:, None]
        rows = np.nonzero(mask.any(axis=1))[0]
        cols = np.nonzero(mask.any(axis=0))[0]
        boxes.append((int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1))
        labels.append(label)
        images[i] = img.astype(np.float32)
    return Dataset(images=images, labels=labels, boxes=boxes)


def write_boxes_csv(path, dataset):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x0", "y0", "x1", "y1"])
        for i, box in enumerate(dataset.boxes):
            writer.writerow([i, *box])


def read_boxes_csv(path):
    boxes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            boxes.append((int(row["x0"]), int(row["y0"]), int(row["x1"]), int(row["y1"])))
    return boxes


# -- light augmentation -------------------------------------------------


def _pad_crop(images, dy, dx, pad=4):
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h, w = images.shape[2], images.shape[3]
    return padded[:, :, dy:dy + h, dx:dx + w]


def augment_batch(images, seed):
    """Pad-4/random-crop-32 plus horizontal flip with probability 0.5, seeded."""
    rng = np.random.default_rng(seed)
    out = np.empty_like(images)
    pad = 4
    for i in range(images.shape[0]):
        dy = int(rng.integers(0, 2 * pad + 1))
        dx = int(rng.integers(0, 2 * pad + 1))
        img = _pad_crop(images[i:i + 1], dy, dx, pad)[0]
        if rng.random() < 0.5:
            img = img[:, :, ::-1]
        out[i] = img
    return out
