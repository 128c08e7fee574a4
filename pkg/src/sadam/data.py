"""Synthetic dataset generation and IDX-format I/O.

Datasets are immutable in-memory tables: an (n, d_in) float64 feature matrix,
integer class labels, a deterministic 80/20 train/test split, and a content
digest that keys caches and splits.
"""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IdxParseError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# Gaussian cluster noise is radially clipped at 1.8 standard deviations, so
# classes whose centers sit 4*spread apart keep a margin >= 0.4*spread.
_CLIP_RADIUS = 1.8


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    hash: str

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _digest(features: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(features).tobytes())
    h.update(np.ascontiguousarray(labels).tobytes())
    return h.hexdigest()


def _split(features: np.ndarray, labels: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified 80/20 split, a function of (content digest, seed) only."""
    digest = _digest(features, labels)
    rng = np.random.default_rng([seed & 0xFFFFFFFF, int(digest[:16], 16)])
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        cut = max(1, int(round(idx.size * 0.8))) if idx.size > 1 else idx.size
        train.extend(idx[:cut])
        test.extend(idx[cut:])
    return np.sort(np.array(train, dtype=np.intp)), np.sort(np.array(test, dtype=np.intp))


def _make_dataset(features: np.ndarray, labels: np.ndarray, seed: int) -> Dataset:
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.intp)
    features.setflags(write=False)
    labels.setflags(write=False)
    train, test = _split(features, labels, seed)
    return Dataset(features, labels, train, test, _digest(features, labels))


def _class_centers(classes: int, d_in: int, spread: float) -> np.ndarray:
    """Centers with pairwise distance exactly 4*spread (on a circle for k >= 3)."""
    centers = np.zeros((classes, d_in))
    if classes == 1:
        return centers
    if classes == 2:
        centers[0, 0] = -2.0 * spread
        centers[1, 0] = 2.0 * spread
        return centers
    radius = 2.0 * spread / np.sin(np.pi / classes)
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def gen_blobs(n: int, d_in: int, classes: int, spread: float, seed: int) -> Dataset:
    """Gaussian class clusters, deterministic in the seed.

    One cluster per class with standard deviation ``spread`` and adjacent
    centers 4*spread apart; the cluster noise is radially clipped (see
    _CLIP_RADIUS) so the classes are linearly separable by construction.
    """
    if n < classes or d_in < 1 or classes < 1:
        raise ConfigError(f"degenerate blob sizes: n={n}, d_in={d_in}, classes={classes}")
    if classes >= 3 and d_in < 2:
        raise ConfigError("three or more classes need d_in >= 2")
    if not spread > 0:
        raise ConfigError(f"spread must be > 0, got {spread!r}")
    rng = np.random.default_rng(seed)
    centers = _class_centers(classes, d_in, spread)
    labels = np.arange(n, dtype=np.intp) % classes
    z = rng.standard_normal((n, d_in))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    over = norms > _CLIP_RADIUS
    z = np.where(over, z * (_CLIP_RADIUS / np.where(norms > 0, norms, 1.0)), z)
    features = centers[labels] + spread * z
    return _make_dataset(features, labels, seed)


def _read_be32(buf: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(buf):
        raise IdxParseError(f"truncated {what}", offset)
    return struct.unpack_from(">I", buf, offset)[0]


def read_idx(images_path, labels_path, per_class: int | None = None, seed: int = 0) -> Dataset:
    """Load a big-endian IDX image tensor + label vector pair.

    Pixels are unsigned bytes scaled to [0, 1] by dividing by 255 exactly
    once at load.  ``per_class`` keeps only the first k examples of each
    class, in file order, for deterministic subset runs.
    """
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lab_buf = f.read()

    magic = _read_be32(img_buf, 0, "image magic")
    if magic != IMAGE_MAGIC:
        raise IdxParseError(f"bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}", 0)
    count = _read_be32(img_buf, 4, "image count")
    rows = _read_be32(img_buf, 8, "image rows")
    cols = _read_be32(img_buf, 12, "image cols")
    need = 16 + count * rows * cols
    if len(img_buf) < need:
        raise IdxParseError(
            f"image payload truncated: need {need} bytes, have {len(img_buf)}", len(img_buf)
        )
    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=count * rows * cols, offset=16)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    magic = _read_be32(lab_buf, 0, "label magic")
    if magic != LABEL_MAGIC:
        raise IdxParseError(f"bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}", 0)
    lab_count = _read_be32(lab_buf, 4, "label count")
    if lab_count != count:
        raise IdxParseError(f"label count {lab_count} != image count {count}", 4)
    if len(lab_buf) < 8 + lab_count:
        raise IdxParseError(
            f"label payload truncated: need {8 + lab_count} bytes, have {len(lab_buf)}",
            len(lab_buf),
        )
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=lab_count, offset=8).astype(np.intp)

    if per_class is not None:
        keep = []
        seen: dict[int, int] = {}
        for i, c in enumerate(labels):
            c = int(c)
            if seen.get(c, 0) < per_class:
                keep.append(i)
                seen[c] = seen.get(c, 0) + 1
        features = features[keep]
        labels = labels[keep]

    return _make_dataset(features, labels, seed)


def write_idx(dataset: Dataset, images_path, labels_path, rows: int, cols: int) -> None:
    """Write features (assumed on the byte grid k/255) and labels as IDX files."""
    if rows * cols != dataset.d_in:
        raise ConfigError(f"rows*cols = {rows * cols} != feature dim {dataset.d_in}")
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, dataset.n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, dataset.n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def write_csv(dataset: Dataset, path) -> None:
    """Export as CSV with header label,f0,f1,... at full float precision."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label"] + [f"f{j}" for j in range(dataset.d_in)])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [repr(float(val)) for val in row])
