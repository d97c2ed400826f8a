"""Dataset ingestion and image file I/O.

load_mnist      ← IDX files (0x00000803 images, 0x00000801 labels), gzip accepted
load_cifar10    ← binary batches, 1 label byte + 3072 pixel bytes per record
split_validation, limit_split ← seeded stratified subsets
read_png_dir / write_pngs     ← image directories for the corrupt and augment commands
"""

from __future__ import annotations

import gzip
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from .config import DEFAULT_DATA_ROOT, ENV_DATA_ROOT, VAL_FRACTION
from .errors import DataError, DataFormatError, UsageError

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
CIFAR_PER_BATCH = 10000

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class Split:
    images: np.ndarray    # N×C×H×W float64 in [0, 1]
    labels: np.ndarray    # N int64
    tag: str

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, index: np.ndarray, tag: Optional[str] = None) -> "Split":
        return Split(self.images[index], self.labels[index], tag or self.tag)


@dataclass(frozen=True)
class Dataset:
    name: str
    classes: int
    train: Split
    test: Split
    val: Optional[Split] = None

    @property
    def in_shape(self) -> Tuple[int, int, int]:
        return tuple(self.train.images.shape[1:])


def data_root(flag: Optional[str] = None) -> Path:
    return Path(flag or os.environ.get(ENV_DATA_ROOT) or DEFAULT_DATA_ROOT)


def _find(root: Path, name: str) -> Path:
    for base in (root, root / "mnist", root / "cifar10", root / "cifar-10-batches-bin"):
        for candidate in (base / name, base / f"{name}.gz"):
            if candidate.is_file():
                return candidate
    raise DataError(f"Data file not found: {name} under {root}")


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise DataFormatError(str(path), 0, f"bad gzip stream ({e})") from None
    return raw


# ── MNIST ─────────────────────────────────────────────────

def read_idx(path: Path, magic: int, ndim: int) -> np.ndarray:
    """Parse one IDX file; checks the magic, the declared dims and the payload size."""
    raw = _read_bytes(path)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(str(path), len(raw), f"truncated header, need {header} bytes")
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise DataFormatError(str(path), 0, f"bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    expected = header + int(np.prod(dims))
    if len(raw) < expected:
        raise DataFormatError(str(path), len(raw), f"truncated payload for dims {dims}")
    if len(raw) > expected:
        raise DataFormatError(str(path), expected, f"trailing bytes after dims {dims}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def _mnist_split(root: Path, tag: str) -> Split:
    img_name, lbl_name = MNIST_FILES[tag]
    img_path, lbl_path = _find(root, img_name), _find(root, lbl_name)
    images = read_idx(img_path, IDX_IMAGES_MAGIC, 3)
    labels = read_idx(lbl_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise DataFormatError(str(lbl_path), 4, f"{len(labels)} labels for {len(images)} images")
    if labels.size and labels.max() > 9:
        raise DataFormatError(str(lbl_path), 8 + int(np.argmax(labels > 9)), f"label {labels.max()} out of range")
    return Split(images[:, None].astype(np.float64) / 255.0, labels.astype(np.int64), tag)


def load_mnist(path) -> Dataset:
    root = Path(path)
    ds = Dataset("mnist", 10, _mnist_split(root, "train"), _mnist_split(root, "test"))
    logger.info("MNIST: %d train / %d test from %s", len(ds.train), len(ds.test), root)
    return ds


# ── CIFAR-10 ──────────────────────────────────────────────

def _cifar_batch(path: Path, tag: str) -> Split:
    raw = _read_bytes(path)
    if len(raw) % CIFAR_RECORD:
        raise DataFormatError(str(path), len(raw) - len(raw) % CIFAR_RECORD,
                              f"size {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record")
    if len(raw) // CIFAR_RECORD != CIFAR_PER_BATCH:
        raise DataFormatError(str(path), len(raw),
                              f"{len(raw) // CIFAR_RECORD} records, expected {CIFAR_PER_BATCH}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise DataFormatError(str(path), bad * CIFAR_RECORD, f"label {labels[bad]} out of range")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return Split(images, labels, tag)


def load_cifar10(path) -> Dataset:
    root = Path(path)
    parts = [_cifar_batch(_find(root, name), "train") for name in CIFAR_TRAIN_FILES]
    train = Split(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]), "train")
    ds = Dataset("cifar10", 10, train, _cifar_batch(_find(root, CIFAR_TEST_FILE), "test"))
    logger.info("CIFAR-10: %d train / %d test from %s", len(ds.train), len(ds.test), root)
    return ds


# ── Splits ────────────────────────────────────────────────

def _stratified_order(labels: np.ndarray, seed: int) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)]


def split_validation(ds: Dataset, fraction: float = VAL_FRACTION, seed: int = 0) -> Dataset:
    """Move a stratified `fraction` of train into val; per-class shares differ by at most one sample."""
    if not 0.0 < fraction < 1.0:
        raise UsageError(f"Validation fraction must be in (0, 1), got {fraction}")
    groups = _stratified_order(ds.train.labels, seed)
    n_val = int(round(fraction * len(ds.train)))
    # largest-remainder allocation keeps the total exact
    quotas = np.array([fraction * len(g) for g in groups])
    take = np.floor(quotas).astype(int)
    for i in np.argsort(-(quotas - take), kind="stable")[: n_val - take.sum()]:
        take[i] += 1
    val_idx = np.sort(np.concatenate([g[:k] for g, k in zip(groups, take)]))
    train_idx = np.sort(np.concatenate([g[k:] for g, k in zip(groups, take)]))
    return replace(ds, train=ds.train.take(train_idx), val=ds.train.take(val_idx, "val"))


def limit_split(split: Split, limit: Optional[int], seed: int = 0) -> Split:
    """First `limit` samples of a seeded stratified shuffle (classes interleaved)."""
    if limit is None or limit >= len(split):
        return split
    groups = _stratified_order(split.labels, seed)
    rank = np.empty(len(split), dtype=np.float64)
    for g in groups:
        rank[g] = (np.arange(len(g)) + 0.5) / len(g)
    order = np.lexsort((split.labels, rank))
    return split.take(np.sort(order[:limit]))


def load_dataset(name: str, root: Optional[str] = None, train_limit: Optional[int] = None,
                 test_limit: Optional[int] = None, seed: int = 0, per_class: int = 200) -> Dataset:
    if name == "mnist":
        ds = load_mnist(data_root(root))
    elif name == "cifar10":
        ds = load_cifar10(data_root(root))
    elif name == "synthetic":
        from .synthetic import make_synthetic
        ds = make_synthetic(per_class=per_class, seed=seed)
    else:
        raise UsageError(f"Unknown dataset: '{name}'")
    return replace(ds, train=limit_split(ds.train, train_limit, seed),
                   test=limit_split(ds.test, test_limit, seed))


# ── Image files ───────────────────────────────────────────

def to_uint8(image: np.ndarray) -> np.ndarray:
    """C×H×W float in [0,1] → H×W or H×W×3 uint8."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    return img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)


def read_png_dir(path) -> Tuple[np.ndarray, List[str]]:
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"Input directory not found: {root}")
    names = sorted(p.name for p in root.glob("*.png"))
    if not names:
        raise DataError(f"No PNG images in {root}")
    images = []
    for name in names:
        with Image.open(root / name) as im:
            arr = np.asarray(im.convert("L") if im.mode in ("L", "1", "P", "I") else im.convert("RGB"))
        arr = arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)
        images.append(arr.astype(np.float64) / 255.0)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise DataError(f"Images in {root} have mixed shapes {sorted(shapes)}")
    return np.stack(images), names


def write_pngs(images: np.ndarray, out_dir, names: Optional[List[str]] = None) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = names or [f"{i:05d}.png" for i in range(len(images))]
    paths = []
    for image, name in zip(images, names):
        Image.fromarray(to_uint8(image)).save(out / name, format="PNG")
        paths.append(out / name)
    logger.info("Wrote %d images to %s", len(paths), out)
    return paths
