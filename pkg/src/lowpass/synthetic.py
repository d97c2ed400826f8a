"""Synthetic digit dataset for tests and offline runs.

Each class is a seven-segment digit drawn with a random offset, size,
stroke width and intensity, then softened with a small blur.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from .dataio import Dataset, Split

logger = logging.getLogger(__name__)

#   a
#  f b
#   g
#  e c
#   d
SEGMENTS = {
    "a": ((0, 0), (1, 0)),
    "b": ((1, 0), (1, 1)),
    "c": ((1, 1), (1, 2)),
    "d": ((0, 2), (1, 2)),
    "e": ((0, 1), (0, 2)),
    "f": ((0, 0), (0, 1)),
    "g": ((0, 1), (1, 1)),
}

DIGIT_SEGMENTS = [
    "abcdef", "bc", "abdeg", "abcdg", "bcfg",
    "acdfg", "acdefg", "abc", "abcdefg", "abcdfg",
]


def _draw(canvas: np.ndarray, segments: str, rng: np.random.Generator) -> None:
    size = canvas.shape[-1]
    width = rng.uniform(0.30, 0.42) * size
    height = rng.uniform(0.30, 0.36) * size
    x0 = (size - width) / 2 + rng.uniform(-2.5, 2.5)
    y0 = (size - 2 * height) / 2 + rng.uniform(-2.5, 2.5)
    stroke = int(rng.integers(2, 4))
    ink = rng.uniform(0.7, 1.0)
    for name in segments:
        (ax, ay), (bx, by) = SEGMENTS[name]
        xa, xb = sorted((x0 + ax * width, x0 + bx * width))
        ya, yb = sorted((y0 + ay * height, y0 + by * height))
        top, left = int(round(ya)) - stroke // 2, int(round(xa)) - stroke // 2
        bottom, right = int(round(yb)) + stroke - stroke // 2, int(round(xb)) + stroke - stroke // 2
        canvas[..., max(top, 0):max(bottom, 0), max(left, 0):max(right, 0)] = ink


def make_split(per_class: int, tag: str, rng: np.random.Generator,
               channels: int = 1, size: int = 28) -> Split:
    n = per_class * len(DIGIT_SEGMENTS)
    labels = np.repeat(np.arange(len(DIGIT_SEGMENTS)), per_class)
    images = np.zeros((n, channels, size, size))
    for i, label in enumerate(labels):
        _draw(images[i], DIGIT_SEGMENTS[label], rng)
        if channels > 1:
            images[i] *= rng.uniform(0.5, 1.0, size=(channels, 1, 1))
    images = ndimage.gaussian_filter(images, sigma=(0, 0, 0.6, 0.6))
    order = rng.permutation(n)
    return Split(np.clip(images[order], 0.0, 1.0), labels[order].astype(np.int64), tag)


def make_synthetic(per_class: int = 200, test_per_class: int = 0, seed: int = 0,
                   channels: int = 1, size: int = 28) -> Dataset:
    """Ten classes; test defaults to a quarter of the train size per class."""
    rng = np.random.default_rng(seed)
    test_per_class = test_per_class or max(1, per_class // 4)
    ds = Dataset(
        "synthetic", len(DIGIT_SEGMENTS),
        make_split(per_class, "train", rng, channels, size),
        make_split(test_per_class, "test", rng, channels, size),
    )
    logger.info("Synthetic: %d train / %d test", len(ds.train), len(ds.test))
    return ds
