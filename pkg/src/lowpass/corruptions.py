"""Seeded corruption generators, perturbation sequences, radial spectra.

Every kind is a function of (image, magnitude, rng) where magnitude 0 is
the identity. Random fields are drawn first and in a fixed order, so one
seed gives the same noise field at every magnitude: severities and the
frames of a sequence differ only in how strongly that field is applied.
"""

from __future__ import annotations

import configparser
import logging
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.fft import dctn, idctn
from scipy.stats import poisson

from .config import (
    CORRUPTION_KINDS, ENV_SEVERITY_TABLE, FREQ_BANDS, SEQUENCE_FRAMES,
    SEVERITY_LEVELS, SEVERITY_TABLE_PATH,
)
from .errors import ConfigError, CorruptionError
from .models import CorruptionSpec
from .parallel import map_images, spawn_seeds

logger = logging.getLogger(__name__)


# ── Severity table ────────────────────────────────────────

@lru_cache(maxsize=8)
def _read_table(path: str) -> Dict[str, tuple]:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"Severity table not found: {path}")
    table = {}
    for kind in parser.sections():
        if kind not in CORRUPTION_KINDS:
            raise ConfigError(f"{path}: unknown corruption kind [{kind}]")
        try:
            values = tuple(float(v) for v in parser[kind]["magnitudes"].split(","))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"{path}: bad magnitudes for [{kind}]: {e}") from None
        if len(values) != SEVERITY_LEVELS:
            raise ConfigError(f"{path}: [{kind}] needs {SEVERITY_LEVELS} magnitudes, got {len(values)}")
        if any(b < a for a, b in zip(values, values[1:])) or values[0] < 0:
            raise ConfigError(f"{path}: [{kind}] magnitudes must be nonnegative and nondecreasing")
        table[kind] = values
    missing = set(CORRUPTION_KINDS) - set(table)
    if missing:
        raise ConfigError(f"{path}: missing kinds {sorted(missing)}")
    return table


def load_severity_table(path: Optional[str] = None) -> Dict[str, tuple]:
    path = path or os.environ.get(ENV_SEVERITY_TABLE) or str(SEVERITY_TABLE_PATH)
    return _read_table(str(path))


# ── Plane helpers ─────────────────────────────────────────

def _per_plane(image: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    flat = image.reshape(-1, *image.shape[-2:])
    return np.stack([fn(p) for p in flat]).reshape(image.shape)


def _convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kernel = kernel / kernel.sum()
    return _per_plane(image, lambda p: ndimage.convolve(p, kernel, mode="reflect"))


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    sig = (0,) * (image.ndim - 2) + (sigma, sigma)
    return ndimage.gaussian_filter(image, sigma=sig, mode="reflect")


def _disk(radius: float) -> np.ndarray:
    r = int(math.ceil(radius))
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return ((x ** 2 + y ** 2) <= radius ** 2).astype(np.float64)


def _line(length: float, angle: float) -> np.ndarray:
    r = int(math.ceil(length / 2.0)) + 1
    kernel = np.zeros((2 * r + 1, 2 * r + 1))
    steps = np.linspace(-length / 2.0, length / 2.0, max(2, int(math.ceil(length)) * 4 + 1))
    for s in steps:
        y, x = r + s * math.sin(angle), r + s * math.cos(angle)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        dy, dx = y - y0, x - x0
        kernel[y0, x0] += (1 - dy) * (1 - dx)
        kernel[y0, x0 + 1] += (1 - dy) * dx
        kernel[y0 + 1, x0] += dy * (1 - dx)
        kernel[y0 + 1, x0 + 1] += dy * dx
    return kernel


def _clipped_zoom(plane: np.ndarray, factor: float) -> np.ndarray:
    h, w = plane.shape
    zoomed = ndimage.zoom(plane, factor, order=1, mode="nearest")
    top = (zoomed.shape[0] - h) // 2
    left = (zoomed.shape[1] - w) // 2
    return zoomed[top:top + h, left:left + w]


def _box_resize(plane: np.ndarray, size: tuple) -> np.ndarray:
    """Area-average resize of one float plane, size as (width, height)."""
    im = Image.fromarray(plane.astype(np.float32))
    return np.asarray(im.resize(size, Image.Resampling.BOX), dtype=np.float64)


_JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _jpeg_plane(plane: np.ndarray, quality: float) -> np.ndarray:
    h, w = plane.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(plane, ((0, ph), (0, pw)), mode="edge") * 255.0 - 128.0
    bh, bw = padded.shape[0] // 8, padded.shape[1] // 8
    blocks = padded.reshape(bh, 8, bw, 8).transpose(0, 2, 1, 3)
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    q = np.clip(np.floor((_JPEG_LUMA * scale + 50.0) / 100.0), 1.0, 255.0)
    coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
    coeffs = np.round(coeffs / q) * q
    blocks = idctn(coeffs, axes=(-2, -1), norm="ortho")
    out = blocks.transpose(0, 2, 1, 3).reshape(bh * 8, bw * 8)
    return (out[:h, :w] + 128.0) / 255.0


# ── Kinds ─────────────────────────────────────────────────

def _gaussian_noise(x, m, rng):
    z = rng.standard_normal(x.shape)
    return x + m * z


def _shot_noise(x, m, rng):
    u = np.clip(rng.random(x.shape), 1e-12, 1.0 - 1e-12)
    rate = 1.0 / m
    return poisson.ppf(u, np.maximum(x * rate, 1e-12)) / rate


def _impulse_noise(x, m, rng):
    u = rng.random(x.shape)
    out = x.copy()
    out[u < m / 2.0] = 1.0
    out[u > 1.0 - m / 2.0] = 0.0
    return out


def _speckle_noise(x, m, rng):
    z = rng.standard_normal(x.shape)
    return x + x * m * z


def _gaussian_blur(x, m, rng):
    return gaussian_blur(x, m)


def _defocus_blur(x, m, rng):
    kernel = ndimage.gaussian_filter(np.pad(_disk(m), 1), sigma=min(0.5, m / 2.0))
    return _convolve(x, kernel)


def _motion_blur(x, m, rng):
    angle = math.radians(rng.uniform(-45.0, 45.0))
    return _convolve(x, _line(m, angle))


def _zoom_blur(x, m, rng):
    factors = 1.0 + np.arange(0.0, m + 1e-9, 0.02)
    if factors[-1] < 1.0 + m:
        factors = np.append(factors, 1.0 + m)
    acc = np.zeros_like(x)
    for f in factors:
        acc += x if f == 1.0 else _per_plane(x, lambda p: _clipped_zoom(p, f))
    return acc / len(factors)


def _contrast(x, m, rng):
    mean = x.mean()
    return (x - mean) * (1.0 - m) + mean


def _brightness(x, m, rng):
    return x + m


def _pixelate(x, m, rng):
    h, w = x.shape[-2:]
    small = (max(1, int(round(w * (1.0 - m)))), max(1, int(round(h * (1.0 - m)))))
    return _per_plane(x, lambda p: _box_resize(_box_resize(p, small), (w, h)))


def _jpeg_like(x, m, rng):
    quality = max(1.0, 100.0 - m)
    return _per_plane(x, lambda p: _jpeg_plane(p, quality))


KINDS: Dict[str, Callable] = {
    "gaussian_noise": _gaussian_noise,
    "shot_noise": _shot_noise,
    "impulse_noise": _impulse_noise,
    "speckle_noise": _speckle_noise,
    "gaussian_blur": _gaussian_blur,
    "defocus_blur": _defocus_blur,
    "motion_blur": _motion_blur,
    "zoom_blur": _zoom_blur,
    "contrast": _contrast,
    "brightness": _brightness,
    "pixelate": _pixelate,
    "jpeg_like": _jpeg_like,
}


def apply_magnitude(image: np.ndarray, kind: str, magnitude: float, seed: int) -> np.ndarray:
    if kind not in KINDS:
        raise CorruptionError(f"Unknown corruption kind: '{kind}'")
    x = np.asarray(image, dtype=np.float64)
    if magnitude == 0:
        return x.copy()
    out = KINDS[kind](x, float(magnitude), np.random.default_rng(seed))
    return np.clip(out, 0.0, 1.0)


# ── Operations ────────────────────────────────────────────

def corrupt(image: np.ndarray, spec: CorruptionSpec, table: Optional[Dict[str, tuple]] = None) -> np.ndarray:
    table = table or load_severity_table()
    if spec.kind not in table:
        raise CorruptionError(f"Unknown corruption kind: '{spec.kind}'")
    return apply_magnitude(image, spec.kind, table[spec.kind][spec.severity - 1], spec.seed)


def corrupt_batch(images: np.ndarray, spec: CorruptionSpec, workers: int = 1,
                  table: Optional[Dict[str, tuple]] = None) -> np.ndarray:
    table = table or load_severity_table()
    magnitude = table[spec.kind][spec.severity - 1]
    return map_images(lambda img, s: apply_magnitude(img, spec.kind, magnitude, s),
                      images, spec.seed, workers)


@dataclass(frozen=True)
class PerturbationSequence:
    frames: np.ndarray        # v × image shape; frames[0] is the clean image
    kind: str
    magnitudes: np.ndarray

    @property
    def v(self) -> int:
        return len(self.frames)


def make_sequence(image: np.ndarray, kind: str, v: int = SEQUENCE_FRAMES, seed: int = 0,
                  table: Optional[Dict[str, tuple]] = None) -> PerturbationSequence:
    """Frames with magnitude linear from 0 to the severity-5 value."""
    if v < 2:
        raise CorruptionError(f"A perturbation sequence needs at least 2 frames, got {v}")
    if kind not in KINDS:
        raise CorruptionError(f"Unknown corruption kind: '{kind}'")
    table = table or load_severity_table()
    magnitudes = np.linspace(0.0, table[kind][-1], v)
    frames = [np.array(image, dtype=np.float64, copy=True)]
    frames += [apply_magnitude(image, kind, m, seed) for m in magnitudes[1:]]
    return PerturbationSequence(np.stack(frames), kind, magnitudes)


def make_sequences(images: np.ndarray, kind: str, v: int = SEQUENCE_FRAMES, seed: int = 0,
                   table: Optional[Dict[str, tuple]] = None) -> List[PerturbationSequence]:
    return [make_sequence(img, kind, v, s, table) for img, s in zip(images, spawn_seeds(seed, len(images)))]


# ── Frequency profile ─────────────────────────────────────

@dataclass(frozen=True)
class FreqProfile:
    edges: np.ndarray     # normalised radial frequency, 0 = DC, 1 = corner
    energy: np.ndarray    # mean power per band

    def high_band_energy(self, quantile: float = 0.75) -> float:
        return float(self.energy[self.edges[:-1] >= quantile - 1e-12].sum())


def freq_profile(images: np.ndarray, bands: int = FREQ_BANDS) -> FreqProfile:
    images = np.asarray(images, dtype=np.float64)
    if images.size == 0:
        raise CorruptionError("freq_profile needs at least one image")
    h, w = images.shape[-2:]
    planes = images.reshape(-1, h, w)
    power = np.abs(np.fft.fft2(planes)) ** 2 / (h * w)
    fy, fx = np.meshgrid(np.fft.fftfreq(h), np.fft.fftfreq(w), indexing="ij")
    radius = np.sqrt(fx ** 2 + fy ** 2)
    radius = radius / radius.max()
    edges = np.linspace(0.0, 1.0, bands + 1)
    band = np.minimum(np.digitize(radius, edges[1:-1]), bands - 1)
    mean_power = power.mean(axis=0)
    energy = np.array([mean_power[band == b].mean() if np.any(band == b) else 0.0 for b in range(bands)])
    return FreqProfile(edges, energy)
