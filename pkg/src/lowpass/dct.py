"""Full-image DCT augmentation.

The block size is the whole image: an orthonormal type-II DCT over H×W per
channel. Augmentation draws a threshold t per image, zeroes every
coefficient whose magnitude is below t times the largest magnitude, and
reconstructs with the inverse transform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .errors import UsageError
from .models import AugmentPolicy
from .parallel import map_images, spawn_seeds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DctPlan:
    height: int
    width: int
    basis_h: np.ndarray   # rows are the orthonormal DCT-II basis vectors
    basis_w: np.ndarray


@lru_cache(maxsize=32)
def plan_for(height: int, width: int) -> DctPlan:
    basis = lambda n: dct(np.eye(n), type=2, norm="ortho", axis=0)
    plan = DctPlan(height, width, basis(height), basis(width))
    plan.basis_h.setflags(write=False)
    plan.basis_w.setflags(write=False)
    return plan


def _planes(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0 or image.ndim < 2:
        raise UsageError(f"dct2 needs a non-empty H×W or C×H×W image, got shape {image.shape}")
    return image


def dct2(image: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II over the last two axes (channels independent)."""
    image = _planes(image)
    plan = plan_for(*image.shape[-2:])
    return plan.basis_h @ image @ plan.basis_w.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    coeffs = _planes(coeffs)
    plan = plan_for(*coeffs.shape[-2:])
    return plan.basis_h.T @ coeffs @ plan.basis_w


def drop_coefficients(image: np.ndarray, t: float, clamp: bool = True) -> np.ndarray:
    """Keep coefficients with |c| >= t·max|c| (per channel) and reconstruct."""
    coeffs = dct2(image)
    if t > 0:
        peak = np.abs(coeffs).max(axis=(-2, -1), keepdims=True)
        coeffs = np.where(np.abs(coeffs) < t * peak, 0.0, coeffs)
    out = idct2(coeffs)
    return np.clip(out, 0.0, 1.0) if clamp else out


def augment(image: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    t = rng.uniform(policy.t_min, policy.t_max)
    return drop_coefficients(image, t, clamp=policy.clamp)


def augment_batch(images: np.ndarray, policy: AugmentPolicy, seed: int, workers: int = 1) -> np.ndarray:
    return map_images(
        lambda img, s: augment(img, policy, np.random.default_rng(s)), images, seed, workers,
    )


# ── Energy helpers ────────────────────────────────────────

def energy(image: np.ndarray) -> float:
    return float(np.sum(np.asarray(image, dtype=np.float64) ** 2))


def retained_energy(image: np.ndarray, t: float) -> float:
    """Coefficient energy left after dropping at threshold t (no clamping)."""
    coeffs = dct2(image)
    peak = np.abs(coeffs).max(axis=(-2, -1), keepdims=True)
    return energy(np.where(np.abs(coeffs) < t * peak, 0.0, coeffs))


def high_band_fraction(image: np.ndarray, cutoff: float = 0.5) -> float:
    """Share of DCT energy with normalised frequency index (u/H + v/W)/2 above `cutoff`."""
    coeffs = dct2(image)
    h, w = coeffs.shape[-2:]
    u = np.arange(h)[:, None] / h
    v = np.arange(w)[None, :] / w
    mask = (u + v) / 2.0 > cutoff
    total = energy(coeffs)
    return float(np.sum((coeffs ** 2) * mask) / total) if total > 0 else 0.0


def augment_thresholds(n: int, policy: AugmentPolicy, seed: int) -> np.ndarray:
    """The threshold `augment_batch` draws for each of n images under the same seed."""
    return np.array([np.random.default_rng(s).uniform(policy.t_min, policy.t_max) for s in spawn_seeds(seed, n)])
