"""Per-image worker pool for pure, seeded image transforms.

Each image gets its own seed spawned from one parent seed, and results are
collected in input order, so the output does not depend on `workers`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np


def spawn_seeds(seed: int, n: int) -> List[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def map_images(
    fn: Callable[[np.ndarray, int], np.ndarray],
    images: np.ndarray,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Apply fn(image, seed_i) to every image; returns a stacked array."""
    seeds = spawn_seeds(seed, len(images))
    if workers <= 1 or len(images) <= 1:
        out = [fn(img, s) for img, s in zip(images, seeds)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, img, s) for img, s in zip(images, seeds)]
            out = [f.result() for f in futures]
    return np.stack(out) if out else np.asarray(images).copy()
