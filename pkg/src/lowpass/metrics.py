"""Accuracy, prediction stability and feature-shift analysis."""

from __future__ import annotations

import logging
from collections import defaultdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEPTH_LEVELS, HIST_BINS, HIST_PERCENTILE
from .corruptions import PerturbationSequence, corrupt_batch
from .errors import MetricError
from .layers import ActivationLayer, Layer, forward, predict, zero_center_normalize
from .models import CorruptionSpec, FlipReport, ShiftReport
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

Classifier = Callable[[np.ndarray], np.ndarray]


def top1(logits: np.ndarray, labels: np.ndarray) -> float:
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise MetricError("top1 of an empty batch")
    if logits.ndim != 2 or len(logits) != len(labels):
        raise MetricError(f"top1: {logits.shape} logits for {labels.shape} labels")
    return float(np.mean(logits.argmax(axis=1) == labels))


def network_classifier(network: List[Layer], mean: np.ndarray, batch_size: int = 512) -> Classifier:
    return lambda images: predict(network, images, mean, batch_size).argmax(axis=1)


# ── Flip probability ──────────────────────────────────────

def flip_rate(predictions: np.ndarray) -> float:
    """Share of adjacent frame pairs whose predictions differ, for a k×v matrix."""
    predictions = np.asarray(predictions)
    if predictions.ndim != 2 or predictions.shape[0] == 0:
        raise MetricError(f"flip_rate needs a k×v prediction matrix, got shape {predictions.shape}")
    k, v = predictions.shape
    if v < 2:
        raise MetricError(f"A perturbation sequence needs at least 2 frames, got {v}")
    flips = np.count_nonzero(predictions[:, 1:] != predictions[:, :-1])
    return flips / (k * (v - 1))


def flip_probability(sequences: Sequence[PerturbationSequence], classifier: Classifier) -> FlipReport:
    by_kind: Dict[str, List[PerturbationSequence]] = defaultdict(list)
    for seq in sequences:
        if seq.v < 2:
            raise MetricError(f"A perturbation sequence needs at least 2 frames, got {seq.v}")
        by_kind[seq.kind].append(seq)
    if not by_kind:
        raise MetricError("flip_probability needs at least one sequence")

    per_kind = {}
    for kind in sorted(by_kind):
        group = by_kind[kind]
        if len({s.v for s in group}) > 1:
            raise MetricError(f"{kind}: sequences have different frame counts")
        frames = np.concatenate([s.frames for s in group])
        preds = np.asarray(classifier(frames)).reshape(len(group), group[0].v)
        per_kind[kind] = flip_rate(preds)
        logger.info("FP %s: %.5f over %d sequences", kind, per_kind[kind], len(group))
    return FlipReport(per_kind=per_kind, mfp=float(np.mean(list(per_kind.values()))))


# ── Features ──────────────────────────────────────────────

def collect_features(network: List[Layer], images: np.ndarray, mean: np.ndarray,
                     batch_size: int = 256) -> List[np.ndarray]:
    """Per-image flattened outputs of every activation layer, then the logits (N×D each)."""
    taps: List[List[np.ndarray]] = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            xb = zero_center_normalize(images[start:start + batch_size], mean)
            capture: list = []
            logits = forward(network, Tensor(xb), capture=capture)
            outs = [out.data for i, _, out in capture if isinstance(network[i], ActivationLayer)]
            outs.append(logits.data)
            if not taps:
                taps = [[] for _ in outs]
            for acc, out in zip(taps, outs):
                acc.append(out.reshape(len(out), -1))
    return [np.concatenate(acc) for acc in taps]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise CS. Two zero rows give 1, exactly one zero row gives 0."""
    a = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    denom = na * nb
    cs = np.divide(np.sum(a * b, axis=1), denom, out=np.zeros(len(a)), where=denom > 0)
    cs = np.clip(cs, -1.0, 1.0)
    cs[(na == 0) & (nb == 0)] = 1.0
    cs[np.all(a == b, axis=1)] = 1.0
    return cs


def _tap_similarity(clean: List[np.ndarray], other: List[np.ndarray], mode: str) -> Tuple[float, List[float]]:
    if mode == "concat":
        cs = cosine_similarity(np.concatenate(clean, axis=1), np.concatenate(other, axis=1))
        return float(cs.mean()), []
    per_tap = [float(cosine_similarity(c, o).mean()) for c, o in zip(clean, other)]
    return float(np.mean(per_tap)), per_tap


def feature_shift(
    network: List[Layer],
    mean: np.ndarray,
    clean: np.ndarray,
    corrupted: Sequence[np.ndarray],
    mode: str = "layer",
    depth_severity: Optional[int] = None,
) -> ShiftReport:
    """CS between clean and corrupted features. `corrupted[s-1]` holds severity s, reported as level s+1."""
    if mode not in ("layer", "concat"):
        raise MetricError(f"Unknown feature shift mode: '{mode}'")
    for s, images in enumerate(corrupted, start=1):
        if len(images) != len(clean):
            raise MetricError(f"Severity {s} has {len(images)} images, clean set has {len(clean)}")
    base = collect_features(network, clean, mean)
    per_severity: Dict[int, float] = {1: 1.0}
    per_tap_at: Dict[int, List[float]] = {1: [1.0] * len(base)}
    for s, images in enumerate(corrupted, start=1):
        other = collect_features(network, images, mean)
        per_severity[s + 1], _ = _tap_similarity(base, other, mode)
        per_tap_at[s + 1] = _tap_similarity(base, other, "layer")[1]
        logger.info("CS level %d: %.5f", s + 1, per_severity[s + 1])

    level = depth_severity or max(per_tap_at)
    if level not in per_tap_at:
        raise MetricError(f"No corrupted set for depth level {level}")
    groups = [g for g in np.array_split(np.asarray(per_tap_at[level]), DEPTH_LEVELS) if len(g)]
    return ShiftReport(per_severity=per_severity, per_depth=[float(g.mean()) for g in groups], mode=mode)


# ── Histograms ────────────────────────────────────────────

def activation_magnitudes(network: List[Layer], images: np.ndarray, mean: np.ndarray) -> List[np.ndarray]:
    return [np.abs(t).ravel() for t in collect_features(network, images, mean)[:-1]]


def histogram_edges(layers: List[np.ndarray], bins: int = HIST_BINS) -> np.ndarray:
    pooled = np.concatenate(layers) if layers else np.zeros(1)
    hi = float(np.percentile(pooled, HIST_PERCENTILE))
    return np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)


def activation_histogram(
    network: List[Layer],
    mean: np.ndarray,
    images: np.ndarray,
    bins: int = HIST_BINS,
    edges: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """(counts averaged over activation layers, bin edges, mean magnitude).

    Values above the last edge land in the last bin.
    """
    layers = activation_magnitudes(network, images, mean)
    if not layers:
        raise MetricError("Network has no activation layers")
    edges = histogram_edges(layers, bins) if edges is None else np.asarray(edges)
    counts = np.mean([
        np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)[0] for values in layers
    ], axis=0)
    magnitude = float(np.mean([values.mean() for values in layers]))
    return counts, edges, magnitude


# ── Accuracy under corruption ─────────────────────────────

def accuracy_by_severity(
    network: List[Layer],
    mean: np.ndarray,
    images: np.ndarray,
    labels: np.ndarray,
    kinds: Sequence[str],
    severities: Sequence[int],
    seed: int = 0,
    workers: int = 1,
    table: Optional[Dict[str, tuple]] = None,
) -> List[list]:
    """Rows of (kind, severity, top1); the first row is the clean set at severity 0."""
    rows = [["clean", 0, top1(predict(network, images, mean), labels)]]
    for kind in kinds:
        for severity in severities:
            spec = CorruptionSpec(kind=kind, severity=severity, seed=seed)
            corrupted = corrupt_batch(images, spec, workers=workers, table=table)
            acc = top1(predict(network, corrupted, mean), labels)
            rows.append([kind, severity, acc])
            logger.info("%s severity %d: top1 %.4f", kind, severity, acc)
    return rows
