"""Decision-space mapping of a network with a 2-unit FC₂ bottleneck.

The layers after FC₂ form a small head that maps a point of the plane to
class scores. The head is swept in polar coordinates around an origin:
radius r = 1..N (in units of `unit`), angle θ = 0, dθ, 2dθ, ... < 2π.
Where the winning class changes between neighbouring angles the crossing
is refined by bisection, so every trip point lies on a boundary where the
two classes tie and the winning score is at most 0.5.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from matplotlib import colormaps
from matplotlib.patches import Patch

from .config import BISECT_STEPS, SWEEP_DTHETA, SWEEP_RADIUS_QUANTILE, TRIP_SCORE
from .errors import DecisionMapError
from .layers import Layer, LinearLayer, forward, zero_center_normalize
from .models import BoundaryFit
from .plots import save_svg, svg_figure
from .tensor import Tensor, no_grad, softmax

logger = logging.getLogger(__name__)


@dataclass
class Fc2Net:
    head: List[Layer]        # layers after FC₂, ending in the logits
    trunk: List[Layer]       # input through FC₂ inclusive

    @property
    def input_dim(self) -> int:
        return self.trunk[-1].hyper["out_features"]

    @property
    def classes(self) -> int:
        return self.head[-1].hyper["out_features"]

    def logits(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.input_dim)
        with no_grad():
            return forward(self.head, Tensor(points)).data

    def scores(self, points: np.ndarray) -> np.ndarray:
        return softmax(self.logits(points))

    def classify(self, points: np.ndarray) -> np.ndarray:
        return self.logits(points).argmax(axis=1)


def build_fc2_net(network: List[Layer]) -> Fc2Net:
    """Split the network at its last non-final 2-unit linear layer."""
    index = None
    for i, layer in enumerate(network[:-1]):
        if isinstance(layer, LinearLayer) and layer.hyper["out_features"] == 2:
            index = i
    if index is None:
        raise DecisionMapError("Network has no 2-unit linear layer before its output")
    return Fc2Net(head=network[index + 1:], trunk=network[:index + 1])


def fc2_features(fc2net: Fc2Net, images: np.ndarray, mean: np.ndarray, batch_size: int = 512) -> np.ndarray:
    outs = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            xb = zero_center_normalize(images[start:start + batch_size], mean)
            outs.append(forward(fc2net.trunk, Tensor(xb)).data)
    return np.concatenate(outs) if outs else np.zeros((0, 2))


def sweep_origin(features: Optional[np.ndarray], mode: str = "centroid") -> np.ndarray:
    if mode == "zero" or features is None or len(features) == 0:
        return np.zeros(2)
    if mode != "centroid":
        raise DecisionMapError(f"Unknown sweep origin: '{mode}'")
    return np.asarray(features, dtype=np.float64).mean(axis=0)


def compactness_radius(features: np.ndarray, origin: np.ndarray, q: float = SWEEP_RADIUS_QUANTILE) -> float:
    """Radius around `origin` that contains a q share of the feature points."""
    distances = np.linalg.norm(np.asarray(features) - origin, axis=1)
    return float(np.quantile(distances, q))


def sweep_unit(features: Optional[np.ndarray], origin: np.ndarray, n: int) -> float:
    if features is None or len(features) == 0:
        return 1.0
    radius = compactness_radius(features, origin)
    return radius / n if radius > 0 else 1.0


# ── Sweep ─────────────────────────────────────────────────

@dataclass
class DecisionMap:
    r: np.ndarray            # (R,) radius steps 1..N
    theta: np.ndarray        # (T,)
    x: np.ndarray            # R×T
    y: np.ndarray
    classes: np.ndarray      # R×T winning class
    scores: np.ndarray       # R×T winning score
    origin: np.ndarray
    unit: float
    n_classes: int
    trip_xy: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    trip_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    trip_r: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def flagged(self) -> np.ndarray:
        """Samples whose winning score is at or below the trip threshold."""
        return self.scores <= TRIP_SCORE

    def rows(self) -> List[list]:
        """r, theta, x, y, class, score, r-major."""
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return [[int(a), float(b), float(c), float(d), int(e), float(f)] for a, b, c, d, e, f in zip(
            rr.ravel(), tt.ravel(), self.x.ravel(), self.y.ravel(), self.classes.ravel(), self.scores.ravel())]


def _points(origin: np.ndarray, radius: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.stack([origin[0] + radius * np.cos(theta), origin[1] + radius * np.sin(theta)], axis=-1)


def _bisect(fc2net: Fc2Net, origin, radius, lo, hi, class_lo, class_hi):
    for _ in range(BISECT_STEPS):
        mid = (lo + hi) / 2.0
        class_mid = fc2net.classify(_points(origin, radius, mid))
        left = class_mid == class_lo
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
        class_hi = np.where(left, class_hi, class_mid)
    return (lo + hi) / 2.0, class_lo, class_hi


def sweep(
    fc2net: Fc2Net,
    n: int,
    dtheta: float = SWEEP_DTHETA,
    origin: Optional[np.ndarray] = None,
    unit: float = 1.0,
) -> DecisionMap:
    if n < 1:
        raise DecisionMapError(f"Sweep needs N >= 1, got {n}")
    if not dtheta > 0:
        raise DecisionMapError(f"Sweep needs dtheta > 0, got {dtheta}")
    origin = np.zeros(2) if origin is None else np.asarray(origin, dtype=np.float64)
    steps = np.arange(1, n + 1)
    theta = np.arange(0.0, 2.0 * np.pi, dtheta)
    radius = steps[:, None] * unit * np.ones_like(theta)[None, :]
    angles = np.broadcast_to(theta, radius.shape)
    pts = _points(origin, radius, angles)
    probs = fc2net.scores(pts.reshape(-1, 2)).reshape(len(steps), len(theta), -1)
    classes = probs.argmax(axis=-1)
    dmap = DecisionMap(
        r=steps, theta=theta, x=pts[..., 0], y=pts[..., 1], classes=classes,
        scores=probs.max(axis=-1), origin=origin, unit=float(unit), n_classes=probs.shape[-1],
    )

    # class changes between neighbouring angles, including the wrap back to θ=0
    nxt = np.roll(classes, -1, axis=1)
    ri, ti = np.nonzero(classes != nxt)
    if len(ri):
        lo = theta[ti]
        hi = np.where(ti + 1 < len(theta), theta[np.minimum(ti + 1, len(theta) - 1)], 2.0 * np.pi)
        rad = steps[ri] * unit
        mid, ca, cb = _bisect(fc2net, origin, rad, lo, hi, classes[ri, ti], nxt[ri, ti])
        dmap.trip_xy = _points(origin, rad, mid)
        dmap.trip_pairs = np.sort(np.stack([ca, cb], axis=1), axis=1)
        dmap.trip_r = steps[ri]
    logger.info("Sweep N=%d, %d angles: %d trip points", n, len(theta), len(ri))
    return dmap


# ── Analysis ──────────────────────────────────────────────

def fit_boundaries(dmap: DecisionMap) -> List[BoundaryFit]:
    """Total least-squares line per class pair; pairs with fewer than 2 points are skipped."""
    groups: Dict[Tuple[int, int], List[np.ndarray]] = defaultdict(list)
    for xy, (a, b) in zip(dmap.trip_xy, dmap.trip_pairs):
        groups[(int(a), int(b))].append(xy)
    fits = []
    for (a, b), pts in sorted(groups.items()):
        if len(pts) < 2:
            logger.warning("Boundary %d|%d has %d trip point, skipped", a, b, len(pts))
            continue
        pts = np.asarray(pts)
        centre = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - centre)
        direction = vt[0]
        if direction[np.argmax(np.abs(direction))] < 0:
            direction = -direction
        normal = np.array([-direction[1], direction[0]])
        residual = float(np.abs((pts - centre) @ normal).max())
        fits.append(BoundaryFit(
            class_a=a, class_b=b, point=tuple(centre), direction=tuple(direction),
            max_residual=residual, n_points=len(pts),
        ))
    return fits


def ray_constancy(dmap: DecisionMap) -> float:
    """Share of angles whose class at r=1 equals the class at r=N."""
    share = float(np.mean(dmap.classes[0] == dmap.classes[-1]))
    if share < 0.995:
        logger.warning("Ray constancy %.4f: class changes along %d rays",
                       share, int(np.sum(dmap.classes[0] != dmap.classes[-1])))
    return share


def score_extremization(dmap: DecisionMap) -> Tuple[float, float]:
    """Mean winning score on the innermost and outermost circles."""
    return float(dmap.scores[0].mean()), float(dmap.scores[-1].mean())


def circle_regions(classes: Sequence[int]) -> int:
    """Contiguous class arcs on one circle of samples."""
    classes = np.asarray(classes)
    runs = 1 + int(np.count_nonzero(classes[1:] != classes[:-1]))
    if runs > 1 and classes[0] == classes[-1]:
        runs -= 1
    return runs


def circle_transitions(classes: Sequence[int]) -> int:
    classes = np.asarray(classes)
    return int(np.count_nonzero(classes != np.roll(classes, -1)))


# ── CSV round trip and rendering ──────────────────────────

def map_from_rows(rows: List[Dict[str, str]], n_classes: Optional[int] = None) -> DecisionMap:
    """Rebuild a map (without trip points) from map.csv rows."""
    if not rows:
        raise DecisionMapError("Empty decision map")
    r = np.array([int(row["r"]) for row in rows])
    steps = np.unique(r)
    shape = (len(steps), len(rows) // len(steps))
    if shape[0] * shape[1] != len(rows):
        raise DecisionMapError("Decision map rows do not form a full r × theta grid")
    get = lambda name, cast=float: np.array([cast(row[name]) for row in rows]).reshape(shape)
    theta, x, y = get("theta"), get("x"), get("y")
    # x = ox + r·unit·cosθ, y = oy + r·unit·sinθ
    rr = r.reshape(shape)
    design = np.concatenate([
        np.stack([np.ones(x.size), np.zeros(x.size), (rr * np.cos(theta)).ravel()], axis=1),
        np.stack([np.zeros(y.size), np.ones(y.size), (rr * np.sin(theta)).ravel()], axis=1),
    ])
    (ox, oy, unit), *_ = np.linalg.lstsq(design, np.concatenate([x.ravel(), y.ravel()]), rcond=None)
    classes = get("class", int)
    return DecisionMap(
        r=steps, theta=theta[0], x=x, y=y, classes=classes, scores=get("score"),
        origin=np.array([ox, oy]), unit=float(unit),
        n_classes=n_classes or int(classes.max()) + 1,
    )


def map_figure(dmap: DecisionMap, ax, fits: Sequence[BoundaryFit] = (),
               features: Optional[np.ndarray] = None, labels: Optional[np.ndarray] = None) -> None:
    cmap = colormaps["tab10"] if dmap.n_classes <= 10 else colormaps["tab20"]
    colours = [cmap(c % cmap.N) for c in range(dmap.n_classes)]
    ax.scatter(dmap.x.ravel(), dmap.y.ravel(), c=[colours[c] for c in dmap.classes.ravel()],
               s=2.0, marker="s", linewidths=0, alpha=0.35)
    reach = dmap.r[-1] * dmap.unit
    for fit in fits:
        p, d = np.asarray(fit.point), np.asarray(fit.direction)
        ends = np.stack([p - 2 * reach * d, p + 2 * reach * d])
        ax.plot(ends[:, 0], ends[:, 1], color="black", linewidth=0.8)
    if features is not None and len(features):
        labels = np.zeros(len(features), dtype=int) if labels is None else np.asarray(labels)
        ax.scatter(features[:, 0], features[:, 1], c=[colours[int(c) % len(colours)] for c in labels],
                   s=4.0, linewidths=0.2, edgecolors="black")
    ax.set_xlim(dmap.origin[0] - 1.05 * reach, dmap.origin[0] + 1.05 * reach)
    ax.set_ylim(dmap.origin[1] - 1.05 * reach, dmap.origin[1] + 1.05 * reach)
    ax.set_aspect("equal")
    ax.set_xlabel("FC₂ unit 1")
    ax.set_ylabel("FC₂ unit 2")
    handles = [Patch(color=colours[c], label=f"class {c}") for c in range(dmap.n_classes)]
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0), fontsize=7)


def render_map(dmap: DecisionMap, path, fits: Sequence[BoundaryFit] = (),
               features: Optional[np.ndarray] = None, labels: Optional[np.ndarray] = None):
    with svg_figure(6.5, 5.0) as (fig, ax):
        map_figure(dmap, ax, fits, features, labels)
        return save_svg(fig, path)
