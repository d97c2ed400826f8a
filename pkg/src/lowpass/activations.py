"""Activation catalog: values, derivatives, parameter gradients, init, projection.

All evaluators are elementwise over numpy arrays. Breakpoints (0, A, B, ±δ)
take the slope of the region to their right; the values themselves are
continuous so the choice only matters for derivatives.

LP-ReLU₂ beyond B continues from F(B) with slope β, and the log tail is
A + log(1 + x - A); both keep F continuous at the cut-off.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np

from .config import (
    CLIPPED_INIT, CUTOFF_BUFFER, DEFAULT_LEARNABLE, LEAKY_SLOPE, LOG_TAILED_INIT,
    LP1_INIT, LP2_INIT, PRELU_INIT, PROJECTION_EPS, SWISH_BETA, TENT_DELTA,
)
from .errors import ActivationError
from .models import ActivationSpec

logger = logging.getLogger(__name__)

PARAM_NAMES = {
    "relu": [],
    "leaky_relu": ["alpha"],
    "p_relu": ["alpha"],
    "clipped_relu": ["A"],
    "tent": ["delta"],
    "log_tailed_relu": ["A"],
    "tanh": [],
    "swish": ["beta"],
    "lp_relu1": ["A", "alpha"],
    "lp_relu2": ["A", "B", "alpha", "beta"],
}

MONOTONE_KINDS = {
    "relu", "leaky_relu", "clipped_relu", "log_tailed_relu", "tanh", "lp_relu1", "lp_relu2",
}


def breakpoints(spec: ActivationSpec) -> list:
    kind = spec.kind
    if kind in ("relu", "leaky_relu", "p_relu"):
        return [0.0]
    if kind in ("clipped_relu", "log_tailed_relu", "lp_relu1"):
        return [0.0, spec.A]
    if kind == "lp_relu2":
        return [0.0, spec.A, spec.B]
    if kind == "tent":
        return [-spec.delta, 0.0, spec.delta]
    return []


def check_spec(spec: ActivationSpec) -> None:
    kind = spec.kind
    # alpha = 1 is a valid definition (reduces lp_relu1 to relu); projection keeps a learnable alpha below 1
    if kind in ("lp_relu1", "lp_relu2") and not 0.0 <= spec.alpha <= 1.0:
        raise ActivationError(f"{kind}: alpha must be in [0, 1], got {spec.alpha}")
    if kind == "lp_relu2":
        if not spec.A < spec.B:
            raise ActivationError(f"lp_relu2: need A < B, got A={spec.A}, B={spec.B}")
        if not spec.alpha > spec.beta >= 0.0:
            raise ActivationError(f"lp_relu2: need alpha > beta >= 0, got {spec.alpha}, {spec.beta}")
    if kind == "tent" and not spec.delta > 0.0:
        raise ActivationError(f"tent: delta must be > 0, got {spec.delta}")
    if kind in ("clipped_relu", "log_tailed_relu", "lp_relu1", "lp_relu2") and spec.A < 0.0:
        raise ActivationError(f"{kind}: cut-off A must be >= 0, got {spec.A}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ── Forward ───────────────────────────────────────────────

def af_forward(spec: ActivationSpec, x) -> np.ndarray:
    check_spec(spec)
    x = np.asarray(x, dtype=np.float64)
    kind, A, B, a, b = spec.kind, spec.A, spec.B, spec.alpha, spec.beta

    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind in ("leaky_relu", "p_relu"):
        return np.where(x > 0, x, a * x)
    if kind == "clipped_relu":
        return np.clip(x, 0.0, A)
    if kind == "tent":
        return np.maximum(0.0, spec.delta - np.abs(x))
    if kind == "log_tailed_relu":
        tail = A + np.log1p(np.maximum(x - A, 0.0))
        return np.where(x > A, tail, np.maximum(x, 0.0))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "swish":
        return x * _sigmoid(b * x)
    if kind == "lp_relu1":
        return np.where(x > A, A + a * (x - A), np.maximum(x, 0.0))
    if kind == "lp_relu2":
        f_b = A + a * (B - A)
        return np.select(
            [x <= 0, x <= A, x <= B],
            [0.0, x, A + a * (x - A)],
            default=f_b + b * (x - B),
        )
    raise ActivationError(f"Unknown activation kind: '{kind}'")


# ── Derivatives ───────────────────────────────────────────

def af_derivative(spec: ActivationSpec, x) -> np.ndarray:
    """dF/dx with the right-hand slope at every breakpoint."""
    check_spec(spec)
    x = np.asarray(x, dtype=np.float64)
    kind, A, B, a, b = spec.kind, spec.A, spec.B, spec.alpha, spec.beta

    if kind == "relu":
        return (x >= 0).astype(np.float64)
    if kind in ("leaky_relu", "p_relu"):
        return np.where(x >= 0, 1.0, a)
    if kind == "clipped_relu":
        return ((x >= 0) & (x < A)).astype(np.float64)
    if kind == "tent":
        d = spec.delta
        return np.select([x < -d, x < 0, x < d], [0.0, 1.0, -1.0], default=0.0)
    if kind == "log_tailed_relu":
        return np.select([x < 0, x < A], [0.0, 1.0], default=1.0 / (1.0 + np.maximum(x - A, 0.0)))
    if kind == "tanh":
        return 1.0 - np.tanh(x) ** 2
    if kind == "swish":
        s = _sigmoid(b * x)
        return s + b * x * s * (1.0 - s)
    if kind == "lp_relu1":
        return np.select([x < 0, x < A], [0.0, 1.0], default=a)
    if kind == "lp_relu2":
        return np.select([x < 0, x < A, x < B], [0.0, 1.0, a], default=b)
    raise ActivationError(f"Unknown activation kind: '{kind}'")


def af_param_grads(spec: ActivationSpec, x) -> Dict[str, np.ndarray]:
    """Elementwise dF/dp for every parameter of the kind."""
    check_spec(spec)
    x = np.asarray(x, dtype=np.float64)
    kind, A, B, a, b = spec.kind, spec.A, spec.B, spec.alpha, spec.beta
    zeros = np.zeros_like(x)

    if kind in ("leaky_relu", "p_relu"):
        return {"alpha": np.where(x >= 0, 0.0, x)}
    if kind == "clipped_relu":
        return {"A": (x >= A).astype(np.float64)}
    if kind == "tent":
        return {"delta": (np.abs(x) < spec.delta).astype(np.float64)}
    if kind == "log_tailed_relu":
        return {"A": np.where(x >= A, 1.0 - 1.0 / (1.0 + np.maximum(x - A, 0.0)), 0.0)}
    if kind == "swish":
        s = _sigmoid(b * x)
        return {"beta": x * x * s * (1.0 - s)}
    if kind == "lp_relu1":
        tail = x >= A
        return {
            "A": np.where(tail, 1.0 - a, 0.0),
            "alpha": np.where(tail, x - A, 0.0),
        }
    if kind == "lp_relu2":
        mid = (x >= A) & (x < B)
        top = x >= B
        return {
            "A": np.where(mid | top, 1.0 - a, 0.0),
            "B": np.where(top, a - b, 0.0),
            "alpha": np.select([mid, top], [x - A, np.full_like(x, B - A)], default=0.0),
            "beta": np.where(top, x - B, 0.0),
        }
    return {name: zeros for name in PARAM_NAMES[kind]}


# ── Initialisation and constraints ────────────────────────

def af_init(
    kind: str,
    dataset_stats: Optional[dict] = None,
    learnable: Optional[Dict[str, bool]] = None,
    **overrides: float,
) -> ActivationSpec:
    """Published initial values; `dataset_stats` (see derive_cutoffs) may move A and B."""
    if kind not in PARAM_NAMES:
        raise ActivationError(f"Invalid activation: '{kind}'")

    values: Dict[str, float] = {}
    if kind == "lp_relu1":
        values.update(LP1_INIT)
    elif kind == "lp_relu2":
        values.update(LP2_INIT)
    elif kind == "leaky_relu":
        values["alpha"] = LEAKY_SLOPE
    elif kind == "p_relu":
        values["alpha"] = PRELU_INIT
    elif kind == "clipped_relu":
        values["A"] = CLIPPED_INIT
    elif kind == "log_tailed_relu":
        values["A"] = LOG_TAILED_INIT
    elif kind == "tent":
        values["delta"] = TENT_DELTA
    elif kind == "swish":
        values["beta"] = SWISH_BETA

    if dataset_stats is not None and kind in ("lp_relu1", "lp_relu2"):
        cut_a, cut_b = derive_cutoffs(dataset_stats)
        if kind == "lp_relu1":
            values["A"] = cut_b
        else:
            values["A"], values["B"] = cut_a, cut_b

    if "alpha" in overrides and kind == "lp_relu2" and "beta" not in overrides:
        overrides["beta"] = overrides["alpha"] / 3.0
    unknown = set(overrides) - set(PARAM_NAMES[kind])
    if unknown:
        raise ActivationError(f"{kind} has no parameter(s) {sorted(unknown)}")
    values.update(overrides)

    mask = dict(DEFAULT_LEARNABLE.get(kind, {}))
    if learnable:
        bad = set(learnable) - set(PARAM_NAMES[kind])
        if bad:
            raise ActivationError(f"{kind} has no parameter(s) {sorted(bad)}")
        mask.update(learnable)
    return ActivationSpec(kind=kind, learnable=mask, **values)


def derive_cutoffs(stats: dict) -> tuple:
    """Cut-offs from clean/HFc activation histograms over shared bin edges.

    A: the magnitude below which 99% of clean activations fall.
    B: the first bin edge above A where HFc counts exceed clean counts.
    """
    edges = np.asarray(stats["edges"], dtype=np.float64)
    clean = np.asarray(stats["clean"], dtype=np.float64)
    hfc = np.asarray(stats["hfc"], dtype=np.float64)
    cdf = np.cumsum(clean) / max(clean.sum(), 1e-12)
    idx_a = int(np.searchsorted(cdf, 0.99))
    cut_a = float(edges[min(idx_a + 1, len(edges) - 1)])
    above = np.nonzero((hfc > clean) & (edges[:-1] > cut_a))[0]
    cut_b = float(edges[above[0]]) if above.size else cut_a + LP2_INIT["B"] - LP2_INIT["A"]
    if cut_b < cut_a + CUTOFF_BUFFER:
        cut_b = cut_a + CUTOFF_BUFFER
    return cut_a, cut_b


def af_project_constraints(spec: ActivationSpec) -> ActivationSpec:
    """Clamp drifted learnable parameters back into the valid region. Idempotent.

    Fixed parameters are never touched, so a configured alpha = 1 stays 1.
    """
    kind = spec.kind
    learnable = set(spec.learnable_names())
    update: Dict[str, float] = {}
    eps = PROJECTION_EPS

    def bound(name: str, value: float) -> float:
        return value if name in learnable else getattr(spec, name)

    if kind in ("clipped_relu", "log_tailed_relu", "lp_relu1", "lp_relu2"):
        update["A"] = bound("A", max(spec.A, 0.0))
    if kind == "lp_relu1":
        update["alpha"] = bound("alpha", min(max(spec.alpha, 0.0), 1.0 - eps))
    if kind == "lp_relu2":
        alpha = bound("alpha", min(max(spec.alpha, eps), 1.0 - eps))
        update["alpha"] = alpha
        update["beta"] = bound("beta", min(max(spec.beta, 0.0), alpha - eps))
        update["B"] = bound("B", max(spec.B, update["A"] + CUTOFF_BUFFER))
    if kind == "tent":
        update["delta"] = bound("delta", max(spec.delta, eps))

    changed = {k: v for k, v in update.items() if getattr(spec, k) != v}
    if changed:
        logger.debug("Projected %s parameters %s", kind, changed)
        return spec.model_copy(update=changed)
    return spec


def parse_af_params(text: str) -> Dict[str, float]:
    """'A=5,B=8.1' → {'A': 5.0, 'B': 8.1}."""
    params: Dict[str, float] = {}
    for item in filter(None, (s.strip() for s in (text or "").split(","))):
        if "=" not in item:
            raise ActivationError(f"Bad activation parameter '{item}', expected k=v")
        key, value = (s.strip() for s in item.split("=", 1))
        try:
            params[key] = float(value)
        except ValueError:
            raise ActivationError(f"Bad value for {key}: '{value}'") from None
    return params
