"""SGD with momentum, L2 and a step learning-rate schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import L2, LEARNING_RATE, LR_SCHEDULE, MOMENTUM
from .errors import OptimizerError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float = LEARNING_RATE
    momentum: float = MOMENTUM
    l2: float = L2
    schedule: List[Tuple[int, float]] = field(default_factory=lambda: list(LR_SCHEDULE))
    velocity: Dict[int, np.ndarray] = field(default_factory=dict)
    base_lr: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise OptimizerError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise OptimizerError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.l2 < 0:
            raise OptimizerError(f"l2 must be nonnegative, got {self.l2}")
        self.schedule = sorted((int(e), float(m)) for e, m in self.schedule)
        self.base_lr = self.learning_rate


def lr_at(state: OptimizerState, epoch: int) -> float:
    """Base rate times every multiplier whose epoch has been reached (0-based epochs)."""
    lr = state.base_lr
    for at, mult in state.schedule:
        if epoch >= at:
            lr *= mult
    return lr


def set_epoch(state: OptimizerState, epoch: int) -> float:
    lr = lr_at(state, epoch)
    if lr != state.learning_rate:
        logger.info("Learning rate %.6g -> %.6g at epoch %d", state.learning_rate, lr, epoch)
    state.learning_rate = lr
    return lr


def sgd_step(state: OptimizerState, params: Sequence[Tensor]) -> None:
    """v ← μ·v − lr·(g + λ·p); p ← p + v; grads cleared."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise OptimizerError(f"Parameter {i} ({p.name or 'unnamed'}) has no gradient")
    for i, p in enumerate(params):
        g = p.grad + state.l2 * p.data if (p.decay and state.l2) else p.grad
        v = state.velocity.get(i)
        if v is None or v.shape != p.shape:
            v = np.zeros_like(p.data)
        v = state.momentum * v - state.learning_rate * g
        state.velocity[i] = v
        p.data = p.data + v
        p.grad = None
