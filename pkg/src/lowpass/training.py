"""Training loop, deterministic given the seed.

Each epoch: seeded shuffle, optional DCT augmentation (parallel per image),
zero-centre normalisation with the training mean, SGD step, activation
constraint projection. Rows of the per-epoch log follow TRAIN_LOG_HEADER.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .dataio import Split
from .dct import augment_batch
from .errors import NumericError
from .layers import (
    Layer, channel_mean, forward, parameters, predict, project_constraints, zero_center_normalize,
)
from .metrics import top1
from .models import RunConfig
from .optim import OptimizerState, set_epoch, sgd_step
from .tensor import Tensor, backward, softmax, softmax_cross_entropy

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    mean: np.ndarray
    rows: List[list] = field(default_factory=list)
    state: Optional[OptimizerState] = None


def batch_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def evaluate(network: List[Layer], split: Split, mean: np.ndarray, batch_size: int = 512) -> Tuple[float, float]:
    logits = predict(network, split.images, mean, batch_size)
    p = softmax(logits)
    loss = float(-np.log(np.clip(p[np.arange(len(split.labels)), split.labels], 1e-300, None)).mean())
    return loss, top1(logits, split.labels)


def train(
    network: List[Layer],
    train_split: Split,
    config: RunConfig,
    val_split: Optional[Split] = None,
    test_split: Optional[Split] = None,
) -> TrainResult:
    opt = config.optim
    seed = config.run.seed
    state = OptimizerState(
        learning_rate=opt.lr, momentum=opt.momentum, l2=opt.l2, schedule=opt.schedule,
    )
    params = parameters(network)
    mean = channel_mean(train_split.images)
    policy = config.policy() if config.augment.dct else None
    result = TrainResult(mean=mean, state=state)
    n = len(train_split.labels)

    for epoch in range(opt.epochs):
        lr = set_epoch(state, epoch)
        order = np.random.default_rng(batch_seed(seed, epoch)).permutation(n)
        total_loss, correct = 0.0, 0

        for b, start in enumerate(range(0, n, opt.batch_size)):
            idx = order[start:start + opt.batch_size]
            xb = train_split.images[idx]
            yb = train_split.labels[idx]
            if policy is not None:
                xb = augment_batch(xb, policy, seed=batch_seed(seed, epoch, b), workers=config.run.workers)
            logits = forward(network, Tensor(zero_center_normalize(xb, mean)))
            loss = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss.item()):
                raise NumericError(f"Non-finite loss at epoch {epoch}, batch {b}")
            backward(loss)
            sgd_step(state, params)
            project_constraints(network)
            total_loss += loss.item() * len(idx)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
            logger.debug("epoch %d batch %d loss %.4f", epoch, b, loss.item())

        row = [epoch, "train", total_loss / n, correct / n, lr]
        result.rows.append(row)
        for split in (val_split, test_split):
            if split is not None and len(split.labels):
                loss_s, acc_s = evaluate(network, split, mean)
                result.rows.append([epoch, split.tag, loss_s, acc_s, lr])
        summary = " ".join(f"{r[1]} loss={r[2]:.4f} top1={r[3]:.4f}" for r in result.rows if r[0] == epoch)
        logger.info("epoch %d: %s", epoch, summary)
        if any(not np.all(np.isfinite(t.data)) for t in params):
            raise NumericError(f"Non-finite parameters after epoch {epoch}")
    return result
