"""Shared training loop: AdamW, seeded batching, early stopping.

Every trainable component in the pipeline uses the same loop so that the
determinism and early-stopping contracts hold uniformly: training stops when
the validation loss has failed to improve for `patience` consecutive epochs,
and the best-validation weights are restored at the end.

`run_training` seeds all RNGs from the config before the first step. Weight
initialization, however, happens where the model is constructed: trainers
that build their own model reseed before construction, while callers that
construct a model themselves should call `seed_everything` first if they
need run-to-run identical weights.
"""

from __future__ import annotations

import copy
import logging
import random
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import ConfigError

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch RNGs (CPU training is then deterministic)."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-5
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 5              # consecutive non-improving validation epochs
    max_steps: int | None = None   # optional hard cap on optimizer steps
    weight_decay: float = 0.01
    seed: int = 0
    device: str = "cpu"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainingConfig":
        return cls(**raw)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a strictly lower loss."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError("patience must be at least 1")
        self.patience = patience
        self.best = float("inf")
        self.bad_epochs = 0

    def update(self, val_loss: float) -> bool:
        """Record an epoch's validation loss; returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    steps: int = 0


def iter_batches(items: Sequence, batch_size: int, rng: random.Random) -> list[list]:
    order = list(range(len(items)))
    rng.shuffle(order)
    return [
        [items[i] for i in order[start : start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]


def run_training(
    model: torch.nn.Module,
    train_items: Sequence,
    val_items: Sequence,
    batch_loss: Callable[[torch.nn.Module, list], torch.Tensor],
    config: TrainingConfig,
) -> TrainHistory:
    """Generic fit loop.

    Args:
        batch_loss: maps (model, list-of-items) to a scalar loss tensor; the
            caller owns collation so any item type works.

    Returns the loss history; the model ends up holding the weights of its
    best validation epoch.
    """
    if not train_items:
        raise ConfigError("training set is empty")
    if not val_items:
        raise ConfigError("validation set is empty")
    seed_everything(config.seed)
    device = torch.device(config.device)
    model.to(device)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    stopper = EarlyStopper(config.patience)
    history = TrainHistory()
    batch_rng = random.Random(config.seed + 1)
    best_state: dict | None = None
    done = False

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        epoch_losses: list[float] = []
        for batch in iter_batches(train_items, config.batch_size, batch_rng):
            optimizer.zero_grad()
            loss = batch_loss(model, batch)
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
            history.steps += 1
            if config.max_steps is not None and history.steps >= config.max_steps:
                done = True
                break
        history.train_loss.append(float(np.mean(epoch_losses)))
        history.val_loss.append(evaluate_loss(model, val_items, batch_loss, config))
        history.stopped_epoch = epoch
        logger.debug(
            "epoch %d: train %.4f val %.4f",
            epoch,
            history.train_loss[-1],
            history.val_loss[-1],
        )
        if history.val_loss[-1] < stopper.best:
            best_state = copy.deepcopy(model.state_dict())
        if stopper.update(history.val_loss[-1]) or done:
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return history


def evaluate_loss(
    model: torch.nn.Module,
    items: Sequence,
    batch_loss: Callable[[torch.nn.Module, list], torch.Tensor],
    config: TrainingConfig,
) -> float:
    """Mean per-batch loss over `items` without gradient tracking."""
    model.eval()
    losses: list[float] = []
    with torch.no_grad():
        for start in range(0, len(items), config.batch_size):
            batch = list(items[start : start + config.batch_size])
            losses.append(float(batch_loss(model, batch)))
    return float(np.mean(losses))
