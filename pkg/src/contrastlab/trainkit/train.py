"""SGD with momentum on sphere-projected embeddings."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ValidationError, check_tau
from ..gradients import batch_gradient
from ..losses import LossKind
from .data import Dataset, make_batches
from .encoders import FreeEmbeddingTable, MLPEncoder

log = logging.getLogger(__name__)

SCHEDULES = ("constant", "cosine")
ENCODERS = ("table", "mlp")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, max_logit: float):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch} (max |logit| {max_logit:g})")
        self.epoch, self.batch, self.max_logit = epoch, batch, max_logit


@dataclass
class TrainConfig:
    loss: str = "sincere"
    tau: float = 0.1
    epsilon: float = 0.0
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_schedule: str = "cosine"
    warmup_epochs: int = 10
    floor_fraction: float = 0.001
    encoder: str = "table"
    hidden: int = 64
    embed_dim: int | None = None
    aug_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        LossKind.coerce(self.loss, self.epsilon)
        check_tau(self.tau)
        if self.batch_size < 4 or self.batch_size % 2:
            raise ValidationError(f"batch_size must be even and >= 4, got {self.batch_size}")
        if not 0 <= self.momentum < 1:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0 or self.learning_rate < 0:
            raise ValidationError("learning_rate and weight_decay must be nonnegative")
        if self.lr_schedule not in SCHEDULES:
            raise ValidationError(f"lr_schedule must be one of {SCHEDULES}")
        if self.encoder not in ENCODERS:
            raise ValidationError(f"encoder must be one of {ENCODERS}")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")

    @property
    def kind(self) -> LossKind:
        return LossKind.coerce(self.loss, self.epsilon)

    def to_dict(self):
        return asdict(self)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Per-epoch rate: linear warm-up from ``floor * lr`` then cosine back to the floor."""
    base = cfg.learning_rate
    if cfg.lr_schedule == "constant":
        return base
    lo = cfg.floor_fraction * base
    w = min(cfg.warmup_epochs, cfg.epochs - 1)
    if epoch < w:
        return lo + (base - lo) * epoch / w
    span = max(cfg.epochs - 1 - w, 1)
    return lo + 0.5 * (base - lo) * (1 + math.cos(math.pi * (epoch - w) / span))


class SGD:
    """Momentum SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params: dict, momentum: float, weight_decay: float):
        self.momentum, self.weight_decay = momentum, weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        for k, g in grads.items():
            v = self.velocity[k]
            v *= self.momentum
            v += g + self.weight_decay * params[k]
            params[k] -= lr * v


@dataclass
class TrainResult:
    encoder: object
    config: TrainConfig
    epoch_losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)


def build_encoder(cfg: TrainConfig, dataset: Dataset):
    if cfg.encoder == "table":
        return FreeEmbeddingTable(dataset.train_x)
    d = dataset.train_x.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    return MLPEncoder(d, cfg.embed_dim or d, cfg.hidden, rng)


def train(cfg: TrainConfig, dataset: Dataset, encoder=None) -> TrainResult:
    """Fit ``encoder`` (built from ``cfg`` if None) with the batch objective of ``cfg.loss``.

    Each epoch walks a seeded permutation of the training items; each batch
    holds two perturbed views per item. InfoNCE uses item ids as labels.
    """
    kind = cfg.kind
    encoder = encoder if encoder is not None else build_encoder(cfg, dataset)
    aug = cfg.aug_sigma if cfg.aug_sigma is not None else dataset.spec.within_class_noise / 2
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    opt = SGD(encoder.params, cfg.momentum, cfg.weight_decay)
    result = TrainResult(encoder, cfg)
    x, y = dataset.train_x, dataset.train_y
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        losses = []
        for b, batch in enumerate(make_batches(x, y, cfg.batch_size, rng, aug)):
            Z = encoder.forward(batch, x)
            labels = np.tile(batch.items, 2) if kind.name == "infonce" else batch.labels
            try:
                with np.errstate(invalid="ignore"):
                    loss, dZ = batch_gradient(kind, Z, labels, cfg.tau, validate=False)
            except FloatingPointError:
                loss = float("nan")
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, b, float(np.max(np.abs(Z @ Z.T))) / cfg.tau)
            opt.step(encoder.params, encoder.backward(dZ), lr)
            encoder.project()
            losses.append(loss)
        result.epoch_losses.append(float(np.mean(losses)))
        result.learning_rates.append(lr)
        log.debug("epoch %d lr %.4g loss %.6f", epoch, lr, result.epoch_losses[-1])
    return result
