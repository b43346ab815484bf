"""Contrastive loss kernels: InfoNCE, SupCon, SINCERE and eps-SupInfoNCE.

Pair losses follow the inner-variable convention: for anchor ``S`` and
same-class partner ``p`` every logit is a similarity to ``z_p`` divided by
the temperature. The kernels differ only in which indices enter the
softmax denominator:

=================  ==============================================
SINCERE            ``{S} | noise``
SupCon             ``{S} | (positives - {p}) | noise``
eps-SupInfoNCE     ``{S} | noise`` with the ``S`` term shifted by ``-eps``
InfoNCE            SINCERE with exactly one positive (the other view)
=================  ==============================================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .core import (
    DegenerateBatchError,
    IndexPartition,
    ValidationError,
    as_sim,
    check_tau,
    cosine_similarity_matrix,
    dot_similarity,
)

log = logging.getLogger(__name__)

KIND_NAMES = ("infonce", "supcon", "sincere", "eps_supinfonce")

# searched values for the margin hyperparameter
EPSILON_GRID = (0.1, 0.25, 0.5)


@dataclass(frozen=True)
class LossKind:
    name: str
    epsilon: float = 0.0

    def __post_init__(self):
        name = self.name.lower().replace("-", "_")
        if name not in KIND_NAMES:
            raise ValidationError(f"unknown loss kind {self.name!r}; expected one of {KIND_NAMES}")
        object.__setattr__(self, "name", name)
        if name != "eps_supinfonce" and self.epsilon != 0.0:
            raise ValidationError(f"epsilon only applies to eps_supinfonce, got {self.epsilon}")
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be nonnegative, got {self.epsilon}")

    @classmethod
    def coerce(cls, kind, epsilon: float = 0.0) -> "LossKind":
        if isinstance(kind, LossKind):
            return kind
        return cls(kind, float(epsilon) if str(kind).lower().startswith("eps") else 0.0)

    def __str__(self):
        if self.name == "eps_supinfonce":
            return f"eps_supinfonce(epsilon={self.epsilon:g})"
        return self.name


SINCERE = LossKind("sincere")
SUPCON = LossKind("supcon")
INFONCE = LossKind("infonce")


def _check_pair(part: IndexPartition, p: int) -> None:
    if p not in part.positives:
        raise ValidationError(f"index {p} is not a positive of anchor {part.anchor}")
    if not part.noise:
        raise DegenerateBatchError(f"anchor {part.anchor} has an empty noise set")


def _nll(sim: np.ndarray, S: int, p: int, others, tau: float, eps: float = 0.0) -> float:
    """-log softmax weight of ``S`` among ``{S} | others``, logits ``sim[., p] / tau``."""
    target = sim[S, p] / tau
    gaps = sim[np.asarray(others, dtype=int), p] / tau - target + eps
    if gaps.max() <= 0:
        # log1p keeps full relative precision when the loss is tiny
        return float(-eps + np.log1p(np.exp(gaps).sum()))
    return float(logsumexp(np.concatenate(([0.0], gaps))) - eps)


def sincere_pair_loss(sim, part: IndexPartition, p: int, tau: float) -> float:
    sim = as_sim(sim)
    tau = check_tau(tau)
    _check_pair(part, p)
    return _nll(sim, part.anchor, p, sorted(part.noise), tau)


def supcon_pair_loss(sim, part: IndexPartition, p: int, tau: float) -> float:
    sim = as_sim(sim)
    tau = check_tau(tau)
    _check_pair(part, p)
    others = sorted([j for j in part.positives if j != p] + list(part.noise))
    return _nll(sim, part.anchor, p, others, tau)


def eps_supinfonce_pair_loss(sim, part: IndexPartition, p: int, tau: float, epsilon: float) -> float:
    """May be negative for large ``epsilon``; no sign is enforced."""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be nonnegative, got {epsilon}")
    sim = as_sim(sim)
    tau = check_tau(tau)
    _check_pair(part, p)
    return _nll(sim, part.anchor, p, sorted(part.noise), tau, float(epsilon))


def info_nce_loss(sim_row, target: int, noise, tau: float) -> float:
    """Self-supervised loss for one anchor.

    ``sim_row[i]`` is the similarity of item ``i`` to the augmented copy of
    the anchor; ``target`` indexes the anchor itself.
    """
    sim_row = np.asarray(sim_row, dtype=np.float64)
    tau = check_tau(tau)
    noise = sorted(int(n) for n in noise)
    if not noise:
        raise DegenerateBatchError("InfoNCE needs at least one noise index")
    if target in noise:
        raise ValidationError(f"target {target} also listed as noise")
    t = sim_row[target] / tau
    logits = np.concatenate(([t], sim_row[noise] / tau))
    return float(logsumexp(logits) - t)


def pair_loss(kind, sim, part: IndexPartition, p: int, tau: float) -> float:
    kind = LossKind.coerce(kind)
    if kind.name == "supcon":
        return supcon_pair_loss(sim, part, p, tau)
    if kind.name == "eps_supinfonce":
        return eps_supinfonce_pair_loss(sim, part, p, tau, kind.epsilon)
    if kind.name == "infonce" and len(part.positives) != 1:
        raise ValidationError("InfoNCE pairs need exactly one positive (the augmented view)")
    return sincere_pair_loss(sim, part, p, tau)


@dataclass
class LossReport:
    """Pair losses and their weighted batch mean.

    ``pair_matrix[S, p]`` holds the pair loss for anchor ``S`` and partner
    ``p`` (NaN where the pair is not valid); ``weights`` holds the
    aggregation weight ``1 / (N |P_S|)``.
    """

    kind: LossKind
    pair_matrix: np.ndarray
    weights: np.ndarray
    batch_loss: float
    skipped_anchors: tuple[int, ...] = field(default=())

    @cached_property
    def pair_losses(self) -> dict[tuple[int, int], float]:
        S, p = np.nonzero(self.weights > 0)
        return {(int(a), int(b)): float(self.pair_matrix[a, b]) for a, b in zip(S, p)}


def _pair_masks(labels: np.ndarray, strict: bool):
    n = labels.shape[0]
    same = labels[:, None] == labels[None, :]
    offdiag = ~np.eye(n, dtype=bool)
    pos = same & offdiag
    n_pos = pos.sum(axis=1)
    n_noise = (~same).sum(axis=1)
    bad_noise = np.flatnonzero(n_noise == 0)
    bad_pos = np.flatnonzero(n_pos == 0)
    if strict and bad_noise.size:
        raise DegenerateBatchError(f"anchor {int(bad_noise[0])} has an empty noise set")
    if strict and bad_pos.size:
        raise DegenerateBatchError(f"anchor {int(bad_pos[0])} has no positive partner")
    valid = (n_pos > 0) & (n_noise > 0)
    skipped = tuple(int(i) for i in np.flatnonzero(~valid))
    if skipped:
        log.warning("skipping %d anchor(s) without positives or noise: %s", len(skipped), skipped[:10])
    if not valid.any():
        raise DegenerateBatchError("no anchor has both a positive and a noise partner")
    mask = pos & valid[:, None]
    per_anchor = 1.0 / (valid.sum() * np.maximum(n_pos, 1))
    weights = np.where(mask, per_anchor[:, None], 0.0)
    return same, mask, weights, skipped


def pair_loss_matrix(kind: LossKind, sim: np.ndarray, same: np.ndarray, tau: float):
    """Vectorized pair losses for every (S, p); also returns the softmax pieces.

    Returns ``(L, lse)`` with ``L[S, p]`` the pair loss (only meaningful on
    same-class off-diagonal entries) and ``lse[p]`` the log-normalizer of
    the terms that do not depend on ``S``.
    """
    n = sim.shape[0]
    M = sim / tau
    if kind.name == "supcon":
        # denominator over every j != p, shared by all anchors of p's class
        lse = logsumexp(np.where(np.eye(n, dtype=bool), -np.inf, M), axis=0)
        return lse[None, :] - M, lse
    # noise-only log normalizer for column p
    with np.errstate(divide="ignore"):
        lse = logsumexp(np.where(same, -np.inf, M), axis=0)
    L = np.logaddexp(M - kind.epsilon, lse[None, :]) - M
    return L, lse


def batch_loss(kind, Z, labels, tau: float, *, strict: bool = True, validate: bool = True) -> LossReport:
    """Batch objective: sum over anchors S and partners p of pair_loss / (N |P_S|).

    With ``strict=False`` anchors lacking a positive or a noise partner are
    skipped (with a warning) and N counts only the remaining anchors.
    ``validate=False`` skips the unit-norm check so the loss can be probed
    at off-sphere points (finite differences).
    """
    kind = LossKind.coerce(kind)
    tau = check_tau(tau)
    labels = np.asarray(labels)
    sim = cosine_similarity_matrix(Z) if validate else dot_similarity(Z)
    if labels.shape[0] != sim.shape[0]:
        raise ValidationError(f"{labels.shape[0]} labels for {sim.shape[0]} embeddings")
    same, mask, weights, skipped = _pair_masks(labels, strict)
    if kind.name == "infonce" and np.any(mask.sum(axis=1)[mask.any(axis=1)] != 1):
        raise ValidationError("InfoNCE batches need every instance id to appear exactly twice")
    L, _ = pair_loss_matrix(kind, sim, same, tau)
    pair = np.where(mask, L, np.nan)
    total = float(np.sum(weights[mask] * L[mask]))
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite batch loss (max logit {np.max(np.abs(sim)) / tau:g})")
    return LossReport(kind, pair, weights, total, skipped)


def supcon_pseudo_probability_sum(ratios, positives, p: int):
    """SupCon's would-be probability of each candidate ``S``, and their sum.

    ``positives`` is the partner set P (it contains ``p``); candidates are
    every index outside P. Returns ``({S: value}, total)``.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if np.any(r <= 0):
        raise ValidationError("density ratios must be strictly positive")
    positives = sorted(set(int(i) for i in positives))
    if p not in positives:
        raise ValidationError(f"{p} is not in the positive set")
    universe = range(r.shape[0])
    extra = [j for j in positives if j != p]
    values = {}
    for S in universe:
        if S in positives:
            continue
        noise = [n for n in universe if n != S and n not in positives]
        values[S] = float(r[S] / (r[S] + r[extra].sum() + r[noise].sum()))
    return values, float(sum(values.values()))
