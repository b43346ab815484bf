"""Analytic gradients of the pair and batch losses, plus a finite-difference oracle.

All gradients are taken with respect to raw embedding coordinates: the
loss is viewed as a function of ``Z`` through ``Z @ Z.T`` and nothing is
renormalized inside it. Sphere constraints are handled by the optimizer
(project after the step).

Two routes are kept on purpose. The closed forms (``sincere_grad_*`` and
``supcon_grad_wrt_positive``) transcribe the attraction/repulsion form of
the gradient; :func:`pair_gradients_generic` differentiates a generic
softmax cross-entropy. The test-suite requires both to agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import softmax

from .core import (
    DegenerateBatchError,
    IndexPartition,
    ValidationError,
    check_tau,
    cosine_similarity_matrix,
    dot_similarity,
    partition_for_anchor,
    renormalize_rows,
)
from .losses import (
    LossKind,
    _pair_masks,
    pair_loss_matrix,
    sincere_pair_loss,
    supcon_pair_loss,
)


@dataclass
class PairGradient:
    """Gradient of one loss term with respect to the embedding ``wrt``.

    ``factors[j]`` is the unscaled bracket multiplying ``z_j / tau`` for
    each same-class partner ``j`` (``softmax - 1`` for SINCERE,
    ``softmax - 1/|P|`` for SupCon). ``partner`` selects the headline one.
    """

    wrt: int
    partner: int
    vector: np.ndarray
    factors: dict[int, float]
    tau: float
    scale: float = 1.0

    @property
    def factor(self) -> float:
        return self.factors[self.partner]

    @property
    def attraction_coefficient(self) -> float:
        return self.scale * self.factor / self.tau


def _check(part: IndexPartition, p: int | None = None):
    if not part.noise:
        raise DegenerateBatchError(f"anchor {part.anchor} has an empty noise set")
    if p is not None and p not in part.positives:
        raise ValidationError(f"index {p} is not a positive of anchor {part.anchor}")


def sincere_grad_wrt_positive(Z, part: IndexPartition, p: int, tau: float) -> PairGradient:
    Z = np.asarray(Z, dtype=np.float64)
    tau = check_tau(tau)
    _check(part, p)
    S = part.anchor
    noise = np.array(sorted(part.noise))
    w = softmax(np.concatenate(([Z[S] @ Z[p]], Z[noise] @ Z[p])) / tau)
    factor = w[0] - 1.0
    vec = (Z[S] / tau) * factor + (w[1:, None] * Z[noise] / tau).sum(axis=0)
    return PairGradient(p, S, vec, {S: float(factor)}, tau)


def supcon_grad_wrt_positive(Z, part: IndexPartition, p: int, tau: float) -> PairGradient:
    """Gradient wrt ``z_p`` of SupCon averaged over the partners of ``p``.

    Each partner ``q`` contributes ``(z_q / tau)(softmax[q] - 1/|P|)`` and
    noise contributes ``(z_n / tau) softmax[n]``; the softmax runs over
    every index except ``p``. The bracket for ``q = anchor`` lies in
    ``[-1/|P|, 1 - 1/|P|]`` and can be positive (repulsion).
    """
    Z = np.asarray(Z, dtype=np.float64)
    tau = check_tau(tau)
    _check(part, p)
    S = part.anchor
    n_pos = len(part.positives)
    partners = sorted([S] + [j for j in part.positives if j != p])
    noise = sorted(part.noise)
    others = np.array(sorted(partners + noise))
    w = dict(zip(others.tolist(), softmax(Z[others] @ Z[p] / tau)))
    factors = {q: float(w[q] - 1.0 / n_pos) for q in partners}
    vec = sum((Z[q] / tau) * factors[q] for q in partners)
    vec = vec + sum((Z[n] / tau) * w[n] for n in noise)
    return PairGradient(p, S, np.asarray(vec), factors, tau)


def sincere_grad_wrt_anchor(Z, part: IndexPartition, tau: float) -> PairGradient:
    """Gradient wrt ``z_t`` (``t`` = ``part.anchor``) of the per-anchor SINCERE term.

    Here ``t`` plays the partner role in every pair: the objective is
    ``mean over p in P_t of L_SINCERE(S=p, partner=t)``, so every logit is
    a similarity to ``z_t``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    tau = check_tau(tau)
    _check(part)
    if not part.positives:
        raise DegenerateBatchError(f"anchor {part.anchor} has no positives")
    t = part.anchor
    noise = np.array(sorted(part.noise))
    positives = sorted(part.positives)
    noise_logits = Z[noise] @ Z[t] / tau
    vec = np.zeros(Z.shape[1])
    factors = {}
    for p in positives:
        w = softmax(np.concatenate(([Z[p] @ Z[t] / tau], noise_logits)))
        factors[p] = float(w[0] - 1.0)
        vec += Z[p] * factors[p] + (w[1:, None] * Z[noise]).sum(axis=0)
    scale = 1.0 / len(positives)
    return PairGradient(t, positives[0], vec * scale / tau, factors, tau, scale)


def pair_gradients_generic(Z, S: int, p: int, others, tau: float, epsilon: float = 0.0) -> dict[int, np.ndarray]:
    """Gradient of ``-log softmax_S`` over ``{S} | others`` (logits ``z_j.z_p / tau``).

    Returned as ``{index: d loss / d z_index}`` for every embedding involved.
    """
    Z = np.asarray(Z, dtype=np.float64)
    idx = [S] + sorted(int(j) for j in others)
    logits = Z[idx] @ Z[p] / tau
    logits[0] -= epsilon
    w = softmax(logits)
    # d loss / d logit_j, then logit_j = z_j . z_p / tau (S's logit also in the numerator)
    dlogit = w.copy()
    dlogit[0] -= 1.0
    grads: dict[int, np.ndarray] = {}
    for j, g in zip(idx, dlogit):
        grads[j] = grads.get(j, 0.0) + g * Z[p] / tau
    grads[p] = grads.get(p, 0.0) + (dlogit[:, None] * Z[idx]).sum(axis=0) / tau
    return grads


def pair_others(kind: LossKind, part: IndexPartition, p: int) -> list[int]:
    if kind.name == "supcon":
        return sorted([j for j in part.positives if j != p] + list(part.noise))
    return sorted(part.noise)


def batch_gradient(kind, Z, labels, tau: float, *, strict: bool = True, validate: bool = True):
    """Exact gradient of :func:`~contrastlab.losses.batch_loss` wrt every row of ``Z``.

    Returns ``(loss, grad)``. Derivatives are first taken wrt the logit
    matrix ``M = Z Z^T / tau`` and then pulled back as ``(G + G^T) Z / tau``.
    """
    kind = LossKind.coerce(kind)
    tau = check_tau(tau)
    Z = np.asarray(Z, dtype=np.float64)
    sim = cosine_similarity_matrix(Z) if validate else dot_similarity(Z)
    labels = np.asarray(labels)
    same, mask, W, _ = _pair_masks(labels, strict)
    L, lse = pair_loss_matrix(kind, sim, same, tau)
    loss = float(np.sum(W[mask] * L[mask]))
    M = sim / tau
    col_weight = W.sum(axis=0)
    if kind.name == "supcon":
        sm = np.exp(M - lse[None, :])
        np.fill_diagonal(sm, 0.0)
        G = col_weight[None, :] * sm - W
    else:
        shifted = M - kind.epsilon
        a = np.exp(shifted - np.logaddexp(shifted, lse[None, :]))
        a = np.where(mask, a, 0.0)
        with np.errstate(invalid="ignore", over="ignore"):
            q = np.where(same, 0.0, np.exp(M - lse[None, :]))
        noise_weight = np.sum(W * (1.0 - a), axis=0)
        G = W * (a - 1.0) + noise_weight[None, :] * q
    grad = (G + G.T) @ Z / tau
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient (max logit {np.max(np.abs(M)):g})")
    return loss, grad


def batch_gradient_loop(kind, Z, labels, tau: float, *, strict: bool = True) -> np.ndarray:
    """Reference gradient accumulated pair by pair in a fixed order."""
    kind = LossKind.coerce(kind)
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    _, mask, W, _ = _pair_masks(labels, strict)
    grad = np.zeros_like(Z)
    for S, p in zip(*np.nonzero(mask)):
        part = partition_for_anchor(labels, int(S))
        others = pair_others(kind, part, int(p))
        for j, g in pair_gradients_generic(Z, int(S), int(p), others, tau, kind.epsilon).items():
            grad[j] += W[S, p] * g
    return grad


def finite_difference_gradient(loss_fn: Callable[[np.ndarray], float], Z, wrt: int, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` along each coordinate of row ``wrt``."""
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step}")
    Z = np.array(Z, dtype=np.float64)
    g = np.empty(Z.shape[1])
    for k in range(Z.shape[1]):
        orig = Z[wrt, k]
        Z[wrt, k] = orig + step
        up = loss_fn(Z)
        Z[wrt, k] = orig - step
        down = loss_fn(Z)
        Z[wrt, k] = orig
        g[k] = (up - down) / (2 * step)
    return g


def relative_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


# --- loss wrappers on raw coordinates, used as finite-difference targets ---


def sincere_pair_objective(part: IndexPartition, p: int, tau: float):
    return lambda Z: sincere_pair_loss(dot_similarity(Z), part, p, tau)


def supcon_positive_objective(part: IndexPartition, p: int, tau: float):
    """``mean over partners q of p`` of SupCon(anchor=q, partner=p)."""
    target = part.target
    partners = [q for q in target if q != p]

    def fn(Z):
        sim = dot_similarity(Z)
        total = 0.0
        for q in partners:
            sub = IndexPartition(q, tuple(i for i in target if i != q), part.noise, part.universe)
            total += supcon_pair_loss(sim, sub, p, tau)
        return total / len(partners)

    return fn


def sincere_anchor_objective(part: IndexPartition, tau: float):
    """``mean over p in P_t of SINCERE(anchor=p, partner=t)`` for ``t = part.anchor``."""
    t = part.anchor
    target = part.target

    def fn(Z):
        sim = dot_similarity(Z)
        total = 0.0
        for p in part.positives:
            sub = IndexPartition(p, tuple(i for i in target if i != p), part.noise, part.universe)
            total += sincere_pair_loss(sim, sub, t, tau)
        return total / len(part.positives)

    return fn


# --- coefficient diagnostics ---


def supcon_factor_bounds(n_pos: int) -> tuple[float, float]:
    """Range of SupCon's bracket on ``z_S``: ``[-1/|P|, 1 - 1/|P|]``."""
    if n_pos < 1:
        raise ValidationError("need at least one positive")
    return -1.0 / n_pos, 1.0 - 1.0 / n_pos


SINCERE_FACTOR_BOUNDS = (-1.0, 0.0)


@dataclass
class RepulsionWitness:
    Z: np.ndarray
    labels: np.ndarray
    anchor: int
    positive: int
    tau: float
    supcon_factor: float = field(default=float("nan"))
    sincere_factor: float = field(default=float("nan"))


def supcon_repulsion_witness(tau: float = 0.1, n_pos: int = 4) -> RepulsionWitness:
    """Batch where SupCon pushes a same-class pair apart and SINCERE does not.

    The anchor coincides with the partner ``p`` while the other ``n_pos - 1``
    class members and the noise point away, so SupCon's softmax weight on
    the anchor exceeds ``1/|P|``.
    """
    if n_pos < 2:
        raise ValidationError("repulsion needs |P| >= 2")
    e1, e2 = np.eye(2)
    p_vec = e1
    rows = [p_vec, p_vec]  # p, S
    # remaining positives spread on the far side of the circle
    for k in range(n_pos - 1):
        ang = np.pi * (0.75 + 0.5 * k / max(n_pos - 2, 1))
        rows.append(np.array([np.cos(ang), np.sin(ang)]))
    rows += [e2, -e2]
    Z = renormalize_rows(np.array(rows))
    labels = np.array([0] * (n_pos + 1) + [1, 1])
    part = partition_for_anchor(labels, 1)
    w = RepulsionWitness(Z, labels, anchor=1, positive=0, tau=tau)
    w.supcon_factor = supcon_grad_wrt_positive(Z, part, 0, tau).factor
    w.sincere_factor = sincere_grad_wrt_positive(Z, part, 0, tau).factor
    return w


__all__ = [
    "PairGradient",
    "RepulsionWitness",
    "SINCERE_FACTOR_BOUNDS",
    "batch_gradient",
    "batch_gradient_loop",
    "dot_similarity",
    "finite_difference_gradient",
    "pair_gradients_generic",
    "relative_error",
    "sincere_anchor_objective",
    "sincere_grad_wrt_anchor",
    "sincere_grad_wrt_positive",
    "sincere_pair_objective",
    "supcon_factor_bounds",
    "supcon_grad_wrt_positive",
    "supcon_positive_objective",
    "supcon_repulsion_witness",
]
