"""Batch geometry shared by the loss, gradient and training code.

Embeddings live on the unit sphere; similarities are plain dot products and
the full N x N matrix is always materialized. Indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class DegenerateBatchError(ValidationError):
    """Raised when an anchor has no noise (or no positive) partners."""


class ProjectionError(ValidationError):
    """Raised when a zero-norm row cannot be projected onto the sphere."""


def check_unit_rows(Z: np.ndarray, tol: float = UNIT_NORM_TOL) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ValidationError(f"embeddings must be 2-D, got shape {Z.shape}")
    norms = np.linalg.norm(Z, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(f"row {i} has norm {norms[i]!r}, expected 1")
    return Z


@dataclass(frozen=True)
class EmbeddingMatrix:
    """N unit vectors in R^D."""

    values: np.ndarray

    def __post_init__(self):
        Z = check_unit_rows(self.values)
        if Z.shape[0] < 2 or Z.shape[1] < 1:
            raise ValidationError(f"need n >= 2 and d >= 1, got shape {Z.shape}")
        Z = Z.copy()
        Z.setflags(write=False)
        object.__setattr__(self, "values", Z)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IndexPartition:
    """Roles of every batch index relative to one anchor.

    ``positives`` excludes the anchor; ``noise`` is everything else.
    """

    anchor: int
    positives: tuple[int, ...]
    noise: tuple[int, ...]
    universe: tuple[int, ...]

    @property
    def target(self) -> tuple[int, ...]:
        return tuple(sorted((self.anchor, *self.positives)))

    def validate(self) -> None:
        parts = [{self.anchor}, set(self.positives), set(self.noise)]
        if sum(len(p) for p in parts) != len(set().union(*parts)):
            raise ValidationError("anchor, positives and noise overlap")
        if set().union(*parts) != set(self.universe):
            raise ValidationError("partition does not cover the universe")


def as_sim(sim) -> np.ndarray:
    """Accept a raw array or an EmbeddingMatrix-derived similarity matrix."""
    return np.asarray(sim, dtype=np.float64)


def cosine_similarity_matrix(Z) -> np.ndarray:
    """Full matrix of pairwise dot products between unit rows, O(N^2 D)."""
    if isinstance(Z, EmbeddingMatrix):
        Z = Z.values
    Z = check_unit_rows(Z)
    S = Z @ Z.T
    # exact symmetry; matmul need not produce it bit-for-bit
    S = 0.5 * (S + S.T)
    return S


def dot_similarity(Z) -> np.ndarray:
    """``Z @ Z.T`` without the unit-norm check, for probing off-sphere points."""
    Z = np.asarray(Z, dtype=np.float64)
    return Z @ Z.T


def partition_for_anchor(labels, anchor: int, *, allow_empty_noise: bool = False) -> IndexPartition:
    labels = np.asarray(labels)
    n = labels.shape[0]
    if not 0 <= anchor < n:
        raise ValidationError(f"anchor {anchor} outside [0, {n})")
    same = labels == labels[anchor]
    positives = tuple(int(i) for i in np.flatnonzero(same) if i != anchor)
    noise = tuple(int(i) for i in np.flatnonzero(~same))
    if not noise and not allow_empty_noise:
        raise DegenerateBatchError(
            f"anchor {anchor}: every label equals {labels[anchor]!r}, noise set is empty"
        )
    return IndexPartition(anchor, positives, noise, tuple(range(n)))


def renormalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    zero = np.flatnonzero(norms.reshape(-1) == 0.0)
    if zero.size:
        raise ProjectionError(f"row {int(zero[0])} has zero norm; cannot project to the sphere")
    return X / norms


def random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return renormalize_rows(rng.standard_normal((n, d)))


def check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0:
        raise ValidationError(f"temperature must be positive, got {tau}")
    return tau
