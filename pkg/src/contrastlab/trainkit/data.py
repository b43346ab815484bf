"""Synthetic clustered data on the sphere and two-view batch sampling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from ..core import ValidationError, renormalize_rows

MAX_BATCH_RETRIES = 20


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    k_classes: int = 2
    per_class: int = 200
    feature_dim: int = 16
    class_separation: float = 1.2
    within_class_noise: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.k_classes < 2:
            raise ValidationError(f"need at least 2 classes, got {self.k_classes}")
        if self.per_class < 2:
            raise ValidationError(f"need at least 2 items per class, got {self.per_class}")
        if self.class_separation < 0 or self.within_class_noise < 0:
            raise ValidationError("separation and noise must be nonnegative")
        if not 0 < self.test_fraction < 1:
            raise ValidationError(f"test_fraction must be in (0, 1), got {self.test_fraction}")

    @property
    def max_separation(self) -> float:
        """Distance between vertices of a regular simplex inscribed in the sphere."""
        k = self.k_classes
        return math.sqrt(2 * k / (k - 1))

    def to_dict(self):
        return asdict(self)


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_means: np.ndarray
    spec: SyntheticDatasetSpec

    @property
    def n_classes(self) -> int:
        return self.spec.k_classes


def class_mean_directions(spec: SyntheticDatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit class means with every pairwise distance equal to ``class_separation``.

    Centered simplex vertices are tilted toward a shared pole ``c``; the tilt
    ``a`` sets the distance ``sqrt(2k/(k-1) / (a^2 + 1))``.
    """
    k, d, delta = spec.k_classes, spec.feature_dim, spec.class_separation
    if delta > spec.max_separation + 1e-12:
        raise ValidationError(
            f"separation {delta} exceeds the simplex limit {spec.max_separation:.4f} for k={k}"
        )
    tilted = delta < spec.max_separation - 1e-12
    needed = k if tilted else k - 1
    if needed > d:
        raise ValidationError(f"separation {delta} for k={k} classes needs d >= {needed}, got d={d}")
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    simplex = np.eye(k) - 1.0 / k
    # orthonormal basis of the (k-1)-dim simplex span, then embed via Q
    U, _, _ = np.linalg.svd(simplex)
    verts = simplex @ U[:, : k - 1]
    verts = renormalize_rows(verts) @ Q[:, : k - 1].T
    if not tilted:
        return verts
    pole = Q[:, k - 1]
    if delta == 0:
        return np.tile(pole, (k, 1))
    a = math.sqrt(spec.max_separation**2 / delta**2 - 1.0)
    return renormalize_rows(verts + a * pole)


def generate_dataset(spec: SyntheticDatasetSpec) -> Dataset:
    """Gaussian clusters around the class means, projected to the sphere.

    The split is stratified: ``test_fraction`` of each class (at least one
    item) is held out.
    """
    rng = np.random.default_rng(spec.seed)
    means = class_mean_directions(spec, rng)
    k, m, d = spec.k_classes, spec.per_class, spec.feature_dim
    y = np.repeat(np.arange(k), m)
    x = renormalize_rows(means[y] + spec.within_class_noise * rng.standard_normal((k * m, d)))
    n_test = max(1, int(round(spec.test_fraction * m)))
    if n_test >= m:
        raise ValidationError("test split would leave a class without training items")
    test_mask = np.zeros(k * m, dtype=bool)
    for c in range(k):
        idx = np.flatnonzero(y == c)
        test_mask[rng.choice(idx, size=n_test, replace=False)] = True
    return Dataset(x[~test_mask], y[~test_mask], x[test_mask], y[test_mask], means, spec)


@dataclass
class Batch:
    """``m`` items, each seen twice; view ``v`` of item ``i`` is row ``v*m + i``."""

    items: np.ndarray
    perturbation: np.ndarray  # (2, m, d)
    labels: np.ndarray  # (2m,)

    @property
    def size(self) -> int:
        return 2 * self.items.shape[0]

    def views(self, base: np.ndarray) -> np.ndarray:
        """Perturbed, renormalized copies of ``base[items]`` stacked as (view 0; view 1)."""
        u = base[self.items][None, :, :] + self.perturbation
        return renormalize_rows(u.reshape(self.size, -1))


def _has_two_classes(labels) -> bool:
    return np.unique(labels).size >= 2


def make_batches(features, labels, batch_size: int, rng: np.random.Generator,
                 aug_sigma: float = 0.0) -> Iterator[Batch]:
    """One epoch of two-view batches: ``batch_size / 2`` items per batch.

    Items are drawn without replacement from a fresh permutation; the final
    partial chunk is dropped. A chunk with a single class is replaced by a
    random subset (bounded retries).
    """
    features = np.asarray(features)
    labels = np.asarray(labels)
    if batch_size < 4 or batch_size % 2:
        raise ValidationError(f"batch_size must be even and >= 4, got {batch_size}")
    m = batch_size // 2
    n = features.shape[0]
    if n < m:
        raise ValidationError(f"{n} items cannot fill a batch of {m} items")
    if not _has_two_classes(labels):
        raise ValidationError("need at least two classes to form contrastive batches")
    order = rng.permutation(n)
    for start in range(0, n - m + 1, m):
        items = order[start : start + m]
        tries = 0
        while not _has_two_classes(labels[items]):
            if tries >= MAX_BATCH_RETRIES:
                raise ValidationError(f"could not draw a two-class batch in {MAX_BATCH_RETRIES} tries")
            items = rng.choice(n, size=m, replace=False)
            tries += 1
        pert = aug_sigma * rng.standard_normal((2, m, features.shape[1]))
        yield Batch(items, pert, np.concatenate([labels[items], labels[items]]))
