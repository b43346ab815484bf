"""Target/noise generative models and the posterior over the selected index.

A batch of ``n`` items holds exactly ``t`` draws from the target density
``p+``; the rest come i.i.d. from the noise density ``p-``. The partner set
``P`` (``t - 1`` indices) is uniform over subsets and the selected index
``S`` is uniform over the remaining indices. ``t = 1`` is the
self-supervised model with ``P`` empty.

Given ``X`` and ``P`` the posterior over ``S`` is a softmax of the log
density ratio ``log p+(x) - log p-(x)`` over the candidates outside ``P``.
:func:`brute_force_posterior` recomputes it from the unsimplified joint by
enumerating every ``(S, P)`` assignment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ValidationError


class SupportViolationError(ValidationError):
    """A sample has zero noise density (``p-(x) = 0``) in strict support mode."""


class Density:
    """Interface: ``log_density(x)`` over the leading axis and ``sample(rng, size)``."""

    event_shape: tuple[int, ...] = ()

    def log_density(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class DiagonalGaussian(Density):
    mean: tuple[float, ...]
    sigmas: tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(m) for m in np.atleast_1d(self.mean))
        sigmas = tuple(float(s) for s in np.broadcast_to(np.atleast_1d(self.sigmas), (len(mean),)))
        if any(not s > 0 for s in sigmas):
            raise ValidationError(f"standard deviations must be positive, got {sigmas}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def event_shape(self):
        return (self.dim,)

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        mu, sd = np.asarray(self.mean), np.asarray(self.sigmas)
        z = (x - mu) / sd
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(sd)) - 0.5 * self.dim * math.log(2 * math.pi)

    def sample(self, rng, size) -> np.ndarray:
        size = tuple(np.atleast_1d(size))
        return np.asarray(self.mean) + np.asarray(self.sigmas) * rng.standard_normal(size + (self.dim,))


class IsotropicGaussian(DiagonalGaussian):
    """Gaussian with covariance ``sigma^2 I``."""

    def __init__(self, mean, sigma: float = 1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        super().__init__(tuple(mean), (float(sigma),) * mean.shape[0])

    @property
    def sigma(self) -> float:
        return self.sigmas[0]

    def __repr__(self):
        return f"IsotropicGaussian(mean={self.mean}, sigma={self.sigma})"


@dataclass(frozen=True)
class Categorical(Density):
    """Density over a finite alphabet ``{0, ..., K-1}``; every symbol must have mass."""

    pmf: tuple[float, ...]

    def __post_init__(self):
        pmf = tuple(float(v) for v in self.pmf)
        if any(not v > 0 for v in pmf):
            raise ValidationError("categorical pmf entries must all be positive (full support)")
        if abs(sum(pmf) - 1.0) > 1e-12:
            raise ValidationError(f"categorical pmf sums to {sum(pmf)!r}, not 1")
        object.__setattr__(self, "pmf", pmf)

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.size and (x.min() < 0 or x.max() >= len(self.pmf)):
            raise ValidationError(f"symbol outside alphabet of size {len(self.pmf)}")
        return np.log(np.asarray(self.pmf))[x]

    def sample(self, rng, size) -> np.ndarray:
        return rng.choice(len(self.pmf), size=size, p=np.asarray(self.pmf))


@dataclass
class ModelSample:
    data: np.ndarray
    anchor: int
    positives: tuple[int, ...]
    t: int

    def __post_init__(self):
        if len(self.positives) != self.t - 1 or self.anchor in self.positives:
            raise ValidationError("inconsistent model sample")


@dataclass
class PosteriorVector:
    candidates: tuple[int, ...]
    probabilities: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {c: float(p) for c, p in zip(self.candidates, self.probabilities)}

    def __getitem__(self, index: int) -> float:
        return float(self.probabilities[self.candidates.index(index)])


def _draw(density: Density, rng, size):
    return density.sample(rng, size)


def _fill(n, target_idx, target: Density, noise: Density, rng) -> np.ndarray:
    X = np.asarray(_draw(noise, rng, n))
    X = X.copy()
    X[list(target_idx)] = _draw(target, rng, len(target_idx))
    return X


def sample_selfsup(n: int, target: Density, noise: Density, rng: np.random.Generator) -> ModelSample:
    if n < 2:
        raise ValidationError(f"need n >= 2, got {n}")
    S = int(rng.integers(n))
    return ModelSample(_fill(n, [S], target, noise, rng), S, (), 1)


def sample_supervised(n: int, t: int, target: Density, noise: Density, rng: np.random.Generator) -> ModelSample:
    if t == 1:
        return sample_selfsup(n, target, noise, rng)
    if not 2 <= t < n:
        raise ValidationError(f"need 2 <= t < n, got t={t}, n={n}")
    P = tuple(sorted(int(i) for i in rng.choice(n, size=t - 1, replace=False)))
    rest = [i for i in range(n) if i not in P]
    S = int(rest[rng.integers(len(rest))])
    return ModelSample(_fill(n, (*P, S), target, noise, rng), S, P, t)


def sample_supervised_batch(n: int, t: int, target: Density, noise: Density, size: int, rng):
    """Vectorized draw of ``size`` independent model samples.

    Returns ``(X, S, in_P)`` with shapes ``(size, n, ...)``, ``(size,)`` and
    ``(size, n)``. A uniform random permutation per row supplies ``P`` (its
    first ``t - 1`` entries) and ``S`` (the next one).
    """
    if not 1 <= t < n:
        raise ValidationError(f"need 1 <= t < n, got t={t}, n={n}")
    order = np.argsort(rng.random((size, n)), axis=1)
    in_T = np.zeros((size, n), dtype=bool)
    np.put_along_axis(in_T, order[:, :t], True, axis=1)
    in_P = np.zeros((size, n), dtype=bool)
    np.put_along_axis(in_P, order[:, : t - 1], True, axis=1)
    S = order[:, t - 1]
    X = np.asarray(_draw(noise, rng, (size, n))).copy()
    X[in_T] = np.asarray(_draw(target, rng, int(in_T.sum())))
    return X, S, in_P


def log_ratio(x, target: Density, noise: Density, *, strict: bool = True) -> np.ndarray:
    """``log p+(x) - log p-(x)`` per item."""
    lt = np.asarray(target.log_density(x), dtype=np.float64)
    ln = np.asarray(noise.log_density(x), dtype=np.float64)
    bad = ~np.isfinite(ln)
    if strict and np.any(bad):
        i = int(np.flatnonzero(bad.reshape(-1))[0])
        raise SupportViolationError(f"noise density is zero at item {i}; the density ratio is undefined")
    return lt - ln


def posterior_supervised(X, P, target: Density, noise: Density, *, strict: bool = True) -> PosteriorVector:
    """``p(S | X, P)`` proportional to ``p+(x_S) / p-(x_S)`` over ``S`` outside ``P``."""
    X = np.asarray(X)
    n = X.shape[0]
    P = set(int(i) for i in P)
    candidates = tuple(i for i in range(n) if i not in P)
    if not candidates:
        raise ValidationError("P covers every index; no candidate for S")
    lr = log_ratio(X, target, noise, strict=strict)
    return PosteriorVector(candidates, softmax(lr[list(candidates)]))


def posterior_selfsup(X, target: Density, noise: Density, *, strict: bool = True) -> PosteriorVector:
    return posterior_supervised(X, (), target, noise, strict=strict)


MAX_BRUTE_FORCE_N = 12


@dataclass
class BruteForcePosterior:
    """Normalized joint ``p(S, P | X)`` over every assignment with ``|P| = t - 1``."""

    n: int
    t: int
    joint: dict[tuple[int, tuple[int, ...]], float]

    def conditional(self, P) -> PosteriorVector:
        P = tuple(sorted(int(i) for i in P))
        cands = tuple(i for i in range(self.n) if i not in P)
        w = np.array([self.joint[(s, P)] for s in cands])
        return PosteriorVector(cands, w / w.sum())


def brute_force_posterior(X, t: int, target: Density, noise: Density) -> BruteForcePosterior:
    """Enumerate the model joint without the density-ratio simplification.

    Every ``(S, P)`` gets ``log p(X | S, P) + log p(S | P) + log p(P)`` with
    ``p(X | S, P)`` the raw product of target and noise densities.
    """
    X = np.asarray(X)
    n = X.shape[0]
    if n > MAX_BRUTE_FORCE_N:
        raise ValidationError(
            f"n={n} too large for enumeration (limit {MAX_BRUTE_FORCE_N}); "
            "use posterior_supervised for larger batches"
        )
    if not 1 <= t < n:
        raise ValidationError(f"need 1 <= t < n, got t={t}, n={n}")
    lp_target = np.asarray(target.log_density(X), dtype=np.float64)
    lp_noise = np.asarray(noise.log_density(X), dtype=np.float64)
    log_p_P = -math.log(math.comb(n, t - 1))
    log_p_S = -math.log(n - t + 1)
    keys, logs = [], []
    for P in itertools.combinations(range(n), t - 1):
        for S in range(n):
            if S in P:
                continue
            T = set(P) | {S}
            lx = sum(lp_target[i] if i in T else lp_noise[i] for i in range(n))
            keys.append((S, P))
            logs.append(lx + log_p_S + log_p_P)
    logs = np.asarray(logs)
    probs = np.exp(logs - logsumexp(logs))
    return BruteForcePosterior(n, t, dict(zip(keys, probs.tolist())))
