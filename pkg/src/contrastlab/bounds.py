"""Symmetrized KL, Monte-Carlo ideal losses, and the loss lower bounds.

The ideal loss scores each candidate with the exact log density ratio
(the best any scoring network can do) and averages ``-log p(S | X, P)``
over draws from the generative model. Its floor is

    sincere:  log|N| - symKL
    supcon:   log(|N| + |P| - 1) - |N| / (|N| + |P| - 1) * symKL

where ``symKL = KL(p- || p+) + KL(p+ || p-)``. Bound checks allow three
standard errors of Monte-Carlo slack.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import ValidationError
from .genmodel import Categorical, Density, DiagonalGaussian, log_ratio, sample_supervised_batch

SE_SLACK = 3.0
DEFAULT_MC_SAMPLES = 100_000
DEFAULT_CHUNK = 10_000


class MCEstimate(NamedTuple):
    estimate: float
    stderr: float
    samples: int


def _gaussian_kl(a: DiagonalGaussian, b: DiagonalGaussian) -> float:
    m0, s0 = np.asarray(a.mean), np.asarray(a.sigmas)
    m1, s1 = np.asarray(b.mean), np.asarray(b.sigmas)
    return float(0.5 * np.sum((s0 / s1) ** 2 + ((m1 - m0) / s1) ** 2 - 1.0 + 2.0 * np.log(s1 / s0)))


def _categorical_kl(a: Categorical, b: Categorical) -> float:
    p, q = np.asarray(a.pmf), np.asarray(b.pmf)
    return float(np.sum(p * (np.log(p) - np.log(q))))


def kl_divergence(a: Density, b: Density) -> float | None:
    """Closed-form ``KL(a || b)`` when both are Gaussian or both categorical, else None."""
    if isinstance(a, DiagonalGaussian) and isinstance(b, DiagonalGaussian):
        if a.dim != b.dim:
            raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
        return _gaussian_kl(a, b)
    if isinstance(a, Categorical) and isinstance(b, Categorical):
        if len(a.pmf) != len(b.pmf):
            raise ValidationError(f"alphabet mismatch: {len(a.pmf)} vs {len(b.pmf)}")
        return _categorical_kl(a, b)
    if isinstance(a, Categorical) != isinstance(b, Categorical):
        raise ValidationError("cannot compare a discrete and a continuous density")
    return None


def symmetrized_kl_mc(target: Density, noise: Density, samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> MCEstimate:
    """``E_{p+}[log r] - E_{p-}[log r]`` with ``r = p+/p-``, by sampling both densities."""
    rng_t, rng_n = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    a = log_ratio(target.sample(rng_t, samples), target, noise)
    b = log_ratio(noise.sample(rng_n, samples), target, noise)
    se = math.sqrt(a.var(ddof=1) / samples + b.var(ddof=1) / samples)
    return MCEstimate(float(a.mean() - b.mean()), se, samples)


def symmetrized_kl(target: Density, noise: Density, *, samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> float:
    """``KL(p- || p+) + KL(p+ || p-)`` in nats.

    Closed form for Gaussian and categorical pairs; otherwise a Monte-Carlo
    estimate (see :func:`symmetrized_kl_mc` for its standard error).
    """
    forward = kl_divergence(target, noise)
    if forward is None:
        return symmetrized_kl_mc(target, noise, samples, seed).estimate
    return forward + kl_divergence(noise, target)


def _chunks(samples: int, chunk: int):
    sizes = [chunk] * (samples // chunk)
    if samples % chunk:
        sizes.append(samples % chunk)
    return sizes


def _mc(per_sample, n, t, target, noise, samples, seed, chunk) -> MCEstimate:
    if samples < 1000:
        raise ValidationError(f"need at least 1000 Monte-Carlo samples, got {samples}")
    sizes = _chunks(samples, chunk)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    means, values = [], []
    for size, ss in zip(sizes, streams):
        X, S, in_P = sample_supervised_batch(n, t, target, noise, size, np.random.default_rng(ss))
        lr = log_ratio(X.reshape((size * n,) + X.shape[2:]), target, noise).reshape(size, n)
        v = per_sample(lr, S, in_P)
        means.append(v.mean())
        values.append(v)
    values = np.concatenate(values)
    estimate = float(np.dot(means, sizes) / samples)
    return MCEstimate(estimate, float(values.std(ddof=1) / math.sqrt(samples)), samples)


def _sincere_terms(lr, S, in_P):
    rows = np.arange(lr.shape[0])
    return logsumexp(np.where(in_P, -np.inf, lr), axis=1) - lr[rows, S]


def _supcon_terms(lr, S, in_P):
    # for each p in P: -log r_S / (sum over every index except p); averaged over p
    rows = np.arange(lr.shape[0])
    full = logsumexp(lr, axis=1, keepdims=True)
    without_p = full + np.log1p(-np.exp(lr - full))
    per_p = np.where(in_P, without_p - lr[rows, S][:, None], 0.0)
    return per_p.sum(axis=1) / in_P.sum(axis=1)


def ideal_loss_mc(n: int, t: int, target: Density, noise: Density, samples: int = DEFAULT_MC_SAMPLES,
                  seed: int = 0, chunk: int = DEFAULT_CHUNK) -> MCEstimate:
    """Monte-Carlo ideal SINCERE loss with exact density-ratio scores.

    Chunks use independent child seeds and are reduced in a fixed order.
    """
    return _mc(_sincere_terms, n, t, target, noise, samples, seed, chunk)


def ideal_supcon_loss_mc(n: int, t: int, target: Density, noise: Density, samples: int = DEFAULT_MC_SAMPLES,
                         seed: int = 0, chunk: int = DEFAULT_CHUNK) -> MCEstimate:
    """Same as :func:`ideal_loss_mc` but with SupCon's denominator (extra positives kept)."""
    if t < 2:
        raise ValidationError("SupCon needs t >= 2 (a nonempty partner set)")
    return _mc(_supcon_terms, n, t, target, noise, samples, seed, chunk)


def sincere_bound(n_noise: int, sym_kl: float) -> float:
    return math.log(n_noise) - sym_kl


def supcon_bound(n_noise: int, n_pos: int, sym_kl: float) -> float:
    m = n_noise + n_pos - 1
    return math.log(m) - (n_noise / m) * sym_kl


@dataclass
class BoundReport:
    n_noise: int
    n_pos: int
    sym_kl: float
    mc_loss_estimate: float
    mc_standard_error: float
    mc_samples: int
    sincere_rhs: float
    supcon_rhs: float
    sincere_trivial_rhs: float
    supcon_trivial_rhs: float
    sincere_satisfied: bool
    divergence_lower_bound: float
    divergence_check_satisfied: bool
    supcon_estimate: float | None = None
    supcon_standard_error: float | None = None
    supcon_satisfied: bool | None = None

    @property
    def satisfied(self) -> bool:
        return self.sincere_satisfied and self.divergence_check_satisfied and self.supcon_satisfied is not False

    def to_dict(self) -> dict:
        return asdict(self)


def check_bounds(n_noise: int, n_pos: int, sym_kl: float, estimate: MCEstimate,
                 supcon: MCEstimate | None = None, slack: float = SE_SLACK) -> BoundReport:
    if n_noise < 1 or n_pos < 1:
        raise ValidationError("need |N| >= 1 and |P| >= 1")
    if sym_kl < 0:
        raise ValidationError(f"symmetrized KL must be nonnegative, got {sym_kl}")
    s_rhs = sincere_bound(n_noise, sym_kl)
    c_rhs = supcon_bound(n_noise, n_pos, sym_kl)
    est, se = estimate.estimate, estimate.stderr
    report = BoundReport(
        n_noise=n_noise,
        n_pos=n_pos,
        sym_kl=float(sym_kl),
        mc_loss_estimate=est,
        mc_standard_error=se,
        mc_samples=estimate.samples,
        sincere_rhs=s_rhs,
        supcon_rhs=c_rhs,
        sincere_trivial_rhs=max(s_rhs, 0.0),
        supcon_trivial_rhs=max(c_rhs, 0.0),
        sincere_satisfied=bool(est + slack * se >= s_rhs),
        divergence_lower_bound=math.log(n_noise) - est,
        divergence_check_satisfied=bool(math.log(n_noise) - est <= sym_kl + slack * se),
    )
    if supcon is not None:
        report.supcon_estimate = supcon.estimate
        report.supcon_standard_error = supcon.stderr
        report.supcon_satisfied = bool(supcon.estimate + slack * supcon.stderr >= c_rhs)
    return report


def bound_report(n: int, t: int, target: Density, noise: Density, samples: int = DEFAULT_MC_SAMPLES,
                 seed: int = 0, with_supcon: bool = True) -> BoundReport:
    """Estimate the ideal losses for one ``(n, t)`` and check both floors."""
    kl = symmetrized_kl(target, noise, seed=seed)
    est = ideal_loss_mc(n, t, target, noise, samples, seed)
    sup = ideal_supcon_loss_mc(n, t, target, noise, samples, seed) if with_supcon and t >= 2 else None
    return check_bounds(n - t, max(t - 1, 1), kl, est, sup)
