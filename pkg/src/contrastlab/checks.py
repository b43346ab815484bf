"""Randomized oracle suites shared by the command line and the test suite.

Each suite returns a plain dict of summary numbers plus a boolean ``ok``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from .bounds import SE_SLACK, bound_report, sincere_bound, supcon_bound
from .core import cosine_similarity_matrix, partition_for_anchor, random_unit_rows
from .genmodel import (
    Categorical,
    DiagonalGaussian,
    brute_force_posterior,
    posterior_selfsup,
    posterior_supervised,
    sample_supervised,
)
from .gradients import (
    SINCERE_FACTOR_BOUNDS,
    finite_difference_gradient,
    relative_error,
    sincere_anchor_objective,
    sincere_grad_wrt_anchor,
    sincere_grad_wrt_positive,
    sincere_pair_objective,
    supcon_factor_bounds,
    supcon_grad_wrt_positive,
    supcon_positive_objective,
    supcon_repulsion_witness,
)
from .losses import eps_supinfonce_pair_loss, sincere_pair_loss, supcon_pair_loss, supcon_pseudo_probability_sum

FAULTS = ("sign_flip",)


def random_labeled_batch(rng: np.random.Generator, max_n: int = 16, max_d: int = 8, min_n: int = 4):
    """Unit embeddings with labels guaranteeing an anchor that has a positive and noise.

    Returns ``(Z, labels, anchor, p)``.
    """
    n = int(rng.integers(min_n, max_n + 1))
    d = int(rng.integers(2, max_d + 1))
    k = int(rng.integers(2, max(3, n // 2) + 1))
    labels = rng.integers(0, k, size=n)
    labels[0] = labels[1] = 0
    labels[2] = 1
    labels = labels[rng.permutation(n)]
    counts = np.bincount(labels)
    anchor = int(rng.choice(np.flatnonzero(counts[labels] >= 2)))
    part = partition_for_anchor(labels, anchor)
    p = int(rng.choice(part.positives))
    return random_unit_rows(rng, n, d), labels, anchor, p


def gradient_suite(batches: int = 100, seed: int = 0, tau: float = 0.1, max_n: int = 16, max_d: int = 8,
                   step: float = 1e-5, tol: float = 1e-6, fault: str | None = None) -> dict:
    """Closed-form pair and anchor gradients against central differences."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    rng = np.random.default_rng(seed)
    sign = -1.0 if fault == "sign_flip" else 1.0
    worst = {"sincere_positive": 0.0, "supcon_positive": 0.0, "sincere_anchor": 0.0}
    for _ in range(batches):
        Z, labels, anchor, p = random_labeled_batch(rng, max_n, max_d)
        part = partition_for_anchor(labels, anchor)
        cases = {
            "sincere_positive": (sincere_grad_wrt_positive(Z, part, p, tau), sincere_pair_objective(part, p, tau), p),
            "supcon_positive": (supcon_grad_wrt_positive(Z, part, p, tau), supcon_positive_objective(part, p, tau), p),
            "sincere_anchor": (sincere_grad_wrt_anchor(Z, part, tau), sincere_anchor_objective(part, tau), anchor),
        }
        for name, (g, fn, wrt) in cases.items():
            fd = finite_difference_gradient(fn, Z, wrt, step)
            worst[name] = max(worst[name], relative_error(sign * g.vector, fd))
    max_err = max(worst.values())
    return {"batches": batches, "tau": tau, "tolerance": tol, "max_relative_error": max_err,
            "max_relative_error_by_gradient": worst, "fault": fault, "ok": bool(max_err <= tol)}


def coefficient_suite(batches: int = 1000, seed: int = 0, max_n: int = 16, max_d: int = 8) -> dict:
    """Range of the same-class bracket for SINCERE and SupCon over random batches and temperatures."""
    rng = np.random.default_rng(seed)
    s_lo, s_hi = math.inf, -math.inf
    violations = 0
    sup_max_pos = -math.inf
    for _ in range(batches):
        Z, labels, anchor, p = random_labeled_batch(rng, max_n, max_d)
        tau = float(rng.uniform(0.05, 1.0))
        part = partition_for_anchor(labels, anchor)
        sf = sincere_grad_wrt_positive(Z, part, p, tau).factor
        cf = supcon_grad_wrt_positive(Z, part, p, tau).factor
        lo, hi = supcon_factor_bounds(len(part.positives))
        s_lo, s_hi = min(s_lo, sf), max(s_hi, sf)
        sup_max_pos = max(sup_max_pos, cf)
        if not SINCERE_FACTOR_BOUNDS[0] <= sf <= SINCERE_FACTOR_BOUNDS[1] or not lo <= cf <= hi:
            violations += 1
    w = supcon_repulsion_witness()
    witness = {"embeddings": w.Z.tolist(), "labels": w.labels.tolist(), "anchor": w.anchor,
               "positive": w.positive, "tau": w.tau, "supcon_factor": w.supcon_factor,
               "sincere_factor": w.sincere_factor}
    return {"batches": batches, "sincere_factor_min": s_lo, "sincere_factor_max": s_hi,
            "supcon_factor_max": sup_max_pos, "range_violations": violations, "witness": witness,
            "ok": bool(violations == 0 and w.supcon_factor > 0 and w.sincere_factor <= 0)}


def random_density_pair(rng: np.random.Generator, family: str):
    if family == "gaussian":
        d = int(rng.integers(1, 4))
        return (DiagonalGaussian(rng.normal(0, 1.5, d), rng.uniform(0.5, 2.0, d)),
                DiagonalGaussian(rng.normal(0, 1.5, d), rng.uniform(0.5, 2.0, d)))
    if family == "categorical":
        k = int(rng.integers(2, 7))
        a, b = (rng.dirichlet(np.ones(k)) + 0.01 for _ in range(2))
        return Categorical(a / a.sum()), Categorical(b / b.sum())
    raise ValueError(f"unknown density family {family!r}")


def posterior_check(X, t: int, target, noise) -> float:
    """Max abs gap between the closed-form posterior and enumeration over every P of size t-1."""
    n = len(X)
    brute = brute_force_posterior(X, t, target, noise)
    worst = 0.0
    for P in itertools.combinations(range(n), t - 1):
        closed = posterior_supervised(X, P, target, noise)
        enum = brute.conditional(P)
        worst = max(worst, float(np.max(np.abs(closed.probabilities - enum.probabilities))))
        if t == 1:
            worst = max(worst, float(np.max(np.abs(posterior_selfsup(X, target, noise).probabilities
                                                   - enum.probabilities))))
    return worst


def posterior_suite(instances: int = 50, seed: int = 0, max_n: int = 8,
                    families=("gaussian", "categorical"), tol: float = 1e-12) -> dict:
    """Every ``2 <= n <= max_n`` and ``1 <= t < n`` on each random density pair."""
    rng = np.random.default_rng(seed)
    worst, by_family, checked = 0.0, {f: 0.0 for f in families}, 0
    for i in range(instances):
        family = families[i % len(families)]
        target, noise = random_density_pair(rng, family)
        for n in range(2, max_n + 1):
            for t in range(1, n):
                X = sample_supervised(n, t, target, noise, rng).data
                dev = posterior_check(X, t, target, noise)
                by_family[family] = max(by_family[family], dev)
                worst = max(worst, dev)
                checked += 1
    return {"instances": instances, "configurations": checked, "max_abs_deviation": worst,
            "max_abs_deviation_by_family": by_family, "tolerance": tol, "ok": bool(worst <= tol)}


def identity_suite(inputs: int = 1000, seed: int = 0, tol: float = 1e-15) -> dict:
    """SINCERE against SupCon with one positive, and against the margin variant at zero margin."""
    rng = np.random.default_rng(seed)
    single, zero_eps = 0.0, 0.0
    for _ in range(inputs):
        n, d = int(rng.integers(3, 17)), int(rng.integers(2, 9))
        tau = float(rng.uniform(0.05, 1.0))
        sim = cosine_similarity_matrix(random_unit_rows(rng, n, d))
        labels = np.arange(n)
        labels[1] = 0  # exactly one positive for anchor 0
        part = partition_for_anchor(labels, 0)
        single = max(single, abs(sincere_pair_loss(sim, part, 1, tau) - supcon_pair_loss(sim, part, 1, tau)))
        Z, labels, anchor, p = random_labeled_batch(rng)
        sim = cosine_similarity_matrix(Z)
        part = partition_for_anchor(labels, anchor)
        zero_eps = max(zero_eps, abs(sincere_pair_loss(sim, part, p, tau)
                                     - eps_supinfonce_pair_loss(sim, part, p, tau, 0.0)))
    return {"inputs": inputs, "single_positive_max_gap": single, "zero_epsilon_max_gap": zero_eps,
            "tolerance": tol, "ok": bool(single <= tol and zero_eps <= tol)}


def pseudo_probability_suite(instances: int = 200, seed: int = 0, tol: float = 1e-15) -> dict:
    """SupCon's candidate weights: sum 1 at one positive, below 1 beyond, closed form at equal ratios."""
    rng = np.random.default_rng(seed)
    one_gap, max_multi, eq_gap = 0.0, -math.inf, 0.0
    for _ in range(instances):
        n = int(rng.integers(3, 12))
        n_pos = int(rng.integers(1, n))
        P = sorted(rng.choice(n, size=n_pos, replace=False).tolist())
        ratios = np.exp(rng.normal(0, 2, n))
        _, total = supcon_pseudo_probability_sum(ratios, P, P[0])
        if n_pos == 1:
            one_gap = max(one_gap, abs(total - 1.0))
        else:
            max_multi = max(max_multi, total)
        n_noise = n - n_pos - 1
        _, eq = supcon_pseudo_probability_sum(np.full(n, float(rng.uniform(0.1, 10))), P, P[0])
        eq_gap = max(eq_gap, abs(eq - (1 + n_noise) / (n_pos + n_noise)))
    ok = one_gap <= tol and max_multi < 1.0 and eq_gap <= tol
    return {"instances": instances, "single_positive_max_gap": one_gap, "multi_positive_max_sum": max_multi,
            "equal_ratio_max_gap": eq_gap, "ok": bool(ok)}


def bound_ordering_grid(max_noise: int = 64, max_pos: int = 32, divergences=(0, Fraction(1, 4), 1, 4, 16)) -> dict:
    """The SupCon floor is never below the SINCERE floor, with equality exactly at one positive.

    The gap is ``log(m/|N|) + (|P|-1)/m * J`` with ``m = |N| + |P| - 1``:
    the rational part is checked exactly and the log part by integer
    comparison of ``m`` with ``|N|``. The floating-point floors are checked
    against the same decomposition.
    """
    bad = []
    for n_noise in range(1, max_noise + 1):
        for n_pos in range(1, max_pos + 1):
            m = n_noise + n_pos - 1
            for J in divergences:
                J = Fraction(J)
                rational = Fraction(n_pos - 1, m) * J
                log_part_positive = m > n_noise
                exact_sign = 1 if (log_part_positive or rational > 0) else 0
                diff = supcon_bound(n_noise, n_pos, float(J)) - sincere_bound(n_noise, float(J))
                expected = math.log(m / n_noise) + float(rational)
                if (exact_sign == 0) != (n_pos == 1) or abs(diff - expected) > 1e-12 \
                        or (n_pos == 1 and diff != 0.0) or (n_pos > 1 and not diff > 0):
                    bad.append((n_noise, n_pos, str(J)))
    return {"grid": [max_noise, max_pos, [str(j) for j in divergences]], "failures": bad, "ok": not bad}


def gaussian_bound_suite(mus=(0.0, 0.5, 1.0, 2.0), ns=(6, 10), t: int = 2, samples: int = 100_000,
                         seed: int = 0, with_supcon: bool = False) -> dict:
    """Monte-Carlo ideal loss against its floor for unit-variance 1-D Gaussian pairs."""
    rows = []
    for mu in mus:
        target, noise = DiagonalGaussian([mu], [1.0]), DiagonalGaussian([0.0], [1.0])
        for n in ns:
            r = bound_report(n, t, target, noise, samples, seed, with_supcon=with_supcon)
            rows.append({"mu": mu, "n": n, "t": t, **r.to_dict(), "satisfied": r.satisfied})
    return {"slack_se": SE_SLACK, "reports": rows, "ok": all(r["satisfied"] for r in rows)}
