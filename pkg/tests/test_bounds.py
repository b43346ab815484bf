import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastlab.bounds import (
    MCEstimate,
    bound_report,
    check_bounds,
    ideal_loss_mc,
    ideal_supcon_loss_mc,
    kl_divergence,
    sincere_bound,
    supcon_bound,
    symmetrized_kl,
    symmetrized_kl_mc,
)
from contrastlab.checks import bound_ordering_grid
from contrastlab.core import ValidationError
from contrastlab.genmodel import Categorical, Density, DiagonalGaussian, IsotropicGaussian

# two directed KLs summed term by term with the math module
CAT_SYM_KL = 0.8788898309344878


class Wrapped(Density):
    """Hides a Gaussian's type so no closed form applies."""

    def __init__(self, inner):
        self.inner = inner

    def log_density(self, x):
        return self.inner.log_density(x)

    def sample(self, rng, size):
        return self.inner.sample(rng, size)


def test_symmetrized_kl_closed_forms():
    g = IsotropicGaussian([0.4], 1.3)
    assert symmetrized_kl(g, g) == 0.0
    for mu in (0.5, 1.0, 2.0):
        assert symmetrized_kl(IsotropicGaussian([mu]), IsotropicGaussian([0.0])) == pytest.approx(mu**2, abs=1e-15)
        mc = symmetrized_kl_mc(IsotropicGaussian([mu]), IsotropicGaussian([0.0]), 100_000, seed=1)
        assert abs(mc.estimate - mu**2) <= 3 * mc.stderr
    a, b = Categorical([0.5, 0.5]), Categorical([0.9, 0.1])
    assert symmetrized_kl(a, b) == pytest.approx(CAT_SYM_KL, rel=1e-14)
    assert kl_divergence(a, b) == pytest.approx(0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(5), rel=1e-14)


def test_diagonal_gaussian_kl_against_scipy_free_formula():
    a = DiagonalGaussian([0.0, 1.0], [1.0, 2.0])
    b = DiagonalGaussian([1.0, -1.0], [0.5, 1.0])
    expected = sum(math.log(s1 / s0) + (s0**2 + (m0 - m1) ** 2) / (2 * s1**2) - 0.5
                   for m0, s0, m1, s1 in [(0, 1, 1, 0.5), (1, 2, -1, 1)])
    assert kl_divergence(a, b) == pytest.approx(expected, rel=1e-14)


def test_monte_carlo_fallback():
    g, h = IsotropicGaussian([1.0]), IsotropicGaussian([0.0])
    assert kl_divergence(Wrapped(g), Wrapped(h)) is None
    est = symmetrized_kl(Wrapped(g), Wrapped(h), samples=100_000, seed=3)
    mc = symmetrized_kl_mc(g, h, 100_000, seed=3)
    assert est == mc.estimate and abs(est - 1.0) <= 3 * mc.stderr


def test_kl_errors():
    with pytest.raises(ValidationError):
        kl_divergence(IsotropicGaussian([0.0]), IsotropicGaussian([0.0, 0.0]))
    with pytest.raises(ValidationError):
        kl_divergence(Categorical([0.5, 0.5]), Categorical([0.2, 0.3, 0.5]))
    with pytest.raises(ValidationError):
        kl_divergence(Categorical([0.5, 0.5]), IsotropicGaussian([0.0]))


@pytest.mark.parametrize("n, t", [(6, 2), (5, 1), (8, 4)])
def test_chance_level_when_densities_match(n, t):
    g = IsotropicGaussian([0.0])
    est = ideal_loss_mc(n, t, g, g, samples=5000, seed=0)
    n_noise = n - t
    assert est.estimate == pytest.approx(math.log(1 + n_noise), abs=1e-12)
    assert est.stderr < 1e-12


def test_ideal_loss_floor_at_mu_1():
    est = ideal_loss_mc(6, 2, IsotropicGaussian([1.0]), IsotropicGaussian([0.0]), 100_000, seed=0)
    assert est.estimate + 3 * est.stderr >= math.log(4) - 1
    assert est.estimate >= 0


def test_estimates_grow_with_noise_count():
    g, h = IsotropicGaussian([1.0]), IsotropicGaussian([0.0])
    ests = [ideal_loss_mc(2 + k, 2, g, h, 50_000, seed=k) for k in (2, 4, 8, 16)]
    for a, b in zip(ests, ests[1:]):
        assert b.estimate - 3 * math.hypot(a.stderr, b.stderr) > a.estimate


def test_estimator_is_seeded():
    g, h = IsotropicGaussian([0.5]), IsotropicGaussian([0.0])
    assert ideal_loss_mc(6, 2, g, h, 20_000, seed=9) == ideal_loss_mc(6, 2, g, h, 20_000, seed=9)
    assert ideal_loss_mc(6, 2, g, h, 20_000, seed=9) != ideal_loss_mc(6, 2, g, h, 20_000, seed=10)


def test_supcon_ideal_loss_and_floor():
    g, h = IsotropicGaussian([1.0]), IsotropicGaussian([0.0])
    sup = ideal_supcon_loss_mc(8, 4, g, h, 50_000, seed=0)
    sin = ideal_loss_mc(8, 4, g, h, 50_000, seed=0)
    assert sup.estimate > sin.estimate
    assert sup.estimate + 3 * sup.stderr >= supcon_bound(4, 3, 1.0)
    with pytest.raises(ValidationError):
        ideal_supcon_loss_mc(6, 1, g, h, 5000)
    with pytest.raises(ValidationError):
        ideal_loss_mc(6, 2, g, h, 999)


def test_rhs_examples():
    assert supcon_bound(4, 1, 0.7) == sincere_bound(4, 0.7)
    assert supcon_bound(4, 3, 2.0) == pytest.approx(math.log(6) - 4 / 6 * 2, abs=1e-15)
    assert supcon_bound(4, 3, 2.0) > sincere_bound(4, 2.0) == pytest.approx(math.log(4) - 2, abs=1e-15)


@given(n_noise=st.integers(1, 200), n_pos=st.integers(1, 200), kl=st.floats(0, 50))
def test_supcon_floor_dominates(n_noise, n_pos, kl):
    gap = supcon_bound(n_noise, n_pos, kl) - sincere_bound(n_noise, kl)
    if n_pos == 1:
        assert gap == 0.0
    else:
        assert gap > 0


def test_ordering_grid():
    assert bound_ordering_grid()["ok"]


def test_check_bounds_report_fields():
    est = MCEstimate(1.6, 0.01, 10_000)
    r = check_bounds(4, 1, 0.0, est)
    assert r.sincere_rhs == math.log(4) and r.sincere_trivial_rhs == math.log(4)
    assert r.satisfied and r.divergence_check_satisfied
    bad = check_bounds(4, 1, 0.0, MCEstimate(1.0, 0.01, 10_000))
    assert not bad.sincere_satisfied and not bad.satisfied
    assert check_bounds(4, 1, 5.0, est).sincere_trivial_rhs == 0.0
    with pytest.raises(ValidationError):
        check_bounds(0, 1, 0.1, est)
    with pytest.raises(ValidationError):
        check_bounds(3, 1, -0.1, est)


@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0, 2.0])
def test_bound_report_gaussian(mu):
    r = bound_report(6, 2, IsotropicGaussian([mu]), IsotropicGaussian([0.0]), 20_000, seed=1)
    assert r.satisfied
    assert r.sym_kl == pytest.approx(mu**2, abs=1e-15)
    assert r.divergence_lower_bound <= r.sym_kl + 3 * r.mc_standard_error
    d = r.to_dict()
    assert d["n_noise"] == 4 and d["n_pos"] == 1


def test_bound_report_categorical_supcon():
    r = bound_report(8, 3, Categorical([0.6, 0.3, 0.1]), Categorical([0.2, 0.3, 0.5]), 20_000, seed=2)
    assert r.supcon_satisfied and r.satisfied
    assert r.supcon_rhs > r.sincere_rhs
