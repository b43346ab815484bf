import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastlab.checks import gradient_suite, random_labeled_batch
from contrastlab.core import IndexPartition, ValidationError, partition_for_anchor, random_unit_rows
from contrastlab.gradients import (
    SINCERE_FACTOR_BOUNDS,
    batch_gradient,
    batch_gradient_loop,
    finite_difference_gradient,
    pair_gradients_generic,
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
from contrastlab.losses import LossKind, batch_loss, sincere_pair_loss
from contrastlab.core import dot_similarity

KINDS = ["sincere", "supcon", "infonce", ("eps_supinfonce", 0.25)]


def batch(seed):
    rng = np.random.default_rng(seed)
    Z, labels, a, p = random_labeled_batch(rng)
    return Z, labels, partition_for_anchor(labels, a), p


@given(seed=st.integers(0, 2**32 - 1))
def test_closed_forms_match_generic_route(seed):
    Z, labels, part, p = batch(seed)
    tau = 0.2
    g = sincere_grad_wrt_positive(Z, part, p, tau).vector
    generic = pair_gradients_generic(Z, part.anchor, p, part.noise, tau)[p]
    assert relative_error(g, generic) <= 1e-12

    T = part.target
    partners = [q for q in T if q != p]
    ref = np.mean([pair_gradients_generic(Z, q, p, [j for j in T if j not in (q, p)] + list(part.noise), tau)[p]
                   for q in partners], axis=0)
    assert relative_error(supcon_grad_wrt_positive(Z, part, p, tau).vector, ref) <= 1e-12

    t = part.anchor
    ref = np.mean([pair_gradients_generic(Z, q, t, part.noise, tau)[t] for q in part.positives], axis=0)
    assert relative_error(sincere_grad_wrt_anchor(Z, part, tau).vector, ref) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_pair_gradients_match_finite_differences(seed):
    Z, labels, part, p = batch(seed)
    for grad, fn, wrt in [
        (sincere_grad_wrt_positive(Z, part, p, 0.1), sincere_pair_objective(part, p, 0.1), p),
        (supcon_grad_wrt_positive(Z, part, p, 0.1), supcon_positive_objective(part, p, 0.1), p),
        (sincere_grad_wrt_anchor(Z, part, 0.1), sincere_anchor_objective(part, 0.1), part.anchor),
    ]:
        assert relative_error(grad.vector, finite_difference_gradient(fn, Z, wrt, 1e-5)) <= 1e-6


def test_generic_gradients_cover_every_coordinate(rng):
    Z, labels, a, p = random_labeled_batch(rng)
    part = partition_for_anchor(labels, a)
    grads = pair_gradients_generic(Z, a, p, part.noise, 0.3)
    fn = sincere_pair_objective(part, p, 0.3)
    for j, g in grads.items():
        assert relative_error(g, finite_difference_gradient(fn, Z, j)) <= 1e-6


def test_saturated_positive_vanishing_gradient():
    Z = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    part = partition_for_anchor([0, 0, 1, 1], 0)
    g = sincere_grad_wrt_positive(Z, part, 1, 0.01)
    assert np.linalg.norm(g.vector) < 1e-80
    assert g.factor == pytest.approx(0.0, abs=1e-80)


def test_anchor_single_positive_reduces_to_pair(rng):
    Z = random_unit_rows(rng, 5, 3)
    part = partition_for_anchor([0, 0, 1, 2, 1], 0)
    g = sincere_grad_wrt_anchor(Z, part, 0.2)
    mirrored = IndexPartition(1, (0,), part.noise, part.universe)
    assert relative_error(g.vector, sincere_grad_wrt_positive(Z, mirrored, 0, 0.2).vector) <= 1e-14


def test_anchor_gradient_saturated_direction():
    # positive aligned with the anchor, noise orthogonal: the gradient nearly vanishes
    Z = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    part = partition_for_anchor([0, 0, 1, 2], 0)
    g = sincere_grad_wrt_anchor(Z, part, 0.05)
    assert np.linalg.norm(g.vector) < 1e-6
    # what remains pulls toward the positive and away from the noise
    assert g.vector[0] < 0 and g.vector[1] > 0 and g.vector[2] > 0


def test_supcon_equals_sincere_with_one_positive(rng):
    Z = random_unit_rows(rng, 6, 4)
    part = partition_for_anchor([0, 0, 1, 1, 2, 3], 0)
    a, b = sincere_grad_wrt_positive(Z, part, 1, 0.1), supcon_grad_wrt_positive(Z, part, 1, 0.1)
    assert relative_error(a.vector, b.vector) <= 1e-14
    assert a.factor == pytest.approx(b.factor, abs=1e-15)


def test_repulsion_witness():
    w = supcon_repulsion_witness()
    assert w.supcon_factor > 0
    assert w.sincere_factor <= 0
    lo, hi = supcon_factor_bounds(4)
    assert lo <= w.supcon_factor <= hi
    with pytest.raises(ValidationError):
        supcon_repulsion_witness(n_pos=1)


@given(seed=st.integers(0, 2**32 - 1), tau=st.floats(0.02, 2.0))
def test_factor_ranges(seed, tau):
    Z, labels, part, p = batch(seed)
    s = sincere_grad_wrt_positive(Z, part, p, tau)
    c = supcon_grad_wrt_positive(Z, part, p, tau)
    lo, hi = supcon_factor_bounds(len(part.positives))
    assert SINCERE_FACTOR_BOUNDS[0] <= s.factor <= SINCERE_FACTOR_BOUNDS[1]
    assert lo <= c.factor <= hi
    assert -1 / tau <= s.attraction_coefficient <= 0


def test_supcon_lower_bound_shrinks_with_positives():
    lows = [supcon_factor_bounds(k)[0] for k in range(1, 50)]
    assert all(a < b for a, b in zip(lows, lows[1:]))
    assert lows[0] == -1.0 and abs(lows[-1]) < 0.03


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(3))
def test_batch_gradient_finite_differences(kind, seed):
    kind = LossKind.coerce(*kind) if isinstance(kind, tuple) else LossKind.coerce(kind)
    rng = np.random.default_rng(seed)
    Z = random_unit_rows(rng, 12, 4)
    labels = np.tile(np.arange(6), 2) if kind.name == "infonce" else np.array([0, 0, 0, 1, 1, 1, 1, 2, 2, 3, 3, 3])
    loss, grad = batch_gradient(kind, Z, labels, 0.1)
    assert loss == pytest.approx(batch_loss(kind, Z, labels, 0.1).batch_loss, abs=1e-14)
    fn = lambda X: batch_loss(kind, X, labels, 0.1, validate=False).batch_loss
    fd = np.stack([finite_difference_gradient(fn, Z, i) for i in range(12)])
    assert relative_error(grad, fd) <= 1e-6
    assert relative_error(grad, batch_gradient_loop(kind, Z, labels, 0.1)) <= 1e-12


@given(seed=st.integers(0, 2**32 - 1))
def test_batch_gradient_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    Z = random_unit_rows(rng, 10, 3)
    labels = np.array([0, 0, 1, 1, 1, 2, 2, 3, 3, 3])
    perm = rng.permutation(10)
    for kind in ("sincere", "supcon"):
        _, g = batch_gradient(kind, Z, labels, 0.1)
        _, gp = batch_gradient(kind, Z[perm], labels[perm], 0.1)
        np.testing.assert_allclose(gp, g[perm], atol=1e-12)


def test_batch_gradient_symmetric_configuration():
    # regular simplex directions per class, two identical members each
    V = np.eye(3)
    Z = np.repeat(V, 2, axis=0)
    labels = np.repeat(np.arange(3), 2)
    for kind in ("sincere", "supcon"):
        _, g = batch_gradient(kind, Z, labels, 0.5)
        for c in range(3):
            np.testing.assert_allclose(g[2 * c], g[2 * c + 1], atol=1e-15)


def test_finite_difference_quadratic_and_order(rng):
    A = rng.normal(size=(3, 3))
    Z = rng.normal(size=(2, 3))
    fn = lambda X: float(X[0] @ A @ X[0] + X[1] @ X[1])
    assert relative_error(finite_difference_gradient(fn, Z, 0, 1e-3), (A + A.T) @ Z[0]) <= 1e-10
    # sincere pair loss: error falls like step**2
    Z, labels, a, p = random_labeled_batch(np.random.default_rng(3))
    part = partition_for_anchor(labels, a)
    fn = sincere_pair_objective(part, p, 0.5)
    exact = sincere_grad_wrt_positive(Z, part, p, 0.5).vector
    errs = [relative_error(exact, finite_difference_gradient(fn, Z, p, h)) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[1] < errs[0] / 50 and errs[2] < errs[1] / 50
    with pytest.raises(ValidationError):
        finite_difference_gradient(fn, Z, p, 0.0)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error([1.0, 0.0], [0.0, 0.0]) == 1.0


def test_suite_fault_injection_detected():
    assert gradient_suite(batches=5)["ok"]
    assert not gradient_suite(batches=5, fault="sign_flip")["ok"]


def test_fd_objective_is_raw_coordinate_loss(rng):
    Z, labels, a, p = random_labeled_batch(rng)
    part = partition_for_anchor(labels, a)
    X = Z * 1.5  # off the sphere on purpose
    assert sincere_pair_objective(part, p, 0.1)(X) == sincere_pair_loss(dot_similarity(X), part, p, 0.1)
