import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrastlab.core import (
    DegenerateBatchError,
    EmbeddingMatrix,
    IndexPartition,
    ProjectionError,
    ValidationError,
    check_tau,
    check_unit_rows,
    cosine_similarity_matrix,
    partition_for_anchor,
    random_unit_rows,
    renormalize_rows,
)


def naive_sim(Z):
    n = len(Z)
    return np.array([[sum(Z[i][k] * Z[j][k] for k in range(len(Z[i]))) for j in range(n)] for i in range(n)])


def test_identical_rows_give_all_ones():
    z = renormalize_rows([[1.0, 2.0, 2.0]])[0]
    np.testing.assert_allclose(cosine_similarity_matrix(np.stack([z, z])), np.ones((2, 2)), atol=1e-15)


def test_orthogonal_basis_rows():
    S = cosine_similarity_matrix(np.eye(2))
    assert S[0, 1] == 0.0 and S[1, 0] == 0.0
    assert S[0, 0] == 1.0


def test_matches_naive_loop_n8_d5(rng):
    Z = random_unit_rows(rng, 8, 5)
    np.testing.assert_allclose(cosine_similarity_matrix(Z), naive_sim(Z), atol=1e-12, rtol=0)


@given(n=st.integers(2, 32), d=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_similarity_properties(n, d, seed):
    Z = random_unit_rows(np.random.default_rng(seed), n, d)
    S = cosine_similarity_matrix(Z)
    np.testing.assert_allclose(S, naive_sim(Z), atol=1e-12, rtol=0)
    assert np.array_equal(S, S.T)
    np.testing.assert_allclose(np.diag(S), 1.0, atol=1e-9)
    assert np.all(np.abs(S) <= 1 + 1e-9)


def test_similarity_rejects_non_unit_rows():
    with pytest.raises(ValidationError, match="row 1"):
        cosine_similarity_matrix(np.array([[1.0, 0.0], [2.0, 0.0]]))


@pytest.mark.parametrize("labels, anchor, P, N", [
    ((1, 1, 2, 2), 0, (1,), (2, 3)),
    ((1, 2, 3), 1, (), (0, 2)),
    ((1, 1, 1, 2), 2, (0, 1), (3,)),
])
def test_partition_examples(labels, anchor, P, N):
    part = partition_for_anchor(labels, anchor)
    assert part.positives == P and part.noise == N and part.anchor == anchor
    assert part.target == tuple(sorted((anchor,) + P))


def test_partition_exhaustive_small_cases():
    for n in range(2, 7):
        for labels in itertools.product(range(3), repeat=n):
            for a in range(n):
                try:
                    part = partition_for_anchor(labels, a)
                except DegenerateBatchError:
                    assert len(set(labels)) == 1
                    continue
                assert a not in part.positives and a not in part.noise
                assert set(part.positives).isdisjoint(part.noise)
                assert {a} | set(part.positives) | set(part.noise) == set(range(n))
                part.validate()


def test_partition_errors():
    with pytest.raises(DegenerateBatchError):
        partition_for_anchor([4, 4, 4], 0)
    assert partition_for_anchor([4, 4], 0, allow_empty_noise=True).noise == ()
    with pytest.raises(ValidationError):
        partition_for_anchor([0, 1], 5)


def test_partition_validate_catches_overlap():
    with pytest.raises(ValidationError):
        IndexPartition(0, (1,), (1, 2), (0, 1, 2)).validate()


def test_renormalize_examples():
    np.testing.assert_allclose(renormalize_rows([[3.0, 4.0]]), [[0.6, 0.8]], atol=1e-15)
    u = np.array([[0.6, 0.8]])
    np.testing.assert_allclose(renormalize_rows(u), u, atol=1e-15)
    with pytest.raises(ProjectionError, match="row 1"):
        renormalize_rows([[1.0, 0.0], [0.0, 0.0]])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8).filter(lambda v: np.linalg.norm(v) > 1e-6))
def test_renormalize_idempotent(v):
    once = renormalize_rows([v])
    assert abs(np.linalg.norm(once) - 1) < 1e-12
    np.testing.assert_allclose(renormalize_rows(once), once, atol=1e-12)


def test_embedding_matrix_checks():
    E = EmbeddingMatrix(np.eye(3))
    assert (E.n, E.d) == (3, 3)
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.array([[1.0, 0.0]]))
    with pytest.raises(ValidationError):
        check_unit_rows(np.array([[1.0, 1e-3], [0.0, 1.0]]))


@pytest.mark.parametrize("tau", [0.0, -1.0, float("nan")])
def test_bad_temperature(tau):
    with pytest.raises(ValidationError):
        check_tau(tau)
