import math

import numpy as np
import pytest

from sgdesign.errors import DomainError
from sgdesign.mask import SamplingMask
from sgdesign.spectral import connected_components, dense_svd_oracle, sg_ratio, top_two_singular_values

from oracles import gram_singular_values


def block_diag_ones(*sizes):
    n = sum(a for a, _ in sizes)
    m = sum(b for _, b in sizes)
    dense = np.zeros((n, m), dtype=bool)
    i = j = 0
    for a, b in sizes:
        dense[i : i + a, j : j + b] = True
        i, j = i + a, j + b
    return SamplingMask.from_dense(dense)


def test_identity_values():
    s = top_two_singular_values(SamplingMask.identity(4))
    assert s.sigma1 == pytest.approx(1.0, abs=1e-12)
    assert s.sigma2 == pytest.approx(1.0, abs=1e-12)
    assert s.converged


def test_all_ones_values():
    s = top_two_singular_values(SamplingMask.full(3, 5))
    assert s.sigma1 == pytest.approx(math.sqrt(15), rel=1e-12)
    assert s.sigma2 == pytest.approx(0.0, abs=1e-12)


def test_random_mask_against_oracles():
    rng = np.random.default_rng(11)
    dense = rng.random((200, 150)) < 0.3
    mask = SamplingMask.from_dense(dense)
    s = top_two_singular_values(mask)
    ref = dense_svd_oracle(mask)
    gram = gram_singular_values(dense)
    assert s.sigma1 == pytest.approx(ref[0], rel=1e-8)
    assert s.sigma2 == pytest.approx(ref[1], rel=1e-8)
    assert ref[:2] == pytest.approx(gram[:2], rel=1e-8)


@pytest.mark.parametrize("n", [2, 5, 17])
def test_sg_ratio_identity_and_full(n):
    assert sg_ratio(SamplingMask.identity(n)) == pytest.approx(1.0, abs=1e-12)
    assert sg_ratio(SamplingMask.full(n, n + 3)) == pytest.approx(0.0, abs=1e-12)


def test_equal_blocks_ratio_one():
    assert sg_ratio(block_diag_ones((3, 4), (4, 3))) == pytest.approx(1.0, abs=1e-12)


def test_empty_mask_rejected():
    with pytest.raises(DomainError, match="sigma1 is zero"):
        sg_ratio(SamplingMask.from_flat(3, 3, []))


def test_dense_oracle_examples():
    np.testing.assert_allclose(dense_svd_oracle(SamplingMask.full(2, 2)), [2, 0], atol=1e-12)
    np.testing.assert_allclose(dense_svd_oracle(SamplingMask.identity(3)), [1, 1, 1], atol=1e-12)
    L = SamplingMask.from_dense([[1, 1], [1, 0]])
    # characteristic polynomial of M^T M = [[2, 1], [1, 1]]: x^2 - 3x + 1
    expected = [math.sqrt((3 + math.sqrt(5)) / 2), math.sqrt((3 - math.sqrt(5)) / 2)]
    np.testing.assert_allclose(dense_svd_oracle(L), expected, rtol=1e-12)


def test_dense_oracle_size_guard():
    with pytest.raises(DomainError):
        dense_svd_oracle(SamplingMask.identity(10), max_size=50)


def test_components_examples():
    assert connected_components(SamplingMask.full(3, 3))[:] == (1, 0, 0)
    assert connected_components(SamplingMask.identity(3)).n_components == 3
    assert connected_components(block_diag_ones((2, 2), (1, 3))).n_components == 2
    empty = connected_components(SamplingMask.from_flat(2, 3, []))
    assert empty == (0, 2, 3)
    c = connected_components(SamplingMask.from_dense([[1, 0, 0], [0, 0, 0]]))
    assert c == (1, 1, 2)


def test_summary_invariants():
    rng = np.random.default_rng(5)
    for _ in range(10):
        dense = rng.random((30, 20)) < 0.2
        if not dense.any():
            continue
        mask = SamplingMask.from_dense(dense)
        s = top_two_singular_values(mask)
        assert s.sigma1 >= s.sigma2 >= 0
        assert s.sg_ratio == pytest.approx(s.sigma2 / s.sigma1)
        assert math.sqrt(mask.nnz / min(mask.shape)) <= s.sigma1 * (1 + 1e-12)
        assert s.sigma1 <= math.sqrt(30 * 20)


def test_trim_empty_does_not_change_values():
    dense = np.zeros((6, 7), dtype=bool)
    dense[[0, 2, 5]] = np.array([1, 0, 1, 1, 0, 0, 1], dtype=bool)
    dense[2, 1] = True
    mask = SamplingMask.from_dense(dense)
    a = top_two_singular_values(mask)
    b = top_two_singular_values(mask, trim_empty=True)
    assert b.sigma1 == pytest.approx(a.sigma1, rel=1e-10)
    assert b.sigma2 == pytest.approx(a.sigma2, rel=1e-10, abs=1e-12)


def test_non_convergence_is_flagged():
    rng = np.random.default_rng(2)
    mask = SamplingMask.from_dense(rng.random((120, 100)) < 0.1)
    s = top_two_singular_values(mask, max_iter=2)
    assert not s.converged
    assert s.sigma1 > 0


def test_deterministic():
    rng = np.random.default_rng(9)
    mask = SamplingMask.from_dense(rng.random((50, 40)) < 0.3)
    assert top_two_singular_values(mask).as_dict() == top_two_singular_values(mask).as_dict()
