"""Property-based checks of the invariants each module promises."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgdesign.completion import snr
from sgdesign.config import dumps_config, parse_config
from sgdesign.designs import JitterConfig, jittered_selection, periodic_selection, relocate_random
from sgdesign.mask import (
    MatricizationMap,
    SamplingMask,
    dumps_mask,
    loads_mask,
    sampling_percentage,
    selection_gaps,
    src_rec_mask,
)
from sgdesign.spectral import dense_svd_oracle, top_two_singular_values

SETTINGS = settings(max_examples=40, deadline=None)


@st.composite
def masks(draw, max_side=12):
    n = draw(st.integers(1, max_side))
    m = draw(st.integers(1, max_side))
    dense = draw(arrays(bool, (n, m)))
    if not dense.any():
        dense[draw(st.integers(0, n - 1)), draw(st.integers(0, m - 1))] = True
    return SamplingMask.from_dense(dense)


@SETTINGS
@given(masks(), st.randoms(use_true_random=False))
def test_permutation_invariance(mask, rnd):
    rp = list(range(mask.n))
    cp = list(range(mask.m))
    rnd.shuffle(rp)
    rnd.shuffle(cp)
    a = top_two_singular_values(mask)
    b = top_two_singular_values(mask.permute(rp, cp))
    assert math.isclose(a.sigma1, b.sigma1, rel_tol=1e-8)
    assert math.isclose(a.sigma2, b.sigma2, rel_tol=1e-8, abs_tol=1e-10)


@SETTINGS
@given(masks())
def test_transpose_invariance(mask):
    assert math.isclose(
        top_two_singular_values(mask).sg_ratio,
        top_two_singular_values(mask.transpose()).sg_ratio,
        rel_tol=1e-8,
        abs_tol=1e-10,
    )


@SETTINGS
@given(masks())
def test_scale_bound_and_oracle(mask):
    s = top_two_singular_values(mask)
    assert math.sqrt(mask.nnz / min(mask.shape)) <= s.sigma1 * (1 + 1e-10)
    assert s.sigma1 <= math.sqrt(mask.n * mask.m) * (1 + 1e-12)
    ref = dense_svd_oracle(mask)
    assert math.isclose(s.sigma1, ref[0], rel_tol=1e-8)
    second = ref[1] if ref.size > 1 else 0.0
    assert math.isclose(s.sigma2, second, rel_tol=1e-8, abs_tol=1e-10)


@SETTINGS
@given(st.integers(2, 4), st.integers(1, 4), st.integers(1, 4))
def test_equal_blocks_give_ratio_one(k, a, b):
    dense = np.kron(np.eye(k, dtype=bool), np.ones((a, b), dtype=bool))
    ratio = top_two_singular_values(SamplingMask.from_dense(dense)).sg_ratio
    assert abs(ratio - 1.0) <= 1e-12


@SETTINGS
@given(masks(max_side=20))
def test_serialization_round_trip(mask):
    text = dumps_mask(mask)
    back = loads_mask(text)
    assert back == mask and dumps_mask(back) == text
    assert 0.0 <= sampling_percentage(mask) <= 1.0


@SETTINGS
@given(
    st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.data(),
)
def test_src_rec_count_is_product(nsx, nrx, nsy, nry, data):
    mmap = MatricizationMap(nsx, nrx, nsy, nry)
    sets = [
        data.draw(st.sets(st.integers(0, size - 1), min_size=1))
        for size in (nsx, nrx, nsy, nry)
    ]
    mask = src_rec_mask(mmap, *sets)
    assert mask.nnz == math.prod(len(s) for s in sets)


@SETTINGS
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 4), st.integers(1, 5), st.data())
def test_matricization_round_trip(nsx, nrx, nsy, nry, data):
    mmap = MatricizationMap(nsx, nrx, nsy, nry)
    t = (
        data.draw(st.integers(0, nsx - 1)),
        data.draw(st.integers(0, nrx - 1)),
        data.draw(st.integers(0, nsy - 1)),
        data.draw(st.integers(0, nry - 1)),
    )
    row, col = mmap.to_matrix(*t)
    assert 0 <= row < mmap.shape[0] and 0 <= col < mmap.shape[1]
    assert tuple(int(v) for v in mmap.from_matrix(row, col)) == t


@SETTINGS
@given(st.integers(1, 30), st.integers(1, 8), st.integers(0, 2**32))
def test_jitter_gap_bound_and_count(n_int, L, seed):
    sel = jittered_selection(JitterConfig(n_int * L, L, 1.0), seed)
    assert sel.size == n_int
    gaps = selection_gaps(sel)
    assert gaps.size == 0 or gaps.max() <= 2 * L - 2


@SETTINGS
@given(
    st.integers(4, 60),
    st.integers(2, 5),
    st.floats(0, 1),
    st.integers(0, 2**32),
)
def test_relocation_conserves_size(n, k, p, seed):
    base = periodic_selection(n, min(k, n))
    if base.size > n - base.size:
        base = base[: n // 2]
    out = relocate_random(base, n, p, seed)
    assert out.size == base.size
    assert np.unique(out).size == out.size and out.min() >= 0 and out.max() < n
    np.testing.assert_array_equal(out, relocate_random(base, n, p, seed))


@SETTINGS
@given(
    arrays(float, (4, 5), elements=st.floats(-10, 10)).filter(lambda a: np.linalg.norm(a) > 1e-3),
    st.integers(0, 2**32),
    st.sampled_from([1.0, 0.1, 0.01]),
)
def test_snr_identity(X, seed, alpha):
    E = np.random.default_rng(seed).standard_normal(X.shape)
    E *= np.linalg.norm(X) / np.linalg.norm(E)
    assert math.isclose(snr(X + alpha * E, X), -20 * math.log10(alpha), abs_tol=1e-9)


@SETTINGS
@given(
    st.dictionaries(
        st.from_regex(r"[a-z_]{1,8}", fullmatch=True),
        st.one_of(st.integers(-1000, 1000), st.booleans(), st.floats(allow_nan=False, allow_infinity=False)),
        max_size=6,
    )
)
def test_config_round_trip(values):
    parsed = parse_config(dumps_config(values))
    assert set(parsed) == set(values)
    for k, v in values.items():
        text = parsed[k]
        if isinstance(v, bool):
            assert text == ("true" if v else "false")
        else:
            assert type(v)(text) == v
