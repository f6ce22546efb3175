import io

import numpy as np
import pytest

from sgdesign.designs import (
    JitterConfig,
    RngSeed,
    bin_offgrid,
    binned_mask,
    coil_point_cloud,
    jittered_selection,
    jittered_selections,
    nearest_node,
    periodic_selection,
    raster_mask,
    read_points,
    relocate_random,
    uniform_random_selection,
    write_points,
)
from sgdesign.errors import DomainError, InputError, MaskFormatError
from sgdesign.mask import GridSpec, selection_gaps
from sgdesign.spectral import sg_ratio

from oracles import nearest_node_brute


def test_periodic_examples():
    np.testing.assert_array_equal(periodic_selection(9, 3, 0), [0, 3, 6])
    np.testing.assert_array_equal(periodic_selection(5, 1, 0), [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(periodic_selection(10, 4, 1), [1, 5, 9])
    # keeping the first of every three receivers leaves about two thirds missing
    assert 1 - periodic_selection(9, 3).size / 9 == pytest.approx(2 / 3)


def test_periodic_errors():
    with pytest.raises(InputError):
        periodic_selection(9, 0)
    with pytest.raises(InputError):
        periodic_selection(9, 3, 3)


def test_relocate_identity_and_size():
    base = np.array([0, 3, 6])
    np.testing.assert_array_equal(relocate_random(base, 9, 0.0, 1), base)
    out = relocate_random(base, 9, 1.0, 1)
    assert out.size == 3
    # every original index is removed and fills come from the complement
    assert not set(out) & {0, 3, 6}


def test_relocate_rounds_down():
    base = periodic_selection(30, 3)
    out = relocate_random(base, 30, 0.25, RngSeed(4, 2))
    assert len(set(base) - set(out)) == 2  # floor(0.25 * 10)


def test_relocate_errors():
    with pytest.raises(InputError):
        relocate_random([0, 1], 4, 1.5, 0)
    with pytest.raises(DomainError):
        relocate_random([0, 1, 2], 4, 1.0, 0)


def test_relocation_lowers_sg_on_average():
    from sgdesign.experiments import RelocationGeometry

    geo = RelocationGeometry(2, 16, 3)
    base = periodic_selection(geo.n_positions, 3)
    ratios = {
        p: np.mean([sg_ratio(geo.mask(relocate_random(base, geo.n_positions, p, RngSeed(0, t)))) for t in range(8)])
        for p in (0.0, 0.5, 1.0)
    }
    assert ratios[0.0] > ratios[0.5] and ratios[0.0] > ratios[1.0]


def test_jitter_rho_one_one_per_interval():
    cfg = JitterConfig(25, 5, 1.0)
    sel = jittered_selection(cfg, 3)
    assert sel.size == 5
    assert np.array_equal(sel // 5, np.arange(5))
    assert sel.size / 25 == pytest.approx(0.2)


def test_jitter_forced_slot():
    sel = jittered_selection(JitterConfig(50, 5, 0.2), 9)
    assert np.all(sel[1::2] % 5 == 0)


def test_jitter_restricted_intervals_only_alternate():
    sels = jittered_selections(JitterConfig(50, 5, 0.4), 0, 200)
    assert np.all(sels[:, 1::2] % 5 < 2)
    assert (sels[:, 0::2] % 5).max() == 4
    all_restricted = jittered_selections(JitterConfig(50, 5, 0.4, restrict_alternate_only=False), 0, 200)
    assert (all_restricted % 5).max() == 1


def test_jitter_config_validation():
    with pytest.raises(InputError):
        JitterConfig(26, 5)
    with pytest.raises(InputError):
        JitterConfig(25, 5, 0.0)
    tail = JitterConfig(27, 5, partial_tail=True)
    sel = jittered_selection(tail, 0)
    assert sel.size == 6 and sel[-1] in (25, 26)


def test_jitter_gap_bound_rho_one():
    for seed in range(50):
        sel = jittered_selection(JitterConfig(100, 5, 1.0), seed)
        gaps = selection_gaps(sel)
        assert gaps.size == 0 or gaps.max() <= 2 * 5 - 2


def test_uniform_random_selection():
    np.testing.assert_array_equal(uniform_random_selection(10, 10, 0), np.arange(10))
    assert uniform_random_selection(10, 0, 0).size == 0
    a = uniform_random_selection(100, 30, RngSeed(5, 1))
    b = uniform_random_selection(100, 30, RngSeed(5, 1))
    np.testing.assert_array_equal(a, b)
    assert a.size == 30 and np.unique(a).size == 30
    with pytest.raises(InputError):
        uniform_random_selection(10, 11, 0)


def test_rng_seed_streams():
    a = RngSeed(1, 2).generator().random(4)
    b = RngSeed(1, 2).generator().random(4)
    c = RngSeed(1, 3).generator().random(4)
    d = RngSeed(1, 2).generator(7).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    with pytest.raises(InputError):
        RngSeed(-1)


def test_raster_mask():
    mask = raster_mask(3, 4, [0, 5, 11])
    assert mask.entries() == [(0, 0), (1, 1), (2, 3)]


def test_bin_on_node_and_midpoint():
    grid = GridSpec((0.0, 0.0), (10.0, 10.0), (5, 5))
    res = bin_offgrid([[20.0, 30.0]], grid)
    np.testing.assert_array_equal(res.nodes, [[2, 3]])
    res = bin_offgrid([[15.0, 15.0]], grid)
    np.testing.assert_array_equal(res.nodes, [[1, 1]])


def test_bin_drop_and_duplicates():
    grid = GridSpec((0.0, 0.0), (10.0, 10.0), (3, 3))
    res = bin_offgrid([[0.0, 0.0], [1.0, -1.0], [26.0, 0.0], [0.0, -5.0]], grid)
    assert res.dropped == 1
    assert res.duplicates == 2
    np.testing.assert_array_equal(res.nodes, [[0, 0]])


def test_nearest_node_matches_brute_force():
    rng = np.random.default_rng(1)
    vals = np.concatenate([rng.uniform(-20, 120, 400), np.arange(-10, 111, 5.0)])
    got = nearest_node(vals, 0.0, 10.0, 11)
    want = [nearest_node_brute(v, 0.0, 10.0, 11) for v in vals]
    np.testing.assert_array_equal(got, want)


def test_bin_errors():
    grid = GridSpec((0.0, 0.0), (10.0, 10.0), (3, 3))
    with pytest.raises(InputError):
        bin_offgrid([[np.nan, 0.0]], grid)
    with pytest.raises(DomainError):
        GridSpec((0.0,), (1.0,), (0,))


def test_coil_cloud_distinct_masks_by_spacing():
    pts = coil_point_cloud(RngSeed(0))
    assert pts.shape[1] == 2 and np.all((pts >= 0) & (pts <= 10_000))
    ratios = []
    for sp in (50.0, 100.0, 200.0):
        grid = GridSpec.covering((0.0, 0.0), (10_000.0, 10_000.0), (sp, sp))
        mask, _ = binned_mask(pts, grid)
        ratios.append(sg_ratio(mask))
    assert len(set(np.round(ratios, 12))) == 3
    np.testing.assert_array_equal(pts, coil_point_cloud(RngSeed(0)))


def test_points_round_trip():
    pts = np.array([[0.5, 1.25], [1e3, -2.0]])
    buf = io.StringIO()
    write_points(pts, buf)
    buf.seek(0)
    np.testing.assert_array_equal(read_points(buf), pts)
    with pytest.raises(MaskFormatError):
        read_points(io.StringIO("nope\n1 2\n"))
    with pytest.raises(MaskFormatError):
        read_points(io.StringIO("sg-points v1\n1 2 3\n"))
