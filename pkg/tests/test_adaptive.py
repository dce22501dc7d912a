import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st

from deltapath.adaptive import (PixelStats, SampleMap, boost_compensate,
                                dither_quantize, estimate_map)


def stats_from_lum(lum_drive):
    """Stats whose sigma+|mean| luminance drive equals `lum_drive` exactly.

    Two samples of +/- v have std sqrt(2)*v and mean 0; instead use a
    direct construction: mean |lum| = drive with zero variance (count 1).
    """
    drive = np.asarray(lum_drive, dtype=np.float64)
    st = PixelStats.zeros(drive.shape)
    st.count[...] = 1.0
    st.sum_abs_lum[...] = drive
    return st


def test_uniform_stats_give_uniform_map():
    st_ = stats_from_lum(np.full((8, 8), 2.5))
    m = estimate_map(st_, 4.0)
    assert m.s == pytest.approx(np.full((8, 8), 4.0))
    assert m.mean == pytest.approx(4.0, abs=1e-6)


def test_two_pixel_proportional_allocation():
    # direct evaluation of the allocation rule: drives (1, 3) with target
    # mean 2 split as (1, 3)
    st_ = stats_from_lum(np.array([[1.0, 3.0]]))
    m = estimate_map(st_, 2.0, blur=False, floor=False)
    assert m.s == pytest.approx(np.array([[1.0, 3.0]]))


def test_degenerate_all_zero_stats_fall_back_to_uniform():
    st_ = PixelStats.zeros((6, 6))
    m = estimate_map(st_, 3.0)
    assert m.s == pytest.approx(np.full((6, 6), 3.0))


def test_hot_pixel_blur_support_and_mean():
    drive = np.zeros((64, 64))
    drive[32, 32] = 100.0
    st_ = stats_from_lum(drive)
    m = estimate_map(st_, 2.0)
    assert m.mean == pytest.approx(2.0, abs=1e-6)
    inside = np.zeros((64, 64), dtype=bool)
    inside[30:35, 30:35] = True
    # everything beyond the 5-tap blur support holds only the floor share
    outside_max = m.s[~inside].max()
    assert m.s[inside].sum() > 0.5 * m.s.sum()
    assert outside_max <= 1.0 + 1e-9


def test_map_mean_survives_blur_and_floor():
    gen = np.random.Generator(np.random.PCG64(1))
    st_ = stats_from_lum(gen.random((32, 32)) ** 4 * 50)
    for target in (0.5, 1.0, 4.0):
        m = estimate_map(st_, target)
        assert m.mean == pytest.approx(target, abs=1e-6)


def test_floor_every_block_gets_one_sample():
    drive = np.zeros((16, 16))
    drive[2, 2] = 1000.0
    st_ = stats_from_lum(drive)
    m = estimate_map(st_, 1.0)
    blocks = m.s.reshape(8, 2, 8, 2).sum(axis=(1, 3))
    assert np.all(blocks >= 1.0 - 1e-9)


def test_exact_integers_never_round_away():
    m = SampleMap(s=np.full((4, 4), 2.0), target=2.0)
    for frame in range(20):
        q = dither_quantize(m, frame=frame, seed=frame)
        assert np.all(q.counts == 2)


def test_dither_distribution_and_expectation():
    m = SampleMap(s=np.full((100, 1000), 1.3), target=1.3)
    q = dither_quantize(m, seed=9)
    vals, counts = np.unique(q.counts, return_counts=True)
    assert set(vals) <= {1, 2}
    frac2 = counts[vals == 2].sum() / q.counts.size
    assert frac2 == pytest.approx(0.3, abs=0.01)
    assert q.counts.mean() == pytest.approx(1.3, abs=0.01)


def test_dither_keyed_by_frame_and_seed():
    m = SampleMap(s=np.full((8, 8), 0.5), target=0.5)
    a = dither_quantize(m, frame=0, seed=1)
    b = dither_quantize(m, frame=0, seed=1)
    c = dither_quantize(m, frame=1, seed=1)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_quarter_allocation_floor_yields_one_per_block():
    # allocation 0.25 under the floor scheme: the block winner carries a
    # full sample, so each 2x2 block renders exactly one
    st_ = PixelStats.zeros((8, 8))
    m = estimate_map(st_, 0.25)
    q = dither_quantize(m, seed=4)
    blocks = q.counts.reshape(4, 2, 4, 2).sum(axis=(1, 3))
    assert np.all(blocks >= 1)


def test_boost_identity_above_one():
    out = boost_compensate(np.array([0.5, 0.0, 0.0]), 2.0)
    assert out == pytest.approx([0.5, 0.0, 0.0])


def test_boost_amplifies_fractional_allocation():
    out = boost_compensate(np.array([0.5, 0.0, 0.0]), 0.25)
    assert out == pytest.approx([2.0, 0.0, 0.0])


def test_boost_rejects_zero_allocation():
    with pytest.raises(ValueError, match="positive"):
        boost_compensate(np.array([1.0, 1.0, 1.0]), 0.0)


def test_boost_unbiased_by_exhaustive_enumeration():
    # four pixels with fractional and integral allocations; enumerate the
    # dither outcomes exactly: E[mean of boosted samples] must equal the
    # per-pixel expected delta for every pixel
    s_values = np.array([0.25, 0.6, 1.0, 2.4])
    expected_value = 0.7  # every sample of the toy pixel returns this
    for s in s_values:
        lo = int(np.floor(s))
        p_hi = s - lo
        outcomes = [(lo, 1.0 - p_hi), (lo + 1, p_hi)]
        boosted = boost_compensate(np.array([expected_value] * 3), s)[0]
        est = 0.0
        for count, prob in outcomes:
            if prob == 0.0 or count == 0:
                continue  # zero samples contribute an estimate of zero
            est += prob * boosted  # mean of `count` identical boosted samples
        # E[estimate] = P(count>=1) * boosted value; for s < 1 this is
        # s * value/s = value, for s >= 1 it is exactly the value
        assert est == pytest.approx(expected_value, abs=1e-12), f"s={s}"


def test_boost_unbiased_with_random_samples():
    # same enumeration but with a nonconstant sample distribution: the
    # estimator mean over dither randomness and sample noise must match
    gen = np.random.Generator(np.random.PCG64(5))
    true_mean = 0.3
    for s in (0.2, 0.45, 0.8):
        n = 200_000
        u = gen.random(n)
        fired = u < s  # dither gives one sample with probability s
        samples = gen.normal(true_mean, 0.1, size=n)
        est = np.where(fired, samples / min(1.0, s), 0.0)
        assert est.mean() == pytest.approx(true_mean, abs=5e-3)


@given(st.floats(0.01, 8.0))
@hsettings(max_examples=60, deadline=None)
def test_dither_expectation_property(s):
    m = SampleMap(s=np.full((32, 32), s), target=s)
    q = dither_quantize(m, seed=11)
    assert q.counts.mean() == pytest.approx(s, abs=0.06)
    assert np.all(q.counts >= np.floor(s))
    assert np.all(q.counts <= np.ceil(s) + (1 if s == np.floor(s) else 0))


def test_stats_accumulate_and_moments():
    st_ = PixelStats.zeros((2, 2))
    vals = np.array([[1.0, 1.0, 1.0], [3.0, 3.0, 3.0], [2.0, 2.0, 2.0]])
    st_.accumulate(np.array([0, 0, 3]), vals)
    assert st_.count[0, 0] == 2 and st_.count[1, 1] == 1
    assert st_.mean()[0, 0] == pytest.approx([2.0, 2.0, 2.0])
    assert st_.std_lum()[0, 0] == pytest.approx(np.sqrt(2.0), rel=1e-9)
    assert st_.std_lum()[1, 1] == 0.0  # single sample: no variance estimate
