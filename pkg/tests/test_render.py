import numpy as np
import pytest

from deltapath.render import (RenderConfig, render_delta, render_frame,
                              render_image, render_sequence, resolve_scene)
from deltapath import scenes


def test_render_repeatable_bitwise(cornell16):
    a = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=3)
    b = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=3)
    assert np.array_equal(a.sum, b.sum)
    c = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=4)
    assert not np.array_equal(a.sum, c.sum)


def test_thread_count_does_not_change_image(cornell16):
    a = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=5, threads=1)
    b = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=5, threads=2)
    c = render_image(cornell16, cornell16.camera, "dynamic", 8, seed=5, threads=4)
    assert np.array_equal(a.sum, b.sum)
    assert np.array_equal(a.sum, c.sum)
    assert np.array_equal(a.sum_sq, c.sum_sq)


def test_delta_pass_thread_invariance(cornell16):
    a = render_delta(cornell16, cornell16.camera, 4, seed=6, threads=1)
    b = render_delta(cornell16, cornell16.camera, 4, seed=6, threads=3)
    assert np.array_equal(a.sum_additive, b.sum_additive)
    assert np.array_equal(a.sum_subtractive, b.sum_subtractive)
    assert np.array_equal(a.stats.sum_rgb, b.stats.sum_rgb)
    assert np.array_equal(a.sum_delta_sq, b.sum_delta_sq)


def test_delta_pass_with_allocation_map(cornell16):
    w, h = cornell16.camera.resolution
    counts = np.zeros((h, w), dtype=np.int64)
    counts[4:8, 4:8] = 3
    dp = render_delta(cornell16, cornell16.camera, counts, seed=7)
    assert np.array_equal(dp.spp, counts)
    assert np.array_equal(dp.stats.count, counts)
    untouched = counts == 0
    assert np.all(dp.sum_additive[untouched] == 0.0)


def test_boost_scales_fractional_pixels(cornell16):
    w, h = cornell16.camera.resolution
    counts = np.ones((h, w), dtype=np.int64)
    boost = np.full((h, w), 0.5)
    a = render_delta(cornell16, cornell16.camera, counts, seed=8)
    b = render_delta(cornell16, cornell16.camera, counts, seed=8, boost=boost)
    assert np.allclose(b.sum_additive, 2.0 * a.sum_additive)
    assert np.allclose(b.sum_subtractive, 2.0 * a.sum_subtractive)
    # statistics stay unboosted: they describe the raw delta signal
    assert np.array_equal(a.stats.sum_rgb, b.stats.sum_rgb)


def test_hybrid_zero_budget_is_floor_only():
    cfg = RenderConfig(scene="cornell_dynamic_sphere", integrator="hybrid",
                       spp=0, seed=9, resolution=(8, 8), oracle_spp=8,
                       adaptive=True)
    res = render_frame(cfg)
    blocks = res.quantized.counts.reshape(4, 2, 4, 2).sum(axis=(1, 3))
    assert np.all(blocks >= 1)
    assert res.quantized.counts.sum() <= 16 + 4  # floor plus dither slack


def test_render_frame_spp_validation():
    cfg = RenderConfig(scene="furnace", integrator="reference-dynamic", spp=0)
    with pytest.raises(ValueError, match="spp"):
        render_frame(cfg)
    with pytest.raises(ValueError, match="unknown integrator"):
        render_frame(RenderConfig(scene="furnace", integrator="bogus"))


def test_resolution_override():
    cfg = RenderConfig(scene="furnace", integrator="reference-dynamic", spp=2,
                       resolution=(12, 10))
    res = render_frame(cfg)
    assert res.image.shape == (10, 12, 3)


def test_sequence_moves_object_and_feeds_stats():
    cfg = RenderConfig(scene="cornell_dynamic_sphere", integrator="hybrid",
                       spp=2, seed=11, resolution=(16, 16), oracle_spp=8,
                       adaptive=True)
    results = render_sequence(cfg, 3)
    assert len(results) == 3
    # frame 0 used a pilot pass; later frames reuse the previous stats
    assert results[0].sample_map is not None
    assert results[2].sample_map is not None
    # the dynamic sphere really moves between frames
    sc0, _ = resolve_scene(RenderConfig(scene="cornell_dynamic_sphere", frame=0))
    sc2, _ = resolve_scene(RenderConfig(scene="cornell_dynamic_sphere", frame=2))
    i0 = int(np.nonzero(sc0.sph_dyn)[0][0])
    i2 = int(np.nonzero(sc2.sph_dyn)[0][0])
    assert not np.array_equal(sc0.sph_center[i0], sc2.sph_center[i2])


def test_full_pipeline_determinism_hybrid():
    cfg = RenderConfig(scene="cornell_dynamic_sphere", integrator="hybrid",
                       spp=2, seed=12, resolution=(8, 8), oracle_spp=8,
                       adaptive=True, threads=1)
    a = render_frame(cfg)
    cfg2 = RenderConfig(scene="cornell_dynamic_sphere", integrator="hybrid",
                        spp=2, seed=12, resolution=(8, 8), oracle_spp=8,
                        adaptive=True, threads=2)
    b = render_frame(cfg2)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.quantized.counts, b.quantized.counts)
