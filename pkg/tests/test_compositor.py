import numpy as np
import pytest

from conftest import combined_se_z, render_mean
from deltapath import scenes
from deltapath.compositor import (FrameBuffers, build_mask, clamp_for_output,
                                  compose_hybrid, compute_metrics)
from deltapath.field import OracleStaticField
from deltapath.render import (RenderConfig, render_delta, render_frame,
                              static_image_from_field)


def toy_buffers(h=4, w=4, mask_value=1.0):
    gen = np.random.Generator(np.random.PCG64(2))
    return FrameBuffers(
        static_image=gen.random((h, w, 3)),
        sum_additive=gen.random((h, w, 3)),
        sum_subtractive=gen.random((h, w, 3)),
        spp=np.ones((h, w), dtype=np.int64),
        mask=np.full((h, w), mask_value))


def test_masked_pixel_only_additive_survives():
    b = toy_buffers()
    b.mask[1, 2] = 0.0
    out = compose_hybrid(b, masked=True)
    assert out[1, 2] == pytest.approx(b.sum_additive[1, 2])
    # perturbing the cached static image cannot change that pixel
    b.static_image[1, 2] = 1e6
    b.sum_subtractive[1, 2] = -1e6
    out2 = compose_hybrid(b, masked=True)
    assert np.array_equal(out[1, 2], out2[1, 2])


def test_unmasked_uses_all_three_terms():
    b = toy_buffers()
    out = compose_hybrid(b, masked=False)
    want = b.static_image - b.sum_subtractive + b.sum_additive
    assert out == pytest.approx(want)


def test_compose_linearity_pre_clamp():
    b = toy_buffers()
    b.mask[0, 0] = 0.0
    out1 = compose_hybrid(b, masked=True)
    b2 = FrameBuffers(static_image=3.0 * b.static_image,
                      sum_additive=3.0 * b.sum_additive,
                      sum_subtractive=3.0 * b.sum_subtractive,
                      spp=b.spp, mask=b.mask)
    out3 = compose_hybrid(b2, masked=True)
    assert out3 == pytest.approx(3.0 * out1, rel=1e-12)


def test_negative_values_survive_until_output_clamp():
    b = toy_buffers()
    b.sum_subtractive[...] = 5.0
    out = compose_hybrid(b, masked=False)
    assert out.min() < 0.0
    assert clamp_for_output(out).min() == 0.0


def test_resolution_mismatch_rejected():
    b = toy_buffers()
    b.static_image = np.zeros((8, 8, 3))
    with pytest.raises(ValueError, match="resolutions differ"):
        compose_hybrid(b)


def test_mask_zero_exactly_on_dynamic_first_hits():
    sc = scenes.cornell_dynamic_sphere((32, 32))
    mask, gb = build_mask(sc, sc.camera)
    # rasterization oracle: per pixel center, an analytic ray-sphere test
    # against the one dynamic sphere versus the nearest static surface
    w, h = sc.camera.resolution
    py, px = np.divmod(np.arange(h * w), w)
    o, d = sc.camera.rays(px, py)
    c = np.array([0.55, 1.35, 0.45])
    r = 0.22
    oc = o - c
    bq = (oc * d).sum(axis=1)
    cq = (oc * oc).sum(axis=1) - r * r
    disc = bq * bq - cq
    t_sphere = np.where(disc >= 0, -bq - np.sqrt(np.maximum(disc, 0)), np.inf)
    t_static = sc.intersect_batch(o, d, "skip_dynamic").t
    covered = np.isfinite(t_sphere) & (t_sphere < t_static)
    assert np.array_equal(mask.ravel() == 0.0, covered)
    assert 0 < covered.sum() < 0.1 * covered.size  # small footprint


def test_mask_all_ones_without_dynamic():
    sc = scenes.cornell_static((16, 16))
    mask, _ = build_mask(sc, sc.camera)
    assert np.all(mask == 1.0)


def test_no_dynamic_content_passthrough():
    # without dynamic content the hybrid image is the cached static image
    cfg = RenderConfig(scene="cornell_static", integrator="hybrid", spp=2,
                       seed=4, resolution=(8, 8), oracle_spp=8)
    res = render_frame(cfg)
    assert np.array_equal(res.buffers.sum_additive, np.zeros_like(res.buffers.sum_additive))
    assert np.array_equal(res.buffers.sum_subtractive,
                          np.zeros_like(res.buffers.sum_subtractive))
    assert np.array_equal(res.image, res.buffers.static_image)


def test_masked_and_unmasked_agree_with_oracle_cache():
    # with an exact (oracle) cache the masked composite loses nothing:
    # both composites estimate the same image
    sc = scenes.cornell_dynamic_sphere((16, 16))
    cam = sc.camera
    mask, gb = build_mask(sc, cam)
    backend = OracleStaticField(sc, spp=1024, seed=77)
    static_img = static_image_from_field(backend, gb, mask, scene=sc, camera=cam)
    dp = render_delta(sc, cam, 1024, seed=5)
    spp = np.maximum(dp.spp, 1)

    bufs = FrameBuffers(static_image=static_img,
                        sum_additive=dp.sum_additive,
                        sum_subtractive=dp.sum_subtractive,
                        spp=dp.spp, mask=mask)
    masked_img = compose_hybrid(bufs, masked=True)
    unmasked_img = compose_hybrid(bufs, masked=False)

    # cache noise per pixel, from the oracle itself
    cache_se = np.zeros_like(static_img)
    sel = (mask > 0.5) & gb.hit
    _, se_vals = backend.query_batch(gb.position[sel], gb.direction[sel],
                                     gb.normal[sel], with_se=True)
    cache_se[sel] = se_vals

    ref, ref_se = render_mean(sc, "dynamic", 2048, seed=99)
    se = np.sqrt(ref_se ** 2 + dp.delta_std_error() ** 2 + cache_se ** 2)
    for img in (masked_img, unmasked_img):
        z = np.abs(img - ref) / np.maximum(3 * se, 1e-9)
        assert (z > 1).mean() < 0.01, f"{(z > 1).mean():.4f} beyond 3 SE"


def test_metrics_identities():
    img = np.zeros((4, 4, 3))
    ref = np.zeros((4, 4, 3))
    m = compute_metrics(img, ref)
    assert m.mse == 0.0 and m.rel_mse == 0.0
    img2 = img.copy()
    img2[1, 2, 0] += 1.0
    m2 = compute_metrics(img2, ref)
    assert m2.mse == pytest.approx(1.0 / (3 * 16))


def test_rel_mse_cross_checked_against_scalar_loop():
    gen = np.random.Generator(np.random.PCG64(7))
    img = gen.random((5, 6, 3))
    ref = gen.random((5, 6, 3))
    m = compute_metrics(img, ref, rel_eps=0.01)
    acc = 0.0
    for y in range(5):
        for x in range(6):
            for c in range(3):
                acc += (img[y, x, c] - ref[y, x, c]) ** 2 / (ref[y, x, c] ** 2 + 0.01)
    assert m.rel_mse == pytest.approx(acc / (5 * 6 * 3), rel=1e-12)


def test_metrics_region_breakdown():
    img = np.zeros((2, 2, 3))
    ref = np.zeros((2, 2, 3))
    img[0, 0] = 1.0  # error only in the masked-out pixel
    mask = np.ones((2, 2))
    mask[0, 0] = 0.0
    m = compute_metrics(img, ref, mask=mask)
    assert m.n_unmasked == 1 and m.n_masked == 3
    assert m.mse_unmasked == pytest.approx(1.0)
    assert m.mse_masked == 0.0


def test_metrics_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        compute_metrics(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)))
